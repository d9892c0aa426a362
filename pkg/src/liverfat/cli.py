"""Command-line pipeline: cohort generation, preprocessing, the atlas
baseline, network cross-validation/inference and the comparison report.

Every stage reads and writes plain files (RVF volumes, PGM images, CSV
tables, SVG plots) and records content hashes in a manifest, so reruns
with unchanged inputs are byte-identical and resumable. Fat-fraction
values in CSV files are percentage points.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import phantom as ph
from . import rvf
from .atlas import (
    MeasurementFailure,
    Template,
    apply_calibration,
    atlas_measure,
    fit_calibration,
    make_template,
    prepare_subject_volumes,
    CalibrationModel,
)
from .preprocess import compose_input, crop_windows, fat_fraction, body_mask, read_pgm, write_pgm
from .regressor import make_cv_plan, predict, save_model, load_model, train, write_train_log
from .stats import PairedMeasurements, bland_altman_svg, compute_report, write_metrics_csv
from .study import ConfigError, StudyConfig, load_study_config, make_splits
from .volume import StationStack, fuse_stations, resample


class ValidationError(ValueError):
    pass


class RuntimeFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers


def _write_manifest(out_dir: Path) -> None:
    lines = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.txt":
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            lines.append(f"{digest}  {p.relative_to(out_dir).as_posix()}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _map_subjects(fn, items, workers: int):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _read_csv(path: Path) -> list[dict]:
    if not path.is_file():
        raise ValidationError(f"missing file: {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _load_truth(cohort_dir: Path) -> dict[str, dict]:
    return {r["subject_id"]: r for r in _read_csv(cohort_dir / "truth.csv")}


def _load_splits(cohort_dir: Path):
    rows = _read_csv(cohort_dir / "splits.csv")
    a = [r["subject_id"] for r in rows if r["split"] == "A"]
    b = [r["subject_id"] for r in rows if r["split"] == "B"]
    c = [r["subject_id"] for r in rows if r["in_c"] == "1"]
    return a, b, c


def _read_station_stacks(cohort_dir: Path, subject_id: str):
    paths = sorted(cohort_dir.glob(f"{subject_id}_s*.rvf"))
    if not paths:
        raise ValidationError(f"no station files for {subject_id} in {cohort_dir}")
    waters, fats, offsets = [], [], []
    for p in paths:
        channels = rvf.read_rvf(p)
        if len(channels) != 2:
            raise ValidationError(f"{p}: expected 2 channels (water, fat)")
        waters.append(channels[0])
        fats.append(channels[1])
        offsets.append(channels[0].origin[2])
    return StationStack(waters, offsets), StationStack(fats, offsets)


# ---------------------------------------------------------------- cohort

_GEN_CTX: dict = {}


def _gen_one(args):
    cohort_spec, params, out_dir = args
    subject = ph.build_subject(cohort_spec, params)
    for k, (w, f) in enumerate(zip(subject.water.stations, subject.fat.stations)):
        rvf.write_rvf(Path(out_dir) / f"{subject.subject_id}_s{k}.rvf", [w, f])
    return (
        subject.subject_id,
        subject.truth.liver_ff * 100.0,
        subject.reference_ff * 100.0,
    )


def _template_params(cohort: ph.CohortSpec, count: int) -> list[ph.SubjectParams]:
    # Templates get their own stream and wider liver-shape variation.
    out = []
    for i in range(count):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=cohort.seed, spawn_key=(999, i))
        )
        out.append(
            ph.SubjectParams(
                index=i,
                subject_id=f"template_{i:02d}",
                liver_ff=float(rng.uniform(cohort.ff_low, cohort.ff_high)),
                torso_scale=float(rng.uniform(0.94, 1.06)),
                liver_scale=tuple(rng.uniform(0.94, 1.06, 3)),
                liver_shift=tuple(rng.uniform(-3.0, 3.0, 3)),
                seed=int(rng.integers(0, 2**63 - 1)),
            )
        )
    return out


def cmd_cohort_generate(cfg: StudyConfig, out_dir: Path, workers: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    params = ph.draw_cohort_params(cfg.cohort)
    rows = _map_subjects(
        _gen_one, [(cfg.cohort, p, str(out_dir)) for p in params], workers
    )
    _write_csv(
        out_dir / "truth.csv",
        ["subject_id", "liver_ff", "reference_roi_ff"],
        [[sid, f"{ff:.6f}", f"{ref:.6f}"] for sid, ff, ref in rows],
    )
    split_of, c_ids = make_splits([r[0] for r in rows], cfg.split)
    _write_csv(
        out_dir / "splits.csv",
        ["subject_id", "split", "in_c"],
        [
            [sid, split_of[sid], "1" if sid in c_ids else "0"]
            for sid in sorted(split_of)
        ],
    )

    tdir = out_dir / "templates"
    tdir.mkdir(exist_ok=True)
    for p in _template_params(cfg.cohort, cfg.template_count):
        subject = ph.build_subject(cfg.cohort, p)
        template = make_template(
            p.subject_id, subject.water, subject.fat,
            subject.truth.liver_mask, cfg.resample,
        )
        rvf.write_rvf(
            tdir / f"{p.subject_id}.rvf",
            [template.water_ff, template.fat_ff, template.liver_seg.as_volume()],
        )
    _write_manifest(out_dir)
    print(f"cohort: {len(rows)} subjects, {cfg.template_count} templates -> {out_dir}")
    return 0


# ------------------------------------------------------------ preprocess

def _prep_one(args):
    cohort_dir, subject_id, resample_spec, layout, out_dir = args
    try:
        water_stack, fat_stack = _read_station_stacks(Path(cohort_dir), subject_id)
        water = resample(fuse_stations(water_stack), resample_spec)
        fat = resample(fuse_stations(fat_stack), resample_spec)
        mask = body_mask(water, fat)
        ff = fat_fraction(water, fat)
        info = crop_windows(mask, layout)
        img = compose_input(ff, mask, layout)
        write_pgm(img, Path(out_dir) / f"{subject_id}.pgm")
        return (subject_id, info, None)
    except (ValueError, OSError) as exc:
        return (subject_id, None, str(exc))


def cmd_preprocess_run(cfg: StudyConfig, cohort_dir: Path, out_dir: Path, workers: int) -> int:
    truth = _load_truth(cohort_dir)
    if not truth:
        raise ValidationError(f"no subjects listed in {cohort_dir / 'truth.csv'}")
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = _map_subjects(
        _prep_one,
        [
            (str(cohort_dir), sid, cfg.resample, cfg.layout, str(out_dir))
            for sid in sorted(truth)
        ],
        workers,
    )
    elapsed = time.perf_counter() - t0
    ok_rows, failures = [], []
    for sid, info, err in results:
        if err is not None:
            failures.append((sid, err))
        else:
            ok_rows.append(
                [
                    sid,
                    info.coronal_y,
                    info.sagittal_x,
                    info.coronal_x_start,
                    info.sagittal_y_start,
                    info.z_rows,
                    info.width,
                ]
            )
    _write_csv(
        out_dir / "prep_index.csv",
        [
            "subject_id",
            "coronal_y",
            "sagittal_x",
            "coronal_x_start",
            "sagittal_y_start",
            "z_rows",
            "crop_width",
        ],
        ok_rows,
    )
    _write_manifest(out_dir)
    print(
        f"preprocess: {len(ok_rows)} subjects ok, {len(failures)} failed, "
        f"{elapsed / max(len(results), 1):.3f} s/subject"
    )
    if failures:
        for sid, err in failures:
            print(f"  FAILED {sid}: {err}", file=sys.stderr)
        raise RuntimeFailure(f"{len(failures)} subjects failed preprocessing")
    return 0


# ----------------------------------------------------------------- atlas

_TEMPLATE_CACHE: dict = {}


def _load_templates(template_dir: Path) -> list[Template]:
    key = str(template_dir)
    if key not in _TEMPLATE_CACHE:
        paths = sorted(Path(template_dir).glob("*.rvf"))
        templates = []
        for p in paths:
            channels = rvf.read_rvf(p)
            if len(channels) != 3:
                raise ValidationError(f"{p}: template needs 3 channels")
            templates.append(
                Template(
                    id=p.stem,
                    water_ff=channels[0],
                    fat_ff=channels[1],
                    liver_seg=rvf.volume_to_mask(channels[2]),
                )
            )
        _TEMPLATE_CACHE[key] = templates
    return _TEMPLATE_CACHE[key]


def _atlas_one(args):
    cohort_dir, subject_id, template_dir, resample_spec, reg_cfg, erosion = args
    try:
        templates = _load_templates(Path(template_dir))
        water_stack, fat_stack = _read_station_stacks(Path(cohort_dir), subject_id)
        wf, ff, body = prepare_subject_volumes(water_stack, fat_stack, resample_spec)
        m = atlas_measure(wf, ff, body, templates, reg_cfg, erosion)
        return (subject_id, m.raw_ff * 100.0, m.surviving_voxels, None)
    except (MeasurementFailure, ValueError) as exc:
        return (subject_id, None, 0, str(exc))


def cmd_atlas_run(
    cfg: StudyConfig, cohort_dir: Path, template_dir: Path, out_dir: Path, workers: int
) -> int:
    templates = _load_templates(template_dir)
    if len(templates) != 3:
        raise ValidationError(
            f"template directory {template_dir} must hold exactly 3 templates, "
            f"found {len(templates)}"
        )
    truth = _load_truth(cohort_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = _map_subjects(
        _atlas_one,
        [
            (
                str(cohort_dir),
                sid,
                str(template_dir),
                cfg.resample,
                cfg.registration,
                cfg.erosion_diameter,
            )
            for sid in sorted(truth)
        ],
        workers,
    )
    rows, failures = [], []
    for sid, raw, surviving, err in results:
        if err is not None:
            failures.append((sid, err))
        else:
            rows.append([sid, f"{raw:.6f}", "", surviving])
    _write_csv(
        out_dir / "atlas.csv",
        ["subject_id", "raw_ff", "corrected_ff", "surviving_voxels"],
        rows,
    )
    _write_manifest(out_dir)
    print(f"atlas: {len(rows)} subjects measured, {len(failures)} failed")
    if failures:
        for sid, err in failures:
            print(f"  FAILED {sid}: {err}", file=sys.stderr)
        raise RuntimeFailure(f"{len(failures)} subjects failed atlas measurement")
    return 0


def cmd_atlas_calibrate(cohort_dir: Path, atlas_dir: Path) -> int:
    rows = _read_csv(atlas_dir / "atlas.csv")
    truth = _load_truth(cohort_dir)
    a_ids, _, _ = _load_splits(cohort_dir)
    a_set = set(a_ids)
    raw, ref = [], []
    for r in rows:
        if r["subject_id"] in a_set:
            raw.append(float(r["raw_ff"]))
            ref.append(float(truth[r["subject_id"]]["reference_roi_ff"]))
    if len(raw) < 2:
        raise ValidationError("need at least 2 dataset-A measurements to calibrate")
    model = fit_calibration(raw, ref)
    (atlas_dir / "calibration.txt").write_text(
        f"slope = {model.slope:.9f}\nintercept = {model.intercept:.9f}\n"
    )
    out = []
    for r in rows:
        corrected = apply_calibration(model, float(r["raw_ff"]))
        out.append(
            [r["subject_id"], r["raw_ff"], f"{corrected:.6f}", r["surviving_voxels"]]
        )
    _write_csv(
        atlas_dir / "atlas.csv",
        ["subject_id", "raw_ff", "corrected_ff", "surviving_voxels"],
        out,
    )
    _write_manifest(atlas_dir)
    print(f"calibration: corrected = {model.slope:.4f} * raw + {model.intercept:.4f}")
    return 0


def load_calibration(atlas_dir: Path) -> CalibrationModel:
    text = (Path(atlas_dir) / "calibration.txt").read_text()
    values = dict(
        (k.strip(), float(v)) for k, v in
        (line.split("=") for line in text.strip().splitlines())
    )
    return CalibrationModel(values["slope"], values["intercept"])


# ------------------------------------------------------------------- net

def _load_dataset(prep_dir: Path, ids, targets: dict[str, float]):
    out = []
    for sid in ids:
        p = prep_dir / f"{sid}.pgm"
        if not p.is_file():
            raise ValidationError(f"missing composed input {p}")
        out.append((read_pgm(p), targets[sid]))
    return out


def _train_fold(args):
    prep_dir, fold_idx, train_ids, eval_ids, targets, net_cfg_args, train_cfg = args
    from .autodiff import NetworkConfig

    net_cfg = NetworkConfig.parse(*net_cfg_args)
    dataset = _load_dataset(Path(prep_dir), train_ids, targets)
    net, log = train(dataset, net_cfg, train_cfg)
    preds = []
    for sid in sorted(eval_ids):
        img = read_pgm(Path(prep_dir) / f"{sid}.pgm")
        preds.append((sid, predict(net, img)))
    return fold_idx, preds, log


def _fold_train_cfg(cfg: StudyConfig, fold_idx: int):
    seed = int(
        np.random.SeedSequence(
            entropy=cfg.train.seed, spawn_key=(21, fold_idx)
        ).generate_state(1)[0]
    )
    return dataclasses.replace(cfg.train, seed=seed)


def cmd_net_cv(cfg: StudyConfig, cohort_dir: Path, prep_dir: Path, out_dir: Path, workers: int) -> int:
    truth = _load_truth(cohort_dir)
    a_ids, _, _ = _load_splits(cohort_dir)
    targets = {sid: float(truth[sid]["reference_roi_ff"]) for sid in a_ids}
    plan = make_cv_plan(a_ids, k=cfg.cv_folds, seed=cfg.cv_seed)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for i, fold in enumerate(plan.folds):
        train_ids = [sid for j, f in enumerate(plan.folds) if j != i for sid in f]
        jobs.append(
            (
                str(prep_dir),
                i,
                train_ids,
                fold,
                targets,
                (cfg.network, cfg.layout.out_height, cfg.layout.out_width),
                _fold_train_cfg(cfg, i),
            )
        )
    results = _map_subjects(_train_fold, jobs, workers)

    merged = []
    for fold_idx, preds, log in sorted(results):
        _write_csv(
            out_dir / f"cv_fold_{fold_idx}.csv",
            ["subject_id", "predicted_ff"],
            [[sid, f"{v:.6f}"] for sid, v in preds],
        )
        write_train_log(log, out_dir / f"train_log_fold_{fold_idx}.csv")
        merged.extend((sid, v, fold_idx) for sid, v in preds)
    merged.sort()
    _write_csv(
        out_dir / "cv_predictions.csv",
        ["subject_id", "predicted_ff", "fold"],
        [[sid, f"{v:.6f}", fold] for sid, v, fold in merged],
    )
    _write_manifest(out_dir)
    print(f"net cv: {plan.k} folds, {len(merged)} predictions")
    return 0


def cmd_net_train_full(cfg: StudyConfig, cohort_dir: Path, prep_dir: Path, out_dir: Path) -> int:
    from .autodiff import NetworkConfig

    truth = _load_truth(cohort_dir)
    a_ids, _, _ = _load_splits(cohort_dir)
    targets = {sid: float(truth[sid]["reference_roi_ff"]) for sid in a_ids}
    dataset = _load_dataset(prep_dir, sorted(a_ids), targets)
    net_cfg = NetworkConfig.parse(cfg.network, cfg.layout.out_height, cfg.layout.out_width)
    net, log = train(dataset, net_cfg, cfg.train)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(net, out_dir / "model_full.ffn")
    write_train_log(log, out_dir / "train_log_full.csv")
    _write_manifest(out_dir)
    print(f"net train-full: {len(dataset)} subjects, model -> model_full.ffn")
    return 0


def cmd_net_infer(cohort_dir: Path, prep_dir: Path, model_path: Path, out_dir: Path) -> int:
    if not model_path.is_file():
        raise ValidationError(f"missing model file {model_path}")
    net = load_model(model_path)
    _, b_ids, _ = _load_splits(cohort_dir)
    if not b_ids:
        raise ValidationError("no dataset-B subjects to infer")
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for sid in sorted(b_ids):
        img = read_pgm(prep_dir / f"{sid}.pgm")
        rows.append([sid, f"{predict(net, img):.6f}"])
    _write_csv(out_dir / "infer_predictions.csv", ["subject_id", "predicted_ff"], rows)
    _write_manifest(out_dir)
    print(f"net infer: {len(rows)} dataset-B predictions")
    return 0


# ---------------------------------------------------------------- report

def _paired(ids, a_map, b_map):
    common = [i for i in sorted(ids) if i in a_map and i in b_map]
    return PairedMeasurements(
        common,
        np.array([a_map[i] for i in common]),
        np.array([b_map[i] for i in common]),
    )


def cmd_report_compare(cohort_dir: Path, atlas_dir: Path, net_dir: Path, out_dir: Path) -> int:
    truth = _load_truth(cohort_dir)
    a_ids, _, c_ids = _load_splits(cohort_dir)
    reference = {sid: float(truth[sid]["reference_roi_ff"]) for sid in truth}

    atlas_rows = _read_csv(atlas_dir / "atlas.csv")
    if any(not r["corrected_ff"] for r in atlas_rows):
        raise ValidationError("atlas.csv has no corrected values; run atlas calibrate")
    atlas_c = {r["subject_id"]: float(r["corrected_ff"]) for r in atlas_rows}
    cv = {
        r["subject_id"]: float(r["predicted_ff"])
        for r in _read_csv(net_dir / "cv_predictions.csv")
    }
    infer = {
        r["subject_id"]: float(r["predicted_ff"])
        for r in _read_csv(net_dir / "infer_predictions.csv")
    }

    pairs = [
        ("reference_vs_network_A", _paired(a_ids, reference, cv)),
        ("reference_vs_atlas_A", _paired(a_ids, reference, atlas_c)),
        ("atlas_vs_network_A", _paired(a_ids, atlas_c, cv)),
        ("atlas_vs_network_C", _paired(c_ids, atlas_c, infer)),
    ]
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = [(name, compute_report(p)) for name, p in pairs]
    write_metrics_csv(reports, out_dir / "compare.csv")
    for name, p in pairs:
        bland_altman_svg(p, out_dir / f"bland_altman_{name}.svg", title=name)
    _write_manifest(out_dir)
    for name, r in reports:
        print(
            f"{name}: MAE={r.mae:.2f} R2={r.r2:.3f} "
            f"LoA=({r.loa_low:.2f} to {r.loa_high:.2f}) AUC={r.roc_auc:.3f} "
            f"Sens={100 * r.sensitivity:.1f} Spec={100 * r.specificity:.1f}"
        )
    return 0


# ------------------------------------------------------------------ main

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="liverfat", description=__doc__)
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=int, help="override the stage seeds")
    p.add_argument("--workers", type=int, default=1, help="parallel subject workers")
    p.add_argument(
        "--paper-scale", action="store_true",
        help="use protocol-scale constants instead of desk scale",
    )
    sub = p.add_subparsers(dest="group", required=True)

    cohort = sub.add_parser("cohort").add_subparsers(dest="cmd", required=True)
    g = cohort.add_parser("generate")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--n", type=int, help="override cohort size")

    prep = sub.add_parser("preprocess").add_subparsers(dest="cmd", required=True)
    r = prep.add_parser("run")
    r.add_argument("--cohort", type=Path, required=True)
    r.add_argument("--out", type=Path, required=True)

    atlas_p = sub.add_parser("atlas").add_subparsers(dest="cmd", required=True)
    ar = atlas_p.add_parser("run")
    ar.add_argument("--cohort", type=Path, required=True)
    ar.add_argument("--templates", type=Path, required=True)
    ar.add_argument("--out", type=Path, required=True)
    ac = atlas_p.add_parser("calibrate")
    ac.add_argument("--cohort", type=Path, required=True)
    ac.add_argument("--atlas", type=Path, required=True)

    net = sub.add_parser("net").add_subparsers(dest="cmd", required=True)
    ncv = net.add_parser("cv")
    ncv.add_argument("--cohort", type=Path, required=True)
    ncv.add_argument("--prep", type=Path, required=True)
    ncv.add_argument("--out", type=Path, required=True)
    ntf = net.add_parser("train-full")
    ntf.add_argument("--cohort", type=Path, required=True)
    ntf.add_argument("--prep", type=Path, required=True)
    ntf.add_argument("--out", type=Path, required=True)
    ninf = net.add_parser("infer")
    ninf.add_argument("--cohort", type=Path, required=True)
    ninf.add_argument("--prep", type=Path, required=True)
    ninf.add_argument("--model", type=Path)
    ninf.add_argument("--out", type=Path, required=True)

    rep = sub.add_parser("report").add_subparsers(dest="cmd", required=True)
    rc = rep.add_parser("compare")
    rc.add_argument("--cohort", type=Path, required=True)
    rc.add_argument("--atlas", type=Path, required=True)
    rc.add_argument("--net", type=Path, required=True)
    rc.add_argument("--out", type=Path, required=True)
    return p


def _apply_overrides(cfg: StudyConfig, args) -> StudyConfig:
    if getattr(args, "n", None) is not None:
        cfg = dataclasses.replace(
            cfg, cohort=dataclasses.replace(cfg.cohort, n_subjects=args.n)
        )
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg,
            cohort=dataclasses.replace(cfg.cohort, seed=args.seed),
            split=dataclasses.replace(cfg.split, seed=args.seed + 1),
            train=dataclasses.replace(cfg.train, seed=args.seed + 2),
            cv_seed=args.seed + 3,
        )
    return cfg


def run(argv) -> int:
    args = _build_parser().parse_args(argv)
    cfg = load_study_config(args.config, paper_scale=args.paper_scale)
    cfg = _apply_overrides(cfg, args)
    workers = max(1, args.workers)

    if args.group == "cohort" and args.cmd == "generate":
        return cmd_cohort_generate(cfg, args.out, workers)
    if args.group == "preprocess" and args.cmd == "run":
        return cmd_preprocess_run(cfg, args.cohort, args.out, workers)
    if args.group == "atlas" and args.cmd == "run":
        return cmd_atlas_run(cfg, args.cohort, args.templates, args.out, workers)
    if args.group == "atlas" and args.cmd == "calibrate":
        return cmd_atlas_calibrate(args.cohort, args.atlas)
    if args.group == "net" and args.cmd == "cv":
        return cmd_net_cv(cfg, args.cohort, args.prep, args.out, workers)
    if args.group == "net" and args.cmd == "train-full":
        return cmd_net_train_full(cfg, args.cohort, args.prep, args.out)
    if args.group == "net" and args.cmd == "infer":
        model = args.model or (args.out / "model_full.ffn")
        return cmd_net_infer(args.cohort, args.prep, model, args.out)
    if args.group == "report" and args.cmd == "compare":
        return cmd_report_compare(args.cohort, args.atlas, args.net, args.out)
    raise ValidationError(f"unknown command {args.group} {args.cmd}")


def main(argv=None) -> int:
    try:
        return run(sys.argv[1:] if argv is None else argv)
    except (ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RuntimeFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
