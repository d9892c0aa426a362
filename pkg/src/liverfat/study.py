"""Study configuration: desk and paper-scale presets plus the flat
key = value config file format consumed by the CLI."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .atlas import RegistrationConfig
from .phantom import CohortSpec, PhantomSpec
from .preprocess import LayoutConfig
from .regressor import TrainConfig
from .volume import ResampleSpec


class ConfigError(ValueError):
    pass


@dataclass
class SplitConfig:
    """Sizes of the labeled set A, unlabeled set B and comparison subset C."""

    n_a: int = 6
    n_b: int = 2
    c_size: int = 2
    seed: int = 5

    def __post_init__(self):
        if min(self.n_a, self.n_b, self.c_size) < 1:
            raise ConfigError("split sizes must be >= 1")
        if self.c_size > self.n_b:
            raise ConfigError("C must be a subset of B")


@dataclass
class StudyConfig:
    cohort: CohortSpec = field(default_factory=CohortSpec)
    split: SplitConfig = field(default_factory=SplitConfig)
    resample: ResampleSpec = field(
        default_factory=lambda: ResampleSpec((4.0, 4.0, 4.0), (64, 48, 96))
    )
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            total_iterations=1500, base_lr=1e-3, translation_range=3, seed=3
        )
    )
    network: str = "conv3s2c8,relu,conv3s2c16,relu,conv3s2c32,relu,gap,linear1"
    erosion_diameter: int = 3
    template_count: int = 3
    cv_folds: int = 10
    cv_seed: int = 9

    def __post_init__(self):
        if self.split.n_a + self.split.n_b > self.cohort.n_subjects:
            raise ConfigError(
                f"splits need {self.split.n_a + self.split.n_b} subjects, "
                f"cohort has {self.cohort.n_subjects}"
            )

    @classmethod
    def paper_scale(cls) -> "StudyConfig":
        """Protocol-scale constants: full fused grid, 376 x 176 inputs,
        6,000 iterations at 1e-4 and diameter-7 erosion."""
        grid = ResampleSpec()
        phantom = PhantomSpec(
            grid=grid,
            torso_center=(250.0, 194.0, 330.0),
            torso_half_axes=(210.0, 150.0, 310.0),
            leg_radius=75.0,
            leg_offset_x=110.0,
            leg_z_top=530.0,
            liver_center=(165.0, 180.0, 240.0),
            liver_half_axes=(80.0, 60.0, 95.0),
            subcutaneous_thickness=18.0,
            station_count=6,
            station_overlap=8,
        )
        return cls(
            cohort=CohortSpec(phantom=phantom),
            resample=grid,
            layout=LayoutConfig.paper_scale(),
            train=TrainConfig(
                total_iterations=6000, base_lr=1e-4, translation_range=5, seed=3
            ),
            erosion_diameter=7,
        )


def parse_flat_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        out[key] = value
    return out


def _triple(value: str, cast):
    parts = value.replace(",", "x").split("x")
    if len(parts) != 3:
        raise ConfigError(f"expected three components, got {value!r}")
    return tuple(cast(p) for p in parts)


def apply_config_entries(cfg: StudyConfig, entries: dict[str, str]) -> StudyConfig:
    """Overlay flat entries onto a StudyConfig; unknown keys are rejected."""
    c = cfg
    try:
        for key, value in entries.items():
            if key == "cohort.n":
                c = dataclasses.replace(
                    c, cohort=dataclasses.replace(c.cohort, n_subjects=int(value))
                )
            elif key == "cohort.seed":
                c = dataclasses.replace(
                    c, cohort=dataclasses.replace(c.cohort, seed=int(value))
                )
            elif key == "cohort.ff_low":
                c = dataclasses.replace(
                    c, cohort=dataclasses.replace(c.cohort, ff_low=float(value))
                )
            elif key == "cohort.ff_high":
                c = dataclasses.replace(
                    c, cohort=dataclasses.replace(c.cohort, ff_high=float(value))
                )
            elif key.startswith("phantom."):
                fname = key.split(".", 1)[1]
                if fname not in {
                    "noise_sigma",
                    "bias_amplitude",
                    "liver_ff",
                    "subcutaneous_ff",
                    "lean_ff",
                }:
                    if fname == "station_count" or fname == "station_overlap":
                        val = int(value)
                    elif fname == "grid_dims":
                        grid = dataclasses.replace(
                            c.cohort.phantom.grid, target_dims=_triple(value, int)
                        )
                        c = _with_phantom(c, grid=grid)
                        continue
                    elif fname == "grid_spacing":
                        grid = dataclasses.replace(
                            c.cohort.phantom.grid, target_spacing=_triple(value, float)
                        )
                        c = _with_phantom(c, grid=grid)
                        continue
                    else:
                        raise ConfigError(f"unknown config key {key!r}")
                else:
                    val = float(value)
                c = _with_phantom(c, **{fname: val})
            elif key.startswith("split."):
                fname = key.split(".", 1)[1]
                if fname not in {"n_a", "n_b", "c_size", "seed"}:
                    raise ConfigError(f"unknown config key {key!r}")
                c = dataclasses.replace(
                    c, split=dataclasses.replace(c.split, **{fname: int(value)})
                )
            elif key == "resample.dims":
                c = dataclasses.replace(
                    c,
                    resample=dataclasses.replace(
                        c.resample, target_dims=_triple(value, int)
                    ),
                )
            elif key == "resample.spacing":
                c = dataclasses.replace(
                    c,
                    resample=dataclasses.replace(
                        c.resample, target_spacing=_triple(value, float)
                    ),
                )
            elif key.startswith("layout."):
                fname = key.split(".", 1)[1]
                if fname not in {"out_height", "out_width", "crop_width"}:
                    raise ConfigError(f"unknown config key {key!r}")
                c = dataclasses.replace(
                    c, layout=dataclasses.replace(c.layout, **{fname: int(value)})
                )
            elif key.startswith("reg."):
                fname = key.split(".", 1)[1]
                mapping = {
                    "pyramid_levels": int,
                    "search_radius": int,
                    "displacement_step": int,
                    "regularization_weight": float,
                    "sweeps_per_level": int,
                    "control_stride": int,
                }
                if fname not in mapping:
                    raise ConfigError(f"unknown config key {key!r}")
                c = dataclasses.replace(
                    c,
                    registration=dataclasses.replace(
                        c.registration, **{fname: mapping[fname](value)}
                    ),
                )
            elif key.startswith("train."):
                fname = key.split(".", 1)[1]
                mapping = {
                    "batch_size": int,
                    "total_iterations": int,
                    "base_lr": float,
                    "lr_drop_factor": float,
                    "lr_drop_window": int,
                    "translation_range": int,
                    "seed": int,
                }
                if fname not in mapping:
                    raise ConfigError(f"unknown config key {key!r}")
                c = dataclasses.replace(
                    c,
                    train=dataclasses.replace(
                        c.train, **{fname: mapping[fname](value)}
                    ),
                )
            elif key == "net.arch":
                c = dataclasses.replace(c, network=value)
            elif key == "atlas.erosion_diameter":
                c = dataclasses.replace(c, erosion_diameter=int(value))
            elif key == "cv.k":
                c = dataclasses.replace(c, cv_folds=int(value))
            elif key == "cv.seed":
                c = dataclasses.replace(c, cv_seed=int(value))
            else:
                raise ConfigError(f"unknown config key {key!r}")
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid value for {key!r}: {exc}") from exc
    return c


def _with_phantom(c: StudyConfig, **kwargs) -> StudyConfig:
    phantom = dataclasses.replace(c.cohort.phantom, **kwargs)
    return dataclasses.replace(
        c, cohort=dataclasses.replace(c.cohort, phantom=phantom)
    )


def load_study_config(path=None, paper_scale: bool = False) -> StudyConfig:
    cfg = StudyConfig.paper_scale() if paper_scale else StudyConfig()
    if path is not None:
        text = Path(path).read_text()
        cfg = apply_config_entries(cfg, parse_flat_config(text))
    return cfg


def make_splits(ids: list[str], split: SplitConfig):
    """Assign sorted ids to A and B and draw C as a random subset of B."""
    ids = sorted(ids)
    if split.n_a + split.n_b > len(ids):
        raise ConfigError("not enough subjects for the requested splits")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=split.seed, spawn_key=(17,)))
    perm = [ids[i] for i in rng.permutation(len(ids))]
    a = set(perm[: split.n_a])
    b = perm[split.n_a : split.n_a + split.n_b]
    c = set(b[i] for i in rng.permutation(len(b))[: split.c_size])
    return {
        i: ("A" if i in a else "B" if i in set(b) else "-") for i in ids
    }, c
