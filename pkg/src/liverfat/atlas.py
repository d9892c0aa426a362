"""Multi-atlas baseline: deformable registration of template phantoms,
label fusion, erosion and a median fat-fraction readout with linear
calibration to the reference scale.

Registration is coarse-to-fine discrete move-making over a resolution
pyramid. At each level a control grid at half the level resolution holds
the displacement field; sweeps let every control point pick the integer
displacement step (within the search radius, at the level scale) that
minimizes one minus the window NCC summed over the paired water/fat
fraction channels, plus a squared-difference smoothness penalty to its
6-neighbors. The field is trilinearly upsampled between levels and is
deterministic: points are visited in lexicographic order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _regkernels
from .preprocess import fat_fraction, water_fraction
from .volume import (
    BinaryMask,
    ResampleSpec,
    StationStack,
    Volume3,
    erode_spherical,
    fuse_stations,
    intersect_masks,
    resample,
    sample_points,
)
from .preprocess import body_mask as compute_body_mask


class DegenerateRegionError(ValueError):
    pass


class MeasurementFailure(RuntimeError):
    """Atlas readout failed; carries the voxel counts at each stage."""

    def __init__(self, message, warped_counts, intersection_count, eroded_count):
        super().__init__(
            f"{message} (warped={warped_counts}, intersection={intersection_count}, "
            f"eroded={eroded_count})"
        )
        self.warped_counts = warped_counts
        self.intersection_count = intersection_count
        self.eroded_count = eroded_count


def ncc(a: Volume3, b: Volume3, region: BinaryMask | None = None) -> float:
    """Pearson correlation of the two voxel series over the region."""
    if not a.same_grid(b):
        raise ValueError("ncc operands must share one grid")
    if region is not None:
        if region.dims != a.dims:
            raise ValueError("region dims mismatch")
        va = a.data[region.data]
        vb = b.data[region.data]
    else:
        va = a.data.ravel()
        vb = b.data.ravel()
    if va.size < 2:
        raise DegenerateRegionError("region has fewer than 2 voxels")
    da = va - va.mean()
    db = vb - vb.mean()
    denom = np.sqrt((da**2).sum() * (db**2).sum())
    if denom == 0:
        raise DegenerateRegionError("zero variance over region")
    return float((da * db).sum() / denom)


def build_pyramid(vol: Volume3, levels: int) -> list[Volume3]:
    """Mean-pooled halving pyramid, level 0 the input.

    Stops early once another halving would drop any axis below 2 voxels;
    the realized level count is the length of the returned list.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = [vol]
    while len(out) < levels:
        cur = out[-1]
        nd = tuple(d // 2 for d in cur.dims)
        if min(nd) < 2:
            break
        trimmed = cur.data[: 2 * nd[0], : 2 * nd[1], : 2 * nd[2]]
        pooled = trimmed.reshape(nd[0], 2, nd[1], 2, nd[2], 2).mean(axis=(1, 3, 5))
        spacing = tuple(2 * s for s in cur.spacing)
        origin = tuple(o + 0.5 * s for o, s in zip(cur.origin, cur.spacing))
        out.append(Volume3(nd, spacing, origin, pooled))
    return out


@dataclass
class RegistrationConfig:
    pyramid_levels: int = 6
    search_radius: int = 2
    displacement_step: int = 1
    regularization_weight: float = 0.1
    sweeps_per_level: int = 3
    control_stride: int = 2

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if self.search_radius < 1:
            raise ValueError("search_radius must be >= 1")
        if self.displacement_step < 1:
            raise ValueError("displacement_step must be >= 1")
        if self.regularization_weight < 0:
            raise ValueError("regularization_weight must be >= 0")
        if self.sweeps_per_level < 1 or self.control_stride < 1:
            raise ValueError("sweeps_per_level and control_stride must be >= 1")


@dataclass
class DeformationField:
    """Displacement vectors on a regular control grid, millimeters.

    Evaluable anywhere by trilinear interpolation of the control
    displacements, clamped at the lattice edges.
    """

    control_dims: tuple[int, int, int]
    control_spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    displacements: np.ndarray

    def __post_init__(self):
        self.displacements = np.asarray(self.displacements, dtype=np.float64)
        expected = tuple(self.control_dims) + (3,)
        if self.displacements.shape != expected:
            raise ValueError(
                f"displacements shape {self.displacements.shape} != {expected}"
            )
        if not np.isfinite(self.displacements).all():
            raise ValueError("displacements must be finite")

    def evaluate(self, points_mm: np.ndarray) -> np.ndarray:
        """Displacement (N, 3) mm at millimeter positions (N, 3)."""
        return _eval_lattice(
            self.displacements, self.origin, self.control_spacing, points_mm
        )

    def mean_magnitude_voxels(self, spacing) -> float:
        v = self.displacements / np.asarray(spacing)
        return float(np.sqrt((v**2).sum(axis=-1)).mean())


def _eval_lattice(lattice, origin, spacing, points_mm):
    pts = np.atleast_2d(np.asarray(points_mm, dtype=np.float64))
    dims = np.asarray(lattice.shape[:3])
    u = (pts - np.asarray(origin)) / np.asarray(spacing)
    u = np.clip(u, 0.0, dims - 1)
    i0 = np.minimum(np.floor(u).astype(np.int64), np.maximum(dims - 2, 0))
    f = (u - i0)[..., None]
    i1 = np.minimum(i0 + 1, dims - 1)
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
    c00 = lattice[x0, y0, z0] * (1 - fx) + lattice[x1, y0, z0] * fx
    c10 = lattice[x0, y1, z0] * (1 - fx) + lattice[x1, y1, z0] * fx
    c01 = lattice[x0, y0, z1] * (1 - fx) + lattice[x1, y0, z1] * fx
    c11 = lattice[x0, y1, z1] * (1 - fx) + lattice[x1, y1, z1] * fx
    return (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz


@dataclass
class Template:
    """Body-masked water/fat fraction channels plus the liver segmentation."""

    id: str
    water_ff: Volume3
    fat_ff: Volume3
    liver_seg: BinaryMask

    def __post_init__(self):
        if not (
            self.water_ff.same_grid(self.fat_ff)
            and self.water_ff.same_grid(self.liver_seg)
        ):
            raise ValueError("template channels and mask must share one grid")
        if self.liver_seg.voxel_count == 0:
            raise ValueError("template liver segmentation is empty")


def _candidate_offsets(radius: int, step: int) -> np.ndarray:
    r = radius
    vals = range(-r, r + 1)
    offs = [
        (x * step, y * step, z * step)
        for x in vals
        for y in vals
        for z in vals
        if x * x + y * y + z * z <= r * r
    ]
    offs.sort(key=lambda o: (o[0] ** 2 + o[1] ** 2 + o[2] ** 2, o))
    return np.asarray(offs, dtype=np.int64)


def _window_offsets(stride: int) -> np.ndarray:
    # support window: cube of edge 2 * control spacing, symmetric
    r = stride
    ax = range(-r, r + 1)
    return np.asarray(
        [(x, y, z) for x in ax for y in ax for z in ax], dtype=np.int64
    )


def _control_positions(level_dims, stride):
    counts = [max(2, -(-(d - 1) // stride) + 1) for d in level_dims]
    grids = np.meshgrid(*[np.arange(c) * stride for c in counts], indexing="ij")
    pos = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    return tuple(counts), pos


def _as_pair(moving):
    if isinstance(moving, Template):
        return moving.water_ff, moving.fat_ff
    return moving[0], moving[1]


def _boundary_pairs(frozen, counts):
    """Index pairs (active point, frozen 6-neighbor) on the control grid."""
    fr = frozen.reshape(counts)
    act = ~fr
    pi, qi = [], []
    strides = (counts[1] * counts[2], counts[2], 1)
    for axis, stride in enumerate(strides):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        flat = np.arange(fr.size).reshape(counts)
        for a_sl, f_sl in ((tuple(lo), tuple(hi)), (tuple(hi), tuple(lo))):
            mask = act[a_sl] & fr[f_sl]
            pi.append(flat[a_sl][mask])
            qi.append(flat[f_sl][mask])
    return np.concatenate(pi), np.concatenate(qi)


def _apply_global_move(cost, disp_vox, cand, frozen, pi, qi, lam, scale):
    """Shift every active control point by the best uniform candidate.

    Move-making over per-point candidates alone cannot start a large
    coherent motion against the smoothness coupling, so each sweep first
    considers one uniform move of all active points, scored by the summed
    data costs plus the smoothness change along the active/frozen
    boundary. Applied only when it strictly lowers the energy.
    """
    act = ~frozen
    if not act.any():
        return
    data_tot = cost[act].sum(axis=0)
    delta_data = data_tot - data_tot[0]
    scale2 = scale**2
    if len(pi):
        diffs = disp_vox[pi] - disp_vox[qi]
        s1 = diffs.sum(axis=0)
        n_bd = len(pi)
        delta_smooth = lam * (
            scale2 * (2.0 * s1 * cand + n_bd * cand.astype(np.float64) ** 2)
        ).sum(axis=1)
    else:
        delta_smooth = np.zeros(len(cand))
    total = delta_data + delta_smooth
    best = int(np.argmin(total))
    if total[best] < -1e-9:
        disp_vox[act] += cand[best]


def register(fixed, moving, config: RegistrationConfig | None = None) -> DeformationField:
    """Align the moving channel pair onto the fixed pair.

    Both pairs must live on one common grid with background already zeroed
    by the body masks. The returned field maps fixed-grid positions into
    moving space: warped(x) = moving(x + field(x)).
    """
    config = config or RegistrationConfig()
    fw, ff = _as_pair(fixed)
    mw, mf = _as_pair(moving)
    for v in (ff, mw, mf):
        if not fw.same_grid(v):
            raise ValueError("registration inputs must share one grid")

    pyr = [build_pyramid(v, config.pyramid_levels) for v in (fw, ff, mw, mf)]
    n_levels = len(pyr[0])
    cand = _candidate_offsets(config.search_radius, config.displacement_step)
    woff = _window_offsets(config.control_stride)
    emin = woff.min(0) + cand.min(0)
    emax = woff.max(0) + cand.max(0)
    edims = emax - emin + 1
    eoff = np.stack(
        np.meshgrid(*[np.arange(lo, hi + 1) for lo, hi in zip(emin, emax)], indexing="ij"),
        axis=-1,
    ).reshape(-1, 3)
    # cw_index[c, w] locates candidate + window offset inside the buffer
    rel = cand[:, None, :] + woff[None, :, :] - emin
    cw_index = (
        (rel[..., 0] * edims[1] + rel[..., 1]) * edims[2] + rel[..., 2]
    ).astype(np.int64)

    finest_spacing = np.asarray(pyr[0][0].spacing)
    field_mm = None
    ctrl_meta = None
    for level in range(n_levels - 1, -1, -1):
        lv = [p[level] for p in pyr]
        spacing = np.asarray(lv[0].spacing)
        origin = np.asarray(lv[0].origin)
        counts, pos = _control_positions(lv[0].dims, config.control_stride)
        pos_mm = origin + pos * spacing

        if field_mm is None:
            disp_mm = np.zeros((len(pos), 3), dtype=np.float64)
        else:
            disp_mm = _eval_lattice(field_mm, *ctrl_meta, pos_mm)

        vols = [np.ascontiguousarray(v.data) for v in lv]
        sf, sf2, frozen = _regkernels.fixed_window_stats(vols[0], vols[1], pos, woff)
        disp_vox = disp_mm / spacing
        # smoothness measured in finest-level voxel units, so coarse
        # levels pay proportionally more for the same voxel step
        scale = spacing / finest_spacing
        lam = float(config.regularization_weight)
        pi, qi = _boundary_pairs(frozen, counts)
        cost = np.zeros((len(pos), len(cand)), dtype=np.float64)
        for _ in range(config.sweeps_per_level):
            d_start = disp_vox.copy()
            _regkernels.sweep_data_costs(
                vols[0], vols[1], vols[2], vols[3],
                pos, d_start, frozen, sf, sf2, woff, eoff, cw_index, cost,
            )
            _apply_global_move(cost, disp_vox, cand, frozen, pi, qi, lam, scale)
            _regkernels.icm_sweep(
                cost, d_start, disp_vox, cand.astype(np.float64), frozen,
                counts[0], counts[1], counts[2],
                lam, float(scale[0]), float(scale[1]), float(scale[2]),
            )
        field_mm = (disp_vox * spacing).reshape(counts + (3,))
        ctrl_meta = (
            tuple(origin),
            tuple(spacing * config.control_stride),
        )

    return DeformationField(
        control_dims=field_mm.shape[:3],
        control_spacing=ctrl_meta[1],
        origin=ctrl_meta[0],
        displacements=field_mm,
    )


def warp_mask(seg: BinaryMask, field: DeformationField, target_grid) -> BinaryMask:
    """Pull the segmentation through the field onto the target grid.

    Each target voxel samples seg (as 0/1 scalars, trilinear) at its
    position plus the field displacement; set iff the sample reaches 0.5.
    """
    dims, spacing, origin = (
        target_grid.grid() if hasattr(target_grid, "grid") else target_grid
    )
    ax = [origin[a] + spacing[a] * np.arange(dims[a]) for a in range(3)]
    gx, gy, gz = np.meshgrid(*ax, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    moved = pts + field.evaluate(pts)
    vals = sample_points(seg.as_volume(), moved).reshape(dims)
    return BinaryMask(dims, spacing, origin, vals >= 0.5)


@dataclass
class AtlasMeasurement:
    raw_ff: float
    surviving_voxels: int
    warped_counts: tuple[int, int, int]
    intersection_count: int


def atlas_measure(
    water_ff: Volume3,
    fat_ff: Volume3,
    body: BinaryMask,
    templates,
    config: RegistrationConfig | None = None,
    erosion_diameter: int = 3,
) -> AtlasMeasurement:
    """Register the three templates, fuse their livers, erode, read the median.

    The erosion diameter defaults to 3 at desk scale; paper-scale grids use
    the protocol value of 7.
    """
    templates = list(templates)
    if len(templates) != 3:
        raise ValueError(f"exactly three templates required, got {len(templates)}")
    fixed = (
        water_ff.with_data(water_ff.data * body.data),
        fat_ff.with_data(fat_ff.data * body.data),
    )
    warped = []
    for t in templates:
        field = register(fixed, t, config)
        warped.append(warp_mask(t.liver_seg, field, water_ff))
    inter = intersect_masks(warped)
    eroded = erode_spherical(inter, erosion_diameter)
    counts = tuple(w.voxel_count for w in warped)
    if eroded.voxel_count == 0:
        raise MeasurementFailure(
            "no voxels survive erosion", counts, inter.voxel_count, 0
        )
    raw = float(np.median(fat_ff.data[eroded.data]))
    return AtlasMeasurement(
        raw_ff=raw,
        surviving_voxels=eroded.voxel_count,
        warped_counts=counts,
        intersection_count=inter.voxel_count,
    )


@dataclass
class CalibrationModel:
    slope: float
    intercept: float

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise ValueError("calibration parameters must be finite")


def fit_calibration(raw, reference) -> CalibrationModel:
    """Ordinary least squares of reference on raw."""
    raw = np.asarray(raw, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if raw.shape != reference.shape or raw.size < 2:
        raise ValueError("need two equal-length series of at least 2 points")
    dr = raw - raw.mean()
    var = float((dr**2).sum())
    if var == 0:
        raise ValueError("raw values are all equal; degenerate design")
    slope = float((dr * (reference - reference.mean())).sum() / var)
    intercept = float(reference.mean() - slope * raw.mean())
    return CalibrationModel(slope=slope, intercept=intercept)


def apply_calibration(model: CalibrationModel, raw):
    arr = np.asarray(raw, dtype=np.float64)
    out = model.slope * arr + model.intercept
    return float(out) if out.ndim == 0 else out


def prepare_subject_volumes(
    water_stack: StationStack,
    fat_stack: StationStack,
    spec: ResampleSpec,
):
    """Fuse, resample and convert to (water_ff, fat_ff, body_mask)."""
    water = resample(fuse_stations(water_stack), spec)
    fat = resample(fuse_stations(fat_stack), spec)
    body = compute_body_mask(water, fat)
    return water_fraction(water, fat), fat_fraction(water, fat), body


def make_template(
    template_id: str,
    water_stack: StationStack,
    fat_stack: StationStack,
    liver_truth: BinaryMask,
    spec: ResampleSpec,
) -> Template:
    """Build a body-masked template on the common grid from a phantom."""
    wf, ff, body = prepare_subject_volumes(water_stack, fat_stack, spec)
    liver_res = resample(liver_truth.as_volume(), spec)
    liver = BinaryMask(wf.dims, wf.spacing, wf.origin, liver_res.data >= 0.5)
    return Template(
        id=template_id,
        water_ff=wf.with_data(wf.data * body.data),
        fat_ff=ff.with_data(ff.data * body.data),
        liver_seg=liver,
    )
