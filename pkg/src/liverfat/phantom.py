"""Synthetic paired water/fat phantoms with known liver fat fraction.

A phantom is an ellipsoidal torso with two leg cylinders, a subcutaneous
fat shell, lean interior tissue and an embedded liver ellipsoid. Inside a
compartment with fat fraction f the noise-free signals are fat = f * S and
water = (1 - f) * S for base signal S = 1, both multiplied by a smooth
bias field, so the fat fraction is exact by construction and invariant to
the bias. The volume is split into overlapping stations and per-station
Gaussian noise is added, mimicking separately acquired stations.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .volume import (
    BinaryMask,
    ResampleSpec,
    StationStack,
    Volume3,
    erode_spherical,
)


@dataclass
class PhantomSpec:
    """Geometry, tissue fractions and acquisition parameters of one phantom.

    Lengths are millimeters. Defaults describe the desk-scale phantom on a
    64 x 48 x 96 grid at 4 mm; everything scales to larger grids.
    """

    grid: ResampleSpec = field(
        default_factory=lambda: ResampleSpec((4.0, 4.0, 4.0), (64, 48, 96))
    )
    torso_center: tuple[float, float, float] = (128.0, 96.0, 118.0)
    torso_half_axes: tuple[float, float, float] = (100.0, 70.0, 110.0)
    leg_radius: float = 33.0
    leg_offset_x: float = 52.0
    leg_z_top: float = 190.0
    liver_center: tuple[float, float, float] = (88.0, 90.0, 86.0)
    liver_half_axes: tuple[float, float, float] = (36.0, 27.0, 42.0)
    liver_ff: float = 0.05
    subcutaneous_ff: float = 0.85
    lean_ff: float = 0.03
    subcutaneous_thickness: float = 10.0
    noise_sigma: float = 0.0
    bias_amplitude: float = 0.0
    station_count: int = 3
    station_overlap: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("liver_ff", "subcutaneous_ff", "lean_ff"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.liver_ff > 0.5:
            raise ValueError(f"liver_ff must be in [0, 0.5], got {self.liver_ff}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.bias_amplitude < 1.0:
            raise ValueError("bias_amplitude must be in [0, 1)")
        if self.station_count < 1:
            raise ValueError("station_count must be >= 1")
        if self.station_overlap < 0:
            raise ValueError("station_overlap must be >= 0")
        self._check_liver_inside_torso()

    def _check_liver_inside_torso(self):
        # Sample the liver surface and require a strict-interior torso fit.
        n = 128
        k = np.arange(n)
        phi = np.arccos(1 - 2 * (k + 0.5) / n)
        theta = np.pi * (1 + 5**0.5) * k
        direc = np.stack(
            [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)],
            axis=1,
        )
        surface = np.asarray(self.liver_center) + direc * np.asarray(
            self.liver_half_axes
        )
        rel = (surface - np.asarray(self.torso_center)) / np.asarray(
            self.torso_half_axes
        )
        if np.any((rel**2).sum(axis=1) >= 1.0):
            raise ValueError("liver ellipsoid is not strictly inside the torso")


@dataclass
class PhantomTruth:
    liver_ff: float
    liver_mask: BinaryMask
    body_mask_truth: BinaryMask

    def __post_init__(self):
        if self.liver_mask.voxel_count == 0:
            raise ValueError("liver mask is empty")
        if np.any(self.liver_mask.data & ~self.body_mask_truth.data):
            raise ValueError("liver mask leaves the body mask")


@dataclass
class CohortSpec:
    """Population of phantoms with uniformly drawn liver fat fractions."""

    n_subjects: int = 8
    ff_low: float = 0.0
    ff_high: float = 0.20
    seed: int = 0
    phantom: PhantomSpec = field(default_factory=PhantomSpec)

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if not 0.0 <= self.ff_low <= self.ff_high <= 0.5:
            raise ValueError("ff bounds must satisfy 0 <= low <= high <= 0.5")


@dataclass
class SubjectParams:
    index: int
    subject_id: str
    liver_ff: float
    torso_scale: float
    liver_scale: tuple[float, float, float]
    liver_shift: tuple[float, float, float]
    seed: int


def _voxel_grids(spec: PhantomSpec):
    sx, sy, sz = spec.grid.target_spacing
    nx, ny, nz = spec.grid.target_dims
    x = sx * np.arange(nx)
    y = sy * np.arange(ny)
    z = sz * np.arange(nz)
    return np.meshgrid(x, y, z, indexing="ij")


def make_compartments(spec: PhantomSpec):
    """Voxelize the phantom: (ff_field, body, liver, subcutaneous) arrays."""
    gx, gy, gz = _voxel_grids(spec)
    cx, cy, cz = spec.torso_center
    tx, ty, tz = spec.torso_half_axes

    def torso(hx, hy, hz):
        return (
            ((gx - cx) / hx) ** 2 + ((gy - cy) / hy) ** 2 + ((gz - cz) / hz) ** 2
        ) <= 1.0

    def legs(radius):
        z_bottom = spec.grid.target_spacing[2] * spec.grid.target_dims[2] - 10.0
        in_z = (gz >= spec.leg_z_top) & (gz <= z_bottom)
        right = ((gx - (cx - spec.leg_offset_x)) ** 2 + (gy - cy) ** 2) <= radius**2
        left = ((gx - (cx + spec.leg_offset_x)) ** 2 + (gy - cy) ** 2) <= radius**2
        return in_z & (right | left)

    t = spec.subcutaneous_thickness
    body = torso(tx, ty, tz) | legs(spec.leg_radius)
    inner = torso(max(tx - t, 1.0), max(ty - t, 1.0), max(tz - t, 1.0)) | legs(
        max(spec.leg_radius - t, 1.0)
    )
    subcut = body & ~inner

    lx, ly, lz = spec.liver_center
    ax, ay, az = spec.liver_half_axes
    liver = (
        ((gx - lx) / ax) ** 2 + ((gy - ly) / ay) ** 2 + ((gz - lz) / az) ** 2
    ) <= 1.0

    ff = np.zeros(spec.grid.target_dims, dtype=np.float64)
    ff[body] = spec.lean_ff
    ff[subcut] = spec.subcutaneous_ff
    ff[liver] = spec.liver_ff
    return ff, body, liver, subcut


def _bias_field(spec: PhantomSpec) -> np.ndarray:
    if spec.bias_amplitude == 0.0:
        return np.ones(spec.grid.target_dims, dtype=np.float64)
    gx, gy, gz = _voxel_grids(spec)
    ex = spec.grid.target_spacing[0] * spec.grid.target_dims[0]
    ey = spec.grid.target_spacing[1] * spec.grid.target_dims[1]
    ez = spec.grid.target_spacing[2] * spec.grid.target_dims[2]
    g = np.cos(np.pi * gx / ex) * np.cos(np.pi * gy / ey) * np.cos(np.pi * gz / ez)
    return 1.0 + spec.bias_amplitude * g


def station_layout(nz: int, count: int, overlap: int) -> list[tuple[int, int]]:
    """Start/end voxel ranges of z stations covering [0, nz) with overlap."""
    if count == 1:
        return [(0, nz)]
    height = -(-(nz + (count - 1) * overlap) // count)
    if height <= overlap:
        raise ValueError("station overlap leaves no unique slab per station")
    spans = []
    for i in range(count):
        start = i * (height - overlap)
        spans.append((start, min(start + height, nz)))
    return spans


def _split_stations(spec: PhantomSpec, data: np.ndarray, noise_streams) -> StationStack:
    sx, sy, sz = spec.grid.target_spacing
    nz = spec.grid.target_dims[2]
    stations, offsets = [], []
    for (start, end), rng in zip(
        station_layout(nz, spec.station_count, spec.station_overlap), noise_streams
    ):
        slab = data[:, :, start:end].copy()
        if spec.noise_sigma > 0:
            slab += rng.normal(0.0, spec.noise_sigma, slab.shape)
            np.clip(slab, 0.0, None, out=slab)
        dims = (spec.grid.target_dims[0], spec.grid.target_dims[1], end - start)
        stations.append(
            Volume3(dims, spec.grid.target_spacing, (0.0, 0.0, start * sz), slab)
        )
        offsets.append(start * sz)
    return StationStack(stations, offsets)


def generate_phantom(spec: PhantomSpec):
    """Build one phantom: (water stations, fat stations, truth).

    Deterministic for a fixed spec and seed. Per-station noise streams are
    derived from the seed in a fixed order, so overlapping slabs carry
    independent noise and fusion genuinely averages.
    """
    ff, body, liver, _ = make_compartments(spec)
    bias = _bias_field(spec)
    fat = ff * bias * body
    water = (1.0 - ff) * bias * body

    streams = [
        np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(1, i)))
        for i in range(2 * spec.station_count)
    ]
    water_stack = _split_stations(spec, water, streams[: spec.station_count])
    fat_stack = _split_stations(spec, fat, streams[spec.station_count :])

    grid = (spec.grid.target_dims, spec.grid.target_spacing, (0.0, 0.0, 0.0))
    truth = PhantomTruth(
        liver_ff=spec.liver_ff,
        liver_mask=BinaryMask(*grid, liver),
        body_mask_truth=BinaryMask(*grid, body),
    )
    return water_stack, fat_stack, truth


def simulate_reference_acquisition(spec: PhantomSpec) -> Volume3:
    """Fat-fraction volume as the reference method would see it.

    The reference acquisition is separate from the station scan, so it
    draws its own noise realization over the full noise-free volume.
    """
    ff, body, _, _ = make_compartments(spec)
    bias = _bias_field(spec)
    fat = ff * bias * body
    water = (1.0 - ff) * bias * body
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=spec.seed, spawn_key=(2,))
        )
        fat = np.clip(fat + rng.normal(0.0, spec.noise_sigma, fat.shape), 0.0, None)
        water = np.clip(
            water + rng.normal(0.0, spec.noise_sigma, water.shape), 0.0, None
        )
    s = water + fat
    out = np.where(s < 1e-6, 0.0, fat / np.where(s < 1e-6, 1.0, s))
    return Volume3(spec.grid.target_dims, spec.grid.target_spacing, (0.0, 0.0, 0.0), out)


def _roi_ball_offsets(radius: int) -> np.ndarray:
    ax = np.arange(-radius, radius + 1)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    keep = gx**2 + gy**2 + gz**2 <= radius**2
    return np.stack([gx[keep], gy[keep], gz[keep]], axis=1)


def reference_roi_measurement(
    ff_vol: Volume3,
    liver_mask: BinaryMask,
    seed: int,
    roi_radius: int = 2,
    erosion_diameter: int = 5,
    n_rois: int = 3,
) -> float:
    """Mean fat fraction of randomly placed disjoint spherical ROIs.

    ROI centers are drawn inside the liver mask eroded by the given
    diameter, which keeps every ROI voxel away from compartment borders.
    Deterministic per seed.
    """
    eroded = erode_spherical(liver_mask, erosion_diameter)
    centers = np.argwhere(eroded.data)
    if len(centers) == 0:
        raise ValueError("liver too small: erosion left no candidate ROI centers")
    offsets = _roi_ball_offsets(roi_radius)
    rng = np.random.default_rng(seed)
    used = np.zeros(liver_mask.dims, dtype=bool)
    means = []
    for _ in range(200 * n_rois):
        if len(means) == n_rois:
            break
        c = centers[rng.integers(len(centers))]
        vox = c + offsets
        ix, iy, iz = vox[:, 0], vox[:, 1], vox[:, 2]
        if used[ix, iy, iz].any():
            continue
        used[ix, iy, iz] = True
        means.append(float(ff_vol.data[ix, iy, iz].mean()))
    if len(means) < n_rois:
        raise ValueError(
            f"liver too small: placed only {len(means)} of {n_rois} disjoint ROIs"
        )
    return float(np.mean(means))


def draw_cohort_params(spec: CohortSpec) -> list[SubjectParams]:
    """Per-subject parameters, drawn order-independently from the seed.

    Liver size and position follow the body scale (larger subjects carry
    larger, proportionally placed livers); the residual pose jitter on
    top of that is small and independent.
    """
    out = []
    for i in range(spec.n_subjects):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=spec.seed, spawn_key=(i,))
        )
        liver_ff = float(rng.uniform(spec.ff_low, spec.ff_high))
        torso_scale = float(rng.uniform(0.95, 1.05))
        liver_scale = tuple(rng.uniform(0.97, 1.03, 3))
        liver_shift = tuple(rng.uniform(-3.0, 3.0, 3))
        sub_seed = int(rng.integers(0, 2**63 - 1))
        out.append(
            SubjectParams(
                index=i,
                subject_id=f"sub_{i:04d}",
                liver_ff=liver_ff,
                torso_scale=torso_scale,
                liver_scale=liver_scale,
                liver_shift=liver_shift,
                seed=sub_seed,
            )
        )
    return out


def spec_for_subject(cohort: CohortSpec, params: SubjectParams) -> PhantomSpec:
    base = cohort.phantom
    s = params.torso_scale
    # liver center scales with the torso about the torso center
    center = tuple(
        tc + (lc - tc) * s + d
        for tc, lc, d in zip(base.torso_center, base.liver_center, params.liver_shift)
    )
    return dataclasses.replace(
        base,
        torso_half_axes=tuple(a * s for a in base.torso_half_axes),
        leg_radius=base.leg_radius * s,
        liver_center=center,
        liver_half_axes=tuple(
            a * s * ls for a, ls in zip(base.liver_half_axes, params.liver_scale)
        ),
        liver_ff=params.liver_ff,
        seed=params.seed,
    )


@dataclass
class CohortSubject:
    subject_id: str
    water: StationStack
    fat: StationStack
    truth: PhantomTruth
    reference_ff: float
    spec: PhantomSpec


def build_subject(cohort: CohortSpec, params: SubjectParams) -> CohortSubject:
    spec = spec_for_subject(cohort, params)
    water, fat, truth = generate_phantom(spec)
    ref_vol = simulate_reference_acquisition(spec)
    # ROI placement gets its own stream, decoupled from the image noise.
    roi_seed = int(
        np.random.SeedSequence(entropy=params.seed, spawn_key=(3,)).generate_state(1)[0]
    )
    ref = reference_roi_measurement(ref_vol, truth.liver_mask, seed=roi_seed)
    return CohortSubject(params.subject_id, water, fat, truth, ref, spec)


def iter_cohort(spec: CohortSpec):
    """Yield subjects one at a time; use for large cohorts."""
    for params in draw_cohort_params(spec):
        yield build_subject(spec, params)


def generate_cohort(spec: CohortSpec) -> list[CohortSubject]:
    return list(iter_cohort(spec))
