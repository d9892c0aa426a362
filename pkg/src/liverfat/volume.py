"""3-D scalar grids with physical spacing, plus the shared grid operations.

Axis convention, fixed project-wide: x spans the subject's left-right
direction with index 0 at the subject's right side, y runs anterior to
posterior, z runs superior to inferior.  Arrays are indexed [x, y, z].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

# Voxel-coordinate fuzz below this is snapped to the nearest integer, so
# sampling at an exact voxel center reproduces that voxel bit-for-bit.
_SNAP_EPS = 1e-9


def _as_triple(v, dtype=float):
    t = tuple(dtype(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"expected 3 components, got {len(t)}")
    return t


@dataclass
class Volume3:
    """Scalar volume on a regular grid.

    dims are voxel counts per axis, spacing is millimeters per voxel and
    origin is the millimeter position of the center of voxel (0, 0, 0).
    data has shape dims and is indexed [x, y, z].
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        self.dims = _as_triple(self.dims, int)
        self.spacing = _as_triple(self.spacing)
        self.origin = _as_triple(self.origin)
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != self.dims:
            if self.data.size == int(np.prod(self.dims)):
                self.data = self.data.reshape(self.dims)
            else:
                raise ValueError(
                    f"data size {self.data.size} does not match dims {self.dims}"
                )

    def grid(self) -> tuple:
        return (self.dims, self.spacing, self.origin)

    def same_grid(self, other) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=0, atol=1e-9)
            and np.allclose(self.origin, other.origin, rtol=0, atol=1e-9)
        )

    def axis_coords(self, axis: int) -> np.ndarray:
        """Millimeter positions of voxel centers along one axis."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def with_data(self, data: np.ndarray) -> "Volume3":
        return Volume3(self.dims, self.spacing, self.origin, data)


@dataclass
class BinaryMask:
    """Boolean volume sharing the Volume3 grid conventions."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray

    def __post_init__(self):
        self.dims = _as_triple(self.dims, int)
        self.spacing = _as_triple(self.spacing)
        self.origin = _as_triple(self.origin)
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be >= 1, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be > 0, got {self.spacing}")
        self.data = np.asarray(self.data, dtype=bool)
        if self.data.shape != self.dims:
            if self.data.size == int(np.prod(self.dims)):
                self.data = self.data.reshape(self.dims)
            else:
                raise ValueError(
                    f"mask size {self.data.size} does not match dims {self.dims}"
                )

    @property
    def voxel_count(self) -> int:
        return int(self.data.sum())

    def grid(self) -> tuple:
        return (self.dims, self.spacing, self.origin)

    def same_grid(self, other) -> bool:
        return Volume3.same_grid(self, other)

    def as_volume(self) -> Volume3:
        return Volume3(self.dims, self.spacing, self.origin, self.data.astype(np.float64))

    def with_data(self, data: np.ndarray) -> "BinaryMask":
        return BinaryMask(self.dims, self.spacing, self.origin, data)


@dataclass
class ResampleSpec:
    """Target grid for resampling.

    The default is the fused neck-to-knee grid: 2.23 x 2.23 x 3.0 mm at
    224 x 174 x 370 voxels under the project axis convention (z carries
    the 370-voxel extent at 3 mm).
    """

    target_spacing: tuple[float, float, float] = (2.23, 2.23, 3.0)
    target_dims: tuple[int, int, int] = (224, 174, 370)

    def __post_init__(self):
        self.target_spacing = _as_triple(self.target_spacing)
        self.target_dims = _as_triple(self.target_dims, int)
        if any(s <= 0 for s in self.target_spacing):
            raise ValueError("target spacing must be > 0")
        if any(d < 1 for d in self.target_dims):
            raise ValueError("target dims must be >= 1")


@dataclass
class StationStack:
    """Ordered acquisition stations sharing the x/y grid.

    z_offsets give the superior edge of each station in millimeters
    (the z coordinate of its first voxel center). Consecutive stations
    must overlap or abut.
    """

    stations: list[Volume3]
    z_offsets: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.stations:
            raise ValueError("station stack must not be empty")
        if len(self.z_offsets) != len(self.stations):
            raise ValueError("one z offset per station required")
        self.z_offsets = [float(z) for z in self.z_offsets]
        for i in range(len(self.stations) - 1):
            extent = self.stations[i].dims[2] * self.stations[i].spacing[2]
            if self.z_offsets[i + 1] > self.z_offsets[i] + extent + 1e-9:
                raise ValueError(
                    f"stations {i} and {i + 1} neither overlap nor abut"
                )


def sample_points(vol: Volume3, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of vol at millimeter positions (N, 3).

    Points outside the hull of voxel centers return 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    dims = np.asarray(vol.dims)
    u = (pts - np.asarray(vol.origin)) / np.asarray(vol.spacing)
    r = np.round(u)
    u = np.where(np.abs(u - r) < _SNAP_EPS, r, u)
    valid = np.all((u >= 0.0) & (u <= dims - 1), axis=1)

    i0 = np.floor(u).astype(np.int64)
    i0 = np.clip(i0, 0, np.maximum(dims - 2, 0))
    f = u - i0
    i1 = np.minimum(i0 + 1, dims - 1)

    d = vol.data
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1, y1, z1 = i1[:, 0], i1[:, 1], i1[:, 2]
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    c00 = d[x0, y0, z0] * (1 - fx) + d[x1, y0, z0] * fx
    c10 = d[x0, y1, z0] * (1 - fx) + d[x1, y1, z0] * fx
    c01 = d[x0, y0, z1] * (1 - fx) + d[x1, y0, z1] * fx
    c11 = d[x0, y1, z1] * (1 - fx) + d[x1, y1, z1] * fx
    out = (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz
    out[~valid] = 0.0
    return out


def trilinear_sample(vol: Volume3, point) -> float:
    """Value of vol at a single millimeter position; 0 outside the grid."""
    return float(sample_points(vol, np.asarray(point, dtype=np.float64)[None, :])[0])


def resample(vol: Volume3, spec: ResampleSpec) -> Volume3:
    """Resample onto the spec grid, origin preserved, trilinear at centers."""
    nx, ny, nz = spec.target_dims
    ax = vol.origin[0] + spec.target_spacing[0] * np.arange(nx)
    ay = vol.origin[1] + spec.target_spacing[1] * np.arange(ny)
    az = vol.origin[2] + spec.target_spacing[2] * np.arange(nz)
    gx, gy, gz = np.meshgrid(ax, ay, az, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    data = sample_points(vol, pts).reshape(nx, ny, nz)
    return Volume3(spec.target_dims, spec.target_spacing, vol.origin, data)


def fuse_stations(stack: StationStack) -> Volume3:
    """Fuse stations into one volume spanning the union z extent.

    Overlapping slabs blend as the unweighted mean of contributing
    stations. Stations must share x/y dims, spacing and x/y origin, and
    their z offsets must align to the common voxel grid.
    """
    first = stack.stations[0]
    sx, sy, sz = first.spacing
    for st in stack.stations[1:]:
        if st.dims[:2] != first.dims[:2]:
            raise ValueError("stations differ in x/y dims")
        if not np.allclose(st.spacing, first.spacing, rtol=0, atol=1e-9):
            raise ValueError("stations differ in spacing")
        if not np.allclose(st.origin[:2], first.origin[:2], rtol=0, atol=1e-9):
            raise ValueError("stations differ in x/y origin")

    z0 = min(stack.z_offsets)
    starts = []
    for off in stack.z_offsets:
        k = (off - z0) / sz
        kr = round(k)
        if abs(k - kr) > 1e-6:
            raise ValueError("station z offsets do not align to the voxel grid")
        starts.append(int(kr))
    nz = max(k + st.dims[2] for k, st in zip(starts, stack.stations))

    nx, ny = first.dims[:2]
    acc = np.zeros((nx, ny, nz), dtype=np.float64)
    cnt = np.zeros(nz, dtype=np.int64)
    for k, st in zip(starts, stack.stations):
        acc[:, :, k : k + st.dims[2]] += st.data
        cnt[k : k + st.dims[2]] += 1
    if np.any(cnt == 0):
        raise ValueError("stations leave a gap in z")
    acc /= cnt[None, None, :]
    origin = (first.origin[0], first.origin[1], z0)
    return Volume3((nx, ny, nz), first.spacing, origin, acc)


def _slab_counts(mask: BinaryMask, axis: int) -> np.ndarray:
    other = tuple(a for a in range(3) if a != axis)
    return mask.data.sum(axis=other)


def center_of_mass_index(mask: BinaryMask, axis: int) -> int:
    """Set-voxel-weighted mean index along axis, rounded half away from zero."""
    counts = _slab_counts(mask, axis)
    total = counts.sum()
    if total == 0:
        raise ValueError("mask is empty")
    mean = float(np.dot(np.arange(len(counts)), counts)) / float(total)
    idx = int(np.floor(mean + 0.5)) if mean >= 0 else -int(np.floor(-mean + 0.5))
    return int(np.clip(idx, 0, mask.dims[axis] - 1))


def quantile_of_mass_index(mask: BinaryMask, axis: int, q: float) -> int:
    """Smallest index whose cumulative slab count reaches q of the total.

    Cumulation starts at index 0, which on the x axis is the subject's
    right side.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    counts = _slab_counts(mask, axis)
    total = counts.sum()
    if total == 0:
        raise ValueError("mask is empty")
    cum = np.cumsum(counts)
    return int(np.searchsorted(cum, q * total, side="left"))


def spherical_structure(diameter: int) -> np.ndarray:
    """Ball of the given voxel diameter under isotropic index distance."""
    if diameter < 1 or diameter % 2 == 0:
        raise ValueError(f"diameter must be odd and >= 1, got {diameter}")
    r = (diameter - 1) // 2
    ax = np.arange(-r, r + 1)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    return gx * gx + gy * gy + gz * gz <= r * r


def erode_spherical(mask: BinaryMask, diameter: int) -> BinaryMask:
    """Keep a voxel iff every voxel within the ball radius is set.

    Voxels outside the grid count as unset, so objects touching the
    border erode away.
    """
    structure = spherical_structure(diameter)
    if diameter == 1:
        return mask.with_data(mask.data.copy())
    out = ndimage.binary_erosion(mask.data, structure=structure, border_value=0)
    return mask.with_data(out)


def intersect_masks(masks: list[BinaryMask]) -> BinaryMask:
    """Voxelwise logical AND of one or more masks with identical dims."""
    if not masks:
        raise ValueError("need at least one mask")
    first = masks[0]
    out = first.data.copy()
    for m in masks[1:]:
        if m.dims != first.dims:
            raise ValueError(f"mask dims mismatch: {m.dims} vs {first.dims}")
        out &= m.data
    return first.with_data(out)


def mask_dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap of two masks on the same grid."""
    if a.dims != b.dims:
        raise ValueError("mask dims mismatch")
    inter = int((a.data & b.data).sum())
    denom = a.voxel_count + b.voxel_count
    if denom == 0:
        return 1.0
    return 2.0 * inter / denom
