"""Fat-fraction computation and the 2-D network input format.

The pipeline: voxelwise fat fraction from paired water/fat volumes, a body
mask from per-coronal-slice Otsu thresholds of the summed signal, slice
selection by mass, cropping to the superior body half, and concatenation
of the coronal and sagittal crops into one 8-bit image encoding fractions
of 0 to 50%.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .volume import (
    BinaryMask,
    Volume3,
    center_of_mass_index,
    quantile_of_mass_index,
)

SUM_EPSILON = 1e-6


@dataclass
class EncodingSpec:
    """8-bit window for fat fractions; the default covers 0-50%."""

    ff_min: float = 0.0
    ff_max: float = 0.5
    levels: int = 256

    def __post_init__(self):
        if not self.ff_min < self.ff_max:
            raise ValueError("ff_min must be < ff_max")


@dataclass
class SliceImage:
    """2-D 8-bit composed network input; data shape (height, width)."""

    width: int
    height: int
    data: np.ndarray
    encoding: EncodingSpec = field(default_factory=EncodingSpec)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.data.shape != (self.height, self.width):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height} x {self.width}"
            )


@dataclass
class LayoutConfig:
    """Crop and concatenation geometry for the composed input.

    Both crops keep the superior half of z as rows. The lateral window is
    the tight bounding interval of the body mask in the kept rows, padded
    or clipped symmetrically to crop_width voxels. Each crop is resized to
    (out_height / 2, out_width) and the coronal crop is stacked above the
    sagittal crop. Desk default composes 96 x 44; the paper-scale preset
    composes 376 x 176.
    """

    out_height: int = 96
    out_width: int = 44
    crop_width: int = 56

    def __post_init__(self):
        if self.out_height % 2 != 0:
            raise ValueError("out_height must be even (two stacked crops)")
        if min(self.out_height, self.out_width, self.crop_width) < 2:
            raise ValueError("layout dimensions must be >= 2")

    @classmethod
    def paper_scale(cls) -> "LayoutConfig":
        return cls(out_height=376, out_width=176, crop_width=176)


def fat_fraction(water: Volume3, fat: Volume3) -> Volume3:
    """fat / (water + fat) per voxel, 0 where the summed signal vanishes."""
    if not water.same_grid(fat):
        raise ValueError("water and fat grids differ")
    s = water.data + fat.data
    low = s < SUM_EPSILON
    out = np.where(low, 0.0, fat.data / np.where(low, 1.0, s))
    return water.with_data(out)


def water_fraction(water: Volume3, fat: Volume3) -> Volume3:
    """water / (water + fat) per voxel, 0 where the summed signal vanishes."""
    if not water.same_grid(fat):
        raise ValueError("water and fat grids differ")
    s = water.data + fat.data
    low = s < SUM_EPSILON
    out = np.where(low, 0.0, water.data / np.where(low, 1.0, s))
    return water.with_data(out)


def otsu_threshold(values, bins: int = 256) -> float:
    """Histogram threshold maximizing between-class variance.

    Ties pick the lowest qualifying bin; the returned threshold is the
    upper edge of that bin mapped back to value space.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("need at least 2 values")
    vmin, vmax = v.min(), v.max()
    if vmin == vmax:
        raise ValueError("constant input has no threshold")
    counts, edges = np.histogram(v, bins=bins, range=(vmin, vmax))
    p = counts / counts.sum()
    mids = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)
    m0 = np.cumsum(p * mids)
    mu = m0[-1]
    w1 = 1.0 - w0
    # between-class variance; zero where a class is empty
    num = (mu * w0 - m0) ** 2
    den = w0 * w1
    sigma_b = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    t = int(np.argmax(sigma_b))
    return float(edges[t + 1])


def body_mask(water: Volume3, fat: Volume3) -> BinaryMask:
    """Threshold the summed signal at the mean of per-coronal-slice Otsu values.

    Coronal slices are fixed-y planes. Slices without at least two
    distinct values do not contribute to the mean.
    """
    if not water.same_grid(fat):
        raise ValueError("water and fat grids differ")
    s = water.data + fat.data
    thresholds = []
    for y in range(water.dims[1]):
        plane = s[:, y, :]
        if plane.max() > plane.min():
            thresholds.append(otsu_threshold(plane))
    if not thresholds:
        raise ValueError("all coronal slices are constant; no body threshold")
    global_t = float(np.mean(thresholds))
    return BinaryMask(water.dims, water.spacing, water.origin, s > global_t)


def select_slices(mask: BinaryMask) -> tuple[int, int]:
    """(coronal_y, sagittal_x): center of mass in y, quarter of mass in x."""
    return (
        center_of_mass_index(mask, axis=1),
        quantile_of_mass_index(mask, axis=0, q=0.25),
    )


def encode8(ff, spec: EncodingSpec | None = None):
    """Quantize fat fractions to u8 codes, round half up, clamped to the window."""
    spec = spec or EncodingSpec()
    ff = np.asarray(ff, dtype=np.float64)
    rel = np.clip((ff - spec.ff_min) / (spec.ff_max - spec.ff_min), 0.0, 1.0)
    code = np.floor(rel * (spec.levels - 1) + 0.5).astype(np.uint8)
    return code if code.ndim else np.uint8(code)


def decode8(code, spec: EncodingSpec | None = None):
    """Map u8 codes back to fat fractions."""
    spec = spec or EncodingSpec()
    v = np.asarray(code, dtype=np.float64)
    out = v / (spec.levels - 1) * (spec.ff_max - spec.ff_min) + spec.ff_min
    return out if out.ndim else float(out)


def _tight_interval(mask_plane: np.ndarray) -> tuple[int, int]:
    # mask_plane shape (lateral, kept z rows)
    cols = np.flatnonzero(mask_plane.any(axis=1))
    if cols.size == 0:
        raise ValueError("body mask is empty in the kept slice region")
    return int(cols[0]), int(cols[-1])


def _window_from_interval(lo: int, hi: int, width: int) -> int:
    # symmetric pad/clip of [lo, hi] to the fixed width; returns window start
    span = hi - lo + 1
    return lo + (span - width) // 2


def _extract(plane: np.ndarray, col_start: int, width: int, rows: int) -> np.ndarray:
    # plane shape (lateral, nz); result (rows, width) with out-of-range 0
    out = np.zeros((rows, width), dtype=np.float64)
    lo = max(col_start, 0)
    hi = min(col_start + width, plane.shape[0])
    if lo < hi:
        out[:, lo - col_start : hi - col_start] = plane[lo:hi, :rows].T
    return out


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = img.shape
    rr = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    cc = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    r0 = np.clip(np.floor(rr).astype(int), 0, max(in_h - 2, 0))
    c0 = np.clip(np.floor(cc).astype(int), 0, max(in_w - 2, 0))
    fr = np.clip(rr - r0, 0.0, 1.0)[:, None]
    fc = np.clip(cc - c0, 0.0, 1.0)[None, :]
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    top = img[np.ix_(r0, c0)] * (1 - fc) + img[np.ix_(r0, c1)] * fc
    bot = img[np.ix_(r1, c0)] * (1 - fc) + img[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


@dataclass
class CropInfo:
    coronal_y: int
    sagittal_x: int
    z_rows: int
    coronal_x_start: int
    sagittal_y_start: int
    width: int


def crop_windows(mask: BinaryMask, layout: LayoutConfig) -> CropInfo:
    """Slice indices and lateral windows that compose_input will use."""
    cy, sx = select_slices(mask)
    nz = mask.dims[2]
    z_rows = -(-nz // 2)
    cor = mask.data[:, cy, :z_rows]
    sag = mask.data[sx, :, :z_rows]
    xlo, xhi = _tight_interval(cor)
    ylo, yhi = _tight_interval(sag)
    return CropInfo(
        coronal_y=cy,
        sagittal_x=sx,
        z_rows=z_rows,
        coronal_x_start=_window_from_interval(xlo, xhi, layout.crop_width),
        sagittal_y_start=_window_from_interval(ylo, yhi, layout.crop_width),
        width=layout.crop_width,
    )


def compose_input(
    ff: Volume3,
    mask: BinaryMask,
    layout: LayoutConfig,
    encoding: EncodingSpec | None = None,
) -> SliceImage:
    """Compose the 2-D network input from the fat-fraction volume.

    The body mask only steers slice selection and the lateral windows; it
    is never multiplied into the pixel data.
    """
    encoding = encoding or EncodingSpec()
    info = crop_windows(mask, layout)
    half = layout.out_height // 2

    cor_plane = ff.data[:, info.coronal_y, :]
    sag_plane = ff.data[info.sagittal_x, :, :]
    cor = _extract(cor_plane, info.coronal_x_start, info.width, info.z_rows)
    sag = _extract(sag_plane, info.sagittal_y_start, info.width, info.z_rows)

    cor_r = _resize_bilinear(cor, half, layout.out_width)
    sag_r = _resize_bilinear(sag, half, layout.out_width)
    stacked = np.vstack([cor_r, sag_r])
    return SliceImage(
        width=layout.out_width,
        height=layout.out_height,
        data=encode8(stacked, encoding),
        encoding=encoding,
    )


def write_pgm(img: SliceImage, path) -> None:
    """Write the image as binary PGM (P5, maxval 255)."""
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(img.data.tobytes())


def read_pgm(path, encoding: EncodingSpec | None = None) -> SliceImage:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM file")
    w, h = (int(t) for t in parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"{path}: unsupported maxval")
    data = np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)
    return SliceImage(width=w, height=h, data=data.copy(), encoding=encoding or EncodingSpec())
