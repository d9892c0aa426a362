import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liverfat.volume import (
    BinaryMask,
    ResampleSpec,
    StationStack,
    Volume3,
    center_of_mass_index,
    erode_spherical,
    fuse_stations,
    intersect_masks,
    mask_dice,
    quantile_of_mass_index,
    resample,
    spherical_structure,
    trilinear_sample,
)

from conftest import make_mask, make_volume


def random_mask(rng, dims):
    return make_mask(rng.random(dims) < 0.5)


# ---------------------------------------------------------------- trilinear

def test_sample_at_voxel_center_is_identity():
    rng = np.random.default_rng(1)
    vol = make_volume(rng.random((4, 5, 6)), spacing=(2.0, 1.0, 3.0))
    assert trilinear_sample(vol, (2 * 2.0, 3 * 1.0, 4 * 3.0)) == vol.data[2, 3, 4]


def test_sample_constant_volume_interior():
    vol = make_volume(np.full((4, 4, 4), 7.25))
    assert trilinear_sample(vol, (1.3, 2.7, 0.6)) == pytest.approx(7.25)


def test_sample_midpoint_between_two_centers():
    # neighbors valued 2 and 4 along x, equal along y/z: midpoint gives 3
    data = np.zeros((2, 2, 2))
    data[0] = 2.0
    data[1] = 4.0
    vol = make_volume(data)
    assert trilinear_sample(vol, (0.5, 0.0, 0.0)) == pytest.approx(3.0)


def test_sample_outside_returns_zero():
    vol = make_volume(np.ones((3, 3, 3)))
    assert trilinear_sample(vol, (-1.0, 0.0, 0.0)) == 0.0
    assert trilinear_sample(vol, (0.0, 0.0, 5.0)) == 0.0


# ----------------------------------------------------------------- resample

def test_resample_identity_spec_is_exact():
    rng = np.random.default_rng(2)
    vol = make_volume(rng.random((6, 5, 4)), spacing=(1.5, 2.0, 2.5))
    out = resample(vol, ResampleSpec(vol.spacing, vol.dims))
    np.testing.assert_array_equal(out.data, vol.data)


def test_resample_constant_volume():
    vol = make_volume(np.full((8, 8, 8), 3.5))
    out = resample(vol, ResampleSpec((0.7, 1.3, 0.9), (5, 5, 5)))
    np.testing.assert_allclose(out.data, 3.5, atol=1e-12)


def test_resample_downsamples_linear_ramp():
    # ramp along x doubles its per-voxel increment under 2x downsampling
    nx = 16
    ramp = np.broadcast_to(
        0.25 * np.arange(nx)[:, None, None], (nx, 4, 4)
    ).copy()
    vol = make_volume(ramp)
    out = resample(vol, ResampleSpec((2.0, 1.0, 1.0), (nx // 2, 4, 4)))
    expected = 0.5 * np.arange(nx // 2)[:, None, None] * np.ones((1, 4, 4))
    assert np.abs(out.data - expected).max() < 1e-5


# -------------------------------------------------------------------- fuse

def _station(data, z0, spacing=(1.0, 1.0, 1.0)):
    data = np.asarray(data, dtype=np.float64)
    return Volume3(data.shape, spacing, (0.0, 0.0, z0), data)


def test_fuse_single_station_unchanged():
    st_ = _station(np.random.default_rng(3).random((3, 3, 5)), 0.0)
    out = fuse_stations(StationStack([st_], [0.0]))
    np.testing.assert_array_equal(out.data, st_.data)


def test_fuse_two_abutting_constants():
    a = _station(np.full((2, 2, 4), 1.0), 0.0)
    b = _station(np.full((2, 2, 4), 3.0), 4.0)
    out = fuse_stations(StationStack([a, b], [0.0, 4.0]))
    assert out.dims == (2, 2, 8)
    np.testing.assert_array_equal(out.data[:, :, :4], 1.0)
    np.testing.assert_array_equal(out.data[:, :, 4:], 3.0)


def test_fuse_overlap_blends_mean():
    a = _station(np.full((2, 2, 8), 1.0), 0.0)
    b = _station(np.full((2, 2, 8), 3.0), 4.0)
    out = fuse_stations(StationStack([a, b], [0.0, 4.0]))
    np.testing.assert_array_equal(out.data[:, :, :4], 1.0)
    np.testing.assert_array_equal(out.data[:, :, 4:8], 2.0)
    np.testing.assert_array_equal(out.data[:, :, 8:], 3.0)


def test_fuse_rejects_mismatched_xy():
    a = _station(np.ones((2, 2, 4)), 0.0)
    b = _station(np.ones((3, 2, 4)), 4.0)
    with pytest.raises(ValueError, match="x/y dims"):
        fuse_stations(StationStack([a, b], [0.0, 4.0]))


def test_fuse_identical_overlapping_stations_is_idempotent():
    rng = np.random.default_rng(4)
    base = rng.random((3, 3, 6))
    stations = [_station(base, 0.0), _station(base, 0.0), _station(base, 0.0)]
    out = fuse_stations(StationStack(stations, [0.0, 0.0, 0.0]))
    assert np.abs(out.data - base).max() <= 1e-6


def test_station_stack_rejects_gap():
    a = _station(np.ones((2, 2, 4)), 0.0)
    b = _station(np.ones((2, 2, 4)), 9.0)
    with pytest.raises(ValueError, match="overlap"):
        StationStack([a, b], [0.0, 9.0])


# ---------------------------------------------------------- mass indices

def test_com_symmetric_mask():
    data = np.zeros((9, 3, 3), dtype=bool)
    data[2:7] = True  # symmetric about x = 4
    assert center_of_mass_index(make_mask(data), axis=0) == 4


def test_com_single_slab():
    data = np.zeros((9, 3, 3), dtype=bool)
    data[5] = True
    assert center_of_mass_index(make_mask(data), axis=0) == 5


def test_com_two_voxels():
    data = np.zeros((10, 1, 1), dtype=bool)
    data[2, 0, 0] = True
    data[8, 0, 0] = True
    assert center_of_mass_index(make_mask(data), axis=0) == 5


def test_com_rounds_half_away_from_zero():
    data = np.zeros((10, 1, 1), dtype=bool)
    data[2, 0, 0] = True
    data[3, 0, 0] = True
    assert center_of_mass_index(make_mask(data), axis=0) == 3


def test_com_empty_mask_raises():
    with pytest.raises(ValueError, match="empty"):
        center_of_mass_index(make_mask(np.zeros((3, 3, 3), dtype=bool)), axis=0)


def test_quantile_one_voxel_per_slab():
    data = np.zeros((100, 1, 1), dtype=bool)
    data[:, 0, 0] = True
    assert quantile_of_mass_index(make_mask(data), axis=0, q=0.25) == 24


def test_quantile_mass_all_in_one_slab():
    data = np.zeros((12, 2, 2), dtype=bool)
    data[7] = True
    assert quantile_of_mass_index(make_mask(data), axis=0, q=0.25) == 7


def test_quantile_half_matches_com_on_symmetric_mask():
    rng = np.random.default_rng(5)
    half = rng.random((6, 4, 4)) < 0.4
    data = np.concatenate([half, half[::-1]], axis=0)
    m = make_mask(data)
    if m.voxel_count:
        q = quantile_of_mass_index(m, axis=0, q=0.5)
        c = center_of_mass_index(m, axis=0)
        assert abs(q - c) <= 1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_mass_indices_match_counting_oracle(seed, q):
    rng = np.random.default_rng(seed)
    dims = tuple(int(d) for d in rng.integers(2, 17, 3))
    data = rng.random(dims) < 0.3
    if not data.any():
        data[0, 0, 0] = True
    m = make_mask(data)
    axis = int(rng.integers(0, 3))
    counts = [int(data.take(i, axis=axis).sum()) for i in range(dims[axis])]
    total = sum(counts)
    mean = sum(i * c for i, c in enumerate(counts)) / total
    want_com = int(np.floor(mean + 0.5))
    assert center_of_mass_index(m, axis) == min(max(want_com, 0), dims[axis] - 1)
    cum = 0
    for i, c in enumerate(counts):
        cum += c
        if cum >= q * total:
            want_q = i
            break
    assert quantile_of_mass_index(m, axis, q) == want_q


# ----------------------------------------------------------------- erosion

def erode_oracle(data, diameter):
    # brute-force reference: voxel kept iff ball around it is fully set
    r = (diameter - 1) // 2
    struct = spherical_structure(diameter)
    offs = np.argwhere(struct) - r
    out = np.zeros_like(data)
    for idx in np.argwhere(data):
        keep = True
        for o in offs:
            q = idx + o
            if np.any(q < 0) or np.any(q >= data.shape) or not data[tuple(q)]:
                keep = False
                break
        out[tuple(idx)] = keep
    return out


def test_erode_single_voxel_large_kernel_empties():
    data = np.zeros((9, 9, 9), dtype=bool)
    data[4, 4, 4] = True
    assert erode_spherical(make_mask(data), 7).voxel_count == 0


def test_erode_diameter_one_is_identity():
    rng = np.random.default_rng(6)
    m = random_mask(rng, (6, 6, 6))
    out = erode_spherical(m, 1)
    np.testing.assert_array_equal(out.data, m.data)


def test_erode_cube_diameter_three():
    data = np.zeros((11, 11, 11), dtype=bool)
    data[1:10, 1:10, 1:10] = True
    out = erode_spherical(make_mask(data), 3)
    expected = np.zeros_like(data)
    expected[2:9, 2:9, 2:9] = True
    np.testing.assert_array_equal(out.data, expected)


def test_erode_matches_bruteforce_oracle():
    rng = np.random.default_rng(7)
    data = rng.random((10, 10, 10)) < 0.8
    for d in (3, 5):
        np.testing.assert_array_equal(
            erode_spherical(make_mask(data), d).data, erode_oracle(data, d)
        )


def test_erode_rejects_even_diameter():
    with pytest.raises(ValueError, match="odd"):
        erode_spherical(make_mask(np.ones((3, 3, 3), dtype=bool)), 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_erode_subset_and_monotone(seed):
    rng = np.random.default_rng(seed)
    m = make_mask(rng.random((8, 8, 8)) < 0.7)
    e3 = erode_spherical(m, 3)
    e5 = erode_spherical(m, 5)
    assert not np.any(e3.data & ~m.data)
    assert not np.any(e5.data & ~e3.data)


# ------------------------------------------------------------- intersection

def test_intersect_single_mask_is_itself():
    rng = np.random.default_rng(8)
    m = random_mask(rng, (5, 5, 5))
    np.testing.assert_array_equal(intersect_masks([m]).data, m.data)


def test_intersect_with_complement_is_empty():
    rng = np.random.default_rng(9)
    m = random_mask(rng, (5, 5, 5))
    comp = m.with_data(~m.data)
    assert intersect_masks([m, comp]).voxel_count == 0


def test_intersect_three_matches_loop_oracle():
    rng = np.random.default_rng(10)
    masks = [random_mask(rng, (6, 6, 6)) for _ in range(3)]
    out = intersect_masks(masks)
    for idx in np.ndindex(6, 6, 6):
        assert out.data[idx] == (
            masks[0].data[idx] and masks[1].data[idx] and masks[2].data[idx]
        )


def test_intersect_shape_mismatch():
    a = make_mask(np.ones((4, 4, 4), dtype=bool))
    b = make_mask(np.ones((4, 4, 5), dtype=bool))
    with pytest.raises(ValueError, match="mismatch"):
        intersect_masks([a, b])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_intersect_commutative_associative_idempotent(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_mask(rng, (5, 5, 5)) for _ in range(3))
    ab = intersect_masks([a, b]).data
    ba = intersect_masks([b, a]).data
    np.testing.assert_array_equal(ab, ba)
    abc = intersect_masks([intersect_masks([a, b]), c]).data
    a_bc = intersect_masks([a, intersect_masks([b, c])]).data
    np.testing.assert_array_equal(abc, a_bc)
    np.testing.assert_array_equal(intersect_masks([a, a]).data, a.data)


# ------------------------------------------------------------------- misc

def test_volume_validates_shape():
    with pytest.raises(ValueError, match="does not match dims"):
        Volume3((2, 2, 2), (1, 1, 1), (0, 0, 0), np.zeros(9))
    with pytest.raises(ValueError, match="spacing"):
        Volume3((2, 2, 2), (1, 0, 1), (0, 0, 0), np.zeros(8))


def test_mask_dice():
    a = make_mask(np.ones((4, 4, 4), dtype=bool))
    b = a.with_data(a.data.copy())
    b.data[0] = False
    assert mask_dice(a, a) == 1.0
    assert 0 < mask_dice(a, b) < 1.0
