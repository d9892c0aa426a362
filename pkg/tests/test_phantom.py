import dataclasses

import numpy as np
import pytest

from liverfat.phantom import (
    CohortSpec,
    PhantomSpec,
    build_subject,
    draw_cohort_params,
    generate_cohort,
    generate_phantom,
    make_compartments,
    reference_roi_measurement,
    simulate_reference_acquisition,
    spec_for_subject,
)
from liverfat.preprocess import fat_fraction
from liverfat.volume import fuse_stations


def fused_ff(water_stack, fat_stack):
    return fat_fraction(fuse_stations(water_stack), fuse_stations(fat_stack))


def test_clean_phantom_median_ff_is_exact(clean_phantom):
    _, water, fat, truth = clean_phantom
    ff = fused_ff(water, fat)
    med = np.median(ff.data[truth.liver_mask.data])
    assert med == 0.155


def test_phantom_is_deterministic():
    spec = PhantomSpec(liver_ff=0.07, noise_sigma=0.015, bias_amplitude=0.1, seed=9)
    w1, f1, t1 = generate_phantom(spec)
    w2, f2, t2 = generate_phantom(spec)
    for a, b in zip(w1.stations + f1.stations, w2.stations + f2.stations):
        np.testing.assert_array_equal(a.data, b.data)
    np.testing.assert_array_equal(t1.liver_mask.data, t2.liver_mask.data)


def test_noisy_median_ff_within_tolerance():
    # Monte-Carlo: median FF over the liver stays within 0.01 of truth
    for seed in range(20):
        spec = PhantomSpec(liver_ff=0.11, noise_sigma=0.02, seed=seed)
        water, fat, truth = generate_phantom(spec)
        ff = fused_ff(water, fat)
        med = np.median(ff.data[truth.liver_mask.data])
        assert abs(med - 0.11) < 0.01


def test_compartment_ff_exact_when_noise_free(clean_phantom):
    spec, water, fat, truth = clean_phantom
    ff = fused_ff(water, fat)
    _, body, liver, subcut = make_compartments(spec)
    lean = body & ~liver & ~subcut
    assert np.all(ff.data[liver] == spec.liver_ff)
    assert np.allclose(ff.data[subcut & ~liver], spec.subcutaneous_ff, atol=1e-12)
    assert np.allclose(ff.data[lean], spec.lean_ff, atol=1e-12)


def test_ff_invariant_to_bias_field():
    base = PhantomSpec(liver_ff=0.09, noise_sigma=0.0, bias_amplitude=0.0, seed=3)
    biased = dataclasses.replace(base, bias_amplitude=0.3)
    ff_a = fused_ff(*generate_phantom(base)[:2])
    ff_b = fused_ff(*generate_phantom(biased)[:2])
    assert np.abs(ff_a.data - ff_b.data).max() < 1e-6


def test_liver_mask_inside_body(noisy_phantom):
    _, _, _, truth = noisy_phantom
    assert truth.liver_mask.voxel_count > 0
    assert not np.any(truth.liver_mask.data & ~truth.body_mask_truth.data)


def test_liver_outside_torso_rejected():
    with pytest.raises(ValueError, match="strictly inside"):
        PhantomSpec(liver_center=(10.0, 90.0, 86.0))


def test_invalid_fractions_rejected():
    with pytest.raises(ValueError):
        PhantomSpec(liver_ff=0.7)
    with pytest.raises(ValueError):
        PhantomSpec(noise_sigma=-0.1)


# ----------------------------------------------------------------- cohort

def test_cohort_single_subject_truth_matches_draw():
    spec = CohortSpec(n_subjects=1, seed=17)
    params = draw_cohort_params(spec)
    subjects = generate_cohort(spec)
    assert len(subjects) == 1
    assert subjects[0].truth.liver_ff == params[0].liver_ff


def test_cohort_mean_ff_near_midpoint():
    # law of large numbers at n = 200 on U(0, 0.2)
    spec = CohortSpec(n_subjects=200, ff_low=0.0, ff_high=0.2, seed=23)
    ffs = [p.liver_ff for p in draw_cohort_params(spec)]
    assert abs(np.mean(ffs) - 0.10) < 0.02


def test_cohort_deterministic_and_seed_sensitive():
    a = draw_cohort_params(CohortSpec(n_subjects=12, seed=5))
    b = draw_cohort_params(CohortSpec(n_subjects=12, seed=5))
    c = draw_cohort_params(CohortSpec(n_subjects=12, seed=6))
    assert [p.liver_ff for p in a] == [p.liver_ff for p in b]
    assert [p.liver_ff for p in a] != [p.liver_ff for p in c]


def test_cohort_subject_generation_deterministic():
    spec = CohortSpec(n_subjects=2, seed=31, phantom=PhantomSpec(noise_sigma=0.02))
    s1 = generate_cohort(spec)
    s2 = generate_cohort(spec)
    for a, b in zip(s1, s2):
        assert a.reference_ff == b.reference_ff
        for va, vb in zip(a.water.stations, b.water.stations):
            np.testing.assert_array_equal(va.data, vb.data)


def test_subject_spec_scales_liver_with_torso():
    cohort = CohortSpec(n_subjects=3, seed=11)
    for p in draw_cohort_params(cohort):
        spec = spec_for_subject(cohort, p)
        base = cohort.phantom
        ratio = spec.torso_half_axes[0] / base.torso_half_axes[0]
        assert ratio == pytest.approx(p.torso_scale)
        spec._check_liver_inside_torso()


# -------------------------------------------------------- reference method

def test_reference_constant_field_is_exact(clean_phantom):
    _, water, fat, truth = clean_phantom
    ff = fused_ff(water, fat)
    assert reference_roi_measurement(ff, truth.liver_mask, seed=3) == 0.155


def test_reference_noise_free_matches_truth():
    spec = PhantomSpec(liver_ff=0.08, noise_sigma=0.0, bias_amplitude=0.2, seed=2)
    ff = simulate_reference_acquisition(spec)
    _, _, truth = generate_phantom(spec)
    got = reference_roi_measurement(ff, truth.liver_mask, seed=5)
    assert abs(got - 0.08) <= 1e-6


def test_reference_spread_obeys_sampling_statistics():
    # SD over seeds stays below 3 * sigma / sqrt(roi voxel count)
    spec = PhantomSpec(liver_ff=0.10, noise_sigma=0.02, seed=4)
    ff = simulate_reference_acquisition(spec)
    _, _, truth = generate_phantom(spec)
    vals = [
        reference_roi_measurement(ff, truth.liver_mask, seed=s) for s in range(50)
    ]
    roi_voxels = 33  # ball of radius 2
    assert np.std(vals) < 3 * spec.noise_sigma / np.sqrt(roi_voxels)


def test_reference_rejects_tiny_liver():
    spec = PhantomSpec(liver_half_axes=(6.0, 6.0, 6.0), liver_ff=0.1, seed=1)
    water, fat, truth = generate_phantom(spec)
    ff = fused_ff(water, fat)
    with pytest.raises(ValueError, match="liver too small"):
        reference_roi_measurement(ff, truth.liver_mask, seed=2)


def test_reference_deterministic_per_seed(noisy_phantom):
    spec, water, fat, truth = noisy_phantom
    ff = fused_ff(water, fat)
    a = reference_roi_measurement(ff, truth.liver_mask, seed=8)
    b = reference_roi_measurement(ff, truth.liver_mask, seed=8)
    c = reference_roi_measurement(ff, truth.liver_mask, seed=9)
    assert a == b
    assert a != c
