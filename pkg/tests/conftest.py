import numpy as np
import pytest

from liverfat.phantom import CohortSpec, PhantomSpec, generate_phantom
from liverfat.volume import BinaryMask, ResampleSpec, Volume3

DESK_GRID = ResampleSpec((4.0, 4.0, 4.0), (64, 48, 96))


def make_volume(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Volume3:
    data = np.asarray(data, dtype=np.float64)
    return Volume3(data.shape, spacing, origin, data)


def make_mask(data, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> BinaryMask:
    data = np.asarray(data, dtype=bool)
    return BinaryMask(data.shape, spacing, origin, data)


@pytest.fixture(scope="session")
def clean_phantom():
    """Noise-free, bias-free desk phantom shared across tests."""
    spec = PhantomSpec(liver_ff=0.155, noise_sigma=0.0, bias_amplitude=0.0, seed=1)
    water, fat, truth = generate_phantom(spec)
    return spec, water, fat, truth


@pytest.fixture(scope="session")
def noisy_phantom():
    spec = PhantomSpec(liver_ff=0.12, noise_sigma=0.02, bias_amplitude=0.1, seed=2)
    water, fat, truth = generate_phantom(spec)
    return spec, water, fat, truth
