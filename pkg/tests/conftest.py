import numpy as np
import pytest

from diffrepro import Dataset, Image, SeededRng


def make_dataset(n: int, shape=(4, 4, 3), seed: int = 42, spread: float = 1.0) -> Dataset:
    """Deterministic dataset of uniform-pixel images in [-spread, spread]."""
    rng = SeededRng(seed)
    d = shape[0] * shape[1] * shape[2]
    images = [Image((rng.uniform01(d) * 2.0 - 1.0) * spread, shape) for _ in range(n)]
    return Dataset(images)


@pytest.fixture
def dataset16() -> Dataset:
    return make_dataset(16)


@pytest.fixture
def rng() -> SeededRng:
    return SeededRng(2718)
