import numpy as np
import pytest

from diffrepro import Image, SeededRng, sample_standard_normal


def test_same_seed_stream_bit_identical():
    a = SeededRng(7, 0).normal(1000)
    b = SeededRng(7, 0).normal(1000)
    assert a.tobytes() == b.tobytes()


def test_sample_standard_normal_deterministic():
    x1 = sample_standard_normal(SeededRng(7, 0), (3, 5, 2))
    x2 = sample_standard_normal(SeededRng(7, 0), (3, 5, 2))
    assert x1.data.tobytes() == x2.data.tobytes()
    assert x1.shape == (3, 5, 2)


def test_draws_extend_the_stream():
    # two calls consume the same raw words as one combined call (even sizes)
    r1 = SeededRng(3, 1)
    first = np.concatenate([r1.normal(10), r1.normal(10)])
    assert np.array_equal(first, SeededRng(3, 1).normal(20))


def test_moments_of_one_million_draws():
    z = SeededRng(123, 0).normal(1_000_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.01


def test_distinct_streams_uncorrelated():
    a = SeededRng(9, 0).normal(100_000)
    b = SeededRng(9, 1).normal(100_000)
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.01


def test_distinct_seeds_differ():
    assert not np.array_equal(SeededRng(1).normal(16), SeededRng(2).normal(16))


def test_uniform01_range():
    u = SeededRng(55).uniform01(10_000)
    assert u.min() >= 0.0 and u.max() < 1.0


def test_integers_unbiased_range():
    r = SeededRng(8)
    v = r.integers(10, 10_000)
    assert v.min() >= 0 and v.max() <= 9
    counts = np.bincount(v, minlength=10)
    assert counts.min() > 800  # ~1000 each


def test_invalid_seed_rejected():
    with pytest.raises(ValueError):
        SeededRng(-1)
    with pytest.raises(ValueError):
        SeededRng(1 << 64)


def test_split_gives_fresh_stream():
    r = SeededRng(4, 0)
    r.normal(10)
    child = r.split(5)
    assert np.array_equal(child.normal(4), SeededRng(4, 5).normal(4))
