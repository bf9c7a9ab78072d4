import numpy as np
import pytest

from diffrepro import (
    DataError,
    Dataset,
    Image,
    SeededRng,
    from_uint8,
    load_dataset,
    load_image,
    save_dataset,
    save_image,
    to_uint8,
)


def test_pixel_conversion_endpoints():
    assert from_uint8(np.array([255]))[0] == 1.0
    assert from_uint8(np.array([0]))[0] == -1.0
    assert to_uint8(np.array([1.0]))[0] == 255
    assert to_uint8(np.array([-1.0]))[0] == 0


def test_pixel_round_trip_idempotent():
    p = np.arange(256, dtype=np.uint8)
    assert np.array_equal(to_uint8(from_uint8(p)), p)


def test_to_uint8_clamps():
    assert to_uint8(np.array([5.0]))[0] == 255
    assert to_uint8(np.array([-5.0]))[0] == 0


def test_image_validation():
    with pytest.raises(DataError):
        Image(np.zeros(5), (2, 2, 1))
    with pytest.raises(DataError):
        Image(np.array([np.nan, 0.0]), (1, 2, 1))
    with pytest.raises(DataError):
        Image(np.zeros(4), (2, 2, 0))


def test_image_immutable():
    img = Image(np.zeros(4), (2, 2, 1))
    with pytest.raises((ValueError, AttributeError)):
        img.data[0] = 1.0
    with pytest.raises(AttributeError):
        img.key = "x"


def test_dataset_rejects_mixed_shapes_and_bad_labels():
    a = Image(np.zeros(4), (2, 2, 1))
    b = Image(np.zeros(8), (2, 2, 2))
    with pytest.raises(DataError, match="shape"):
        Dataset([a, b])
    with pytest.raises(DataError, match="labels"):
        Dataset([a], labels=[0, 1])
    with pytest.raises(DataError):
        Dataset([])


def _random_dataset(n, seed=0):
    rng = SeededRng(seed)
    return Dataset([Image(rng.uniform01(12) * 2 - 1, (2, 2, 3)) for _ in range(n)])


def test_subset_deterministic_and_commuting():
    ds = _random_dataset(10)
    sub_a = ds.subset(6, seed=99)
    sub_b = ds.subset(6, seed=99)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(sub_a.images, sub_b.images))
    # subset of a subset with the same seed == direct smaller subset
    nested = sub_a.subset(3, seed=99)
    direct = ds.subset(3, seed=99)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(nested.images, direct.images))


def test_subset_carries_labels():
    rng = SeededRng(1)
    images = [Image(rng.uniform01(4), (2, 2, 1)) for _ in range(4)]
    ds = Dataset(images, labels=[0, 1, 2, 3])
    sub = ds.subset(2, seed=5)
    for img, lab in zip(sub.images, sub.labels):
        src = next(i for i, im in enumerate(images) if np.array_equal(im.data, img.data))
        assert lab == src


def test_save_load_image_pgm_ppm_png(tmp_path):
    rng = SeededRng(3)
    img = Image(from_uint8(to_uint8(rng.uniform01(48) * 2 - 1)), (4, 4, 3))
    gray = Image(from_uint8(to_uint8(rng.uniform01(16) * 2 - 1)), (4, 4, 1))
    for name, src in [("a.ppm", img), ("b.png", img), ("c.pgm", gray)]:
        path = tmp_path / name
        save_image(path, src)
        back = load_image(path)
        assert back.shape == src.shape
        assert np.array_equal(back.data, src.data)
        assert back.key == path.stem


def test_load_dataset_directory(tmp_path):
    rng = SeededRng(4)
    for i in range(3):
        save_image(tmp_path / f"img{i}.ppm", Image(rng.uniform01(27) * 2 - 1, (3, 3, 3)))
    ds = load_dataset(tmp_path)
    assert len(ds) == 3
    assert ds.shape == (3, 3, 3)


def test_load_dataset_limit_and_shuffle_deterministic(tmp_path):
    rng = SeededRng(5)
    for i in range(5):
        save_image(tmp_path / f"img{i}.ppm", Image(rng.uniform01(12) * 2 - 1, (2, 2, 3)))
    a = load_dataset(tmp_path, limit=2, shuffle_seed=7)
    b = load_dataset(tmp_path, limit=2, shuffle_seed=7)
    assert len(a) == 2
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.images, b.images))


def test_load_dataset_errors(tmp_path):
    with pytest.raises(DataError, match="no such"):
        load_dataset(tmp_path / "missing")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DataError, match="no PNG/PGM/PPM"):
        load_dataset(empty)
    save_image(empty / "one.pgm", Image(np.zeros(4), (2, 2, 1)))
    with pytest.raises(DataError, match="limit"):
        load_dataset(empty, limit=5)
    bad = tmp_path / "mixed"
    bad.mkdir()
    save_image(bad / "a.pgm", Image(np.zeros(4), (2, 2, 1)))
    save_image(bad / "b.pgm", Image(np.zeros(9), (3, 3, 1)))
    with pytest.raises(DataError, match="shape"):
        load_dataset(bad)


def test_unreadable_file_names_it(tmp_path):
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"not a png")
    with pytest.raises(DataError, match="broken.png"):
        load_image(bad)


def test_dataset_tensor_round_trip(tmp_path):
    ds = _random_dataset(4)
    path = tmp_path / "ds.dtf"
    save_dataset(path, ds)
    back = load_dataset(path)
    assert len(back) == 4
    # float32 storage, so compare at that precision
    assert np.allclose(back.matrix, ds.matrix, atol=1e-6)
