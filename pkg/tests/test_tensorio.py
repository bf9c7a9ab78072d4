import struct

import numpy as np
import pytest

from diffrepro import TensorFormatError, read_tensor, write_tensor


def test_round_trip_bitwise(tmp_path):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4) / 7.0
    path = tmp_path / "t.dtf"
    write_tensor(path, arr)
    back = read_tensor(path)
    assert back.dtype == np.float32
    assert back.shape == (2, 3, 4)
    assert arr.tobytes() == back.tobytes()


def test_write_read_write_stable(tmp_path):
    arr = np.float32([[1.5, -2.25], [0.1, 3.0]])
    p1 = tmp_path / "a.dtf"
    p2 = tmp_path / "b.dtf"
    write_tensor(p1, arr)
    write_tensor(p2, read_tensor(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic_names_bytes(tmp_path):
    path = tmp_path / "bad.dtf"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(TensorFormatError, match="NOPE"):
        read_tensor(path)


def test_version_mismatch_rejected(tmp_path):
    path = tmp_path / "v9.dtf"
    path.write_bytes(struct.pack("<4sII", b"DRTF", 9, 1) + struct.pack("<Q", 0))
    with pytest.raises(TensorFormatError, match="version 9"):
        read_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.dtf"
    write_tensor(path, np.ones(8, dtype=np.float32))
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(TensorFormatError, match="truncated payload"):
        read_tensor(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "extra.dtf"
    write_tensor(path, np.ones(3, dtype=np.float32))
    path.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(TensorFormatError, match="trailing"):
        read_tensor(path)


def test_float64_input_cast_to_float32(tmp_path):
    arr = np.array([1.0 / 3.0], dtype=np.float64)
    path = tmp_path / "cast.dtf"
    write_tensor(path, arr)
    assert read_tensor(path)[0] == np.float32(1.0 / 3.0)


def test_scalar_like_and_empty_dims(tmp_path):
    path = tmp_path / "z.dtf"
    write_tensor(path, np.zeros((0, 5), dtype=np.float32))
    assert read_tensor(path).shape == (0, 5)
