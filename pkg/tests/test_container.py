"""Checkpoint container format: round trips and corruption handling."""

import numpy as np
import pytest

from bexp.container import MAGIC, read_container, write_container


def test_round_trip_preserves_meta_and_arrays(tmp_path):
    path = tmp_path / "c.bin"
    meta = {"kind": "test", "nested": {"a": [1, 2, 3]}, "x": 1.5}
    arrays = {
        "f": np.arange(12, dtype=np.float64).reshape(3, 4),
        "i": np.array([-5, 0, 7], dtype=np.int64),
        "b": np.array([[True, False], [False, True]]),
    }
    write_container(path, meta, arrays)
    got_meta, got = read_container(path)
    assert got_meta == meta
    assert list(got) == ["f", "i", "b"]
    for name in arrays:
        assert got[name].dtype == arrays[name].dtype
        assert np.array_equal(got[name], arrays[name])


def test_round_trip_empty_and_scalar_shapes(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, {}, {"empty": np.zeros(0), "one": np.array([3.5])})
    _, got = read_container(path)
    assert got["empty"].shape == (0,)
    assert got["one"][0] == 3.5


def test_magic_header_is_written(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, {}, {})
    assert path.read_bytes()[:8] == MAGIC


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "c.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
    with pytest.raises(ValueError, match="magic"):
        read_container(path)


def test_truncated_header_rejected(tmp_path):
    path = tmp_path / "c.bin"
    path.write_bytes(MAGIC + b"\x01\x02")
    with pytest.raises(ValueError, match="truncated"):
        read_container(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, {}, {"a": np.zeros(100)})
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(ValueError, match="truncated"):
        read_container(path)


def test_unsupported_dtype_rejected_on_write(tmp_path):
    path = tmp_path / "c.bin"
    with pytest.raises(ValueError, match="dtype"):
        write_container(path, {}, {"a": np.zeros(3, dtype=np.float32)})


def test_tampered_dtype_rejected_on_read(tmp_path):
    path = tmp_path / "c.bin"
    write_container(path, {}, {"a": np.zeros(2)})
    blob = path.read_bytes()
    path.write_bytes(blob.replace(b"float64", b"float16"))
    with pytest.raises(ValueError, match="dtype"):
        read_container(path)


def test_non_contiguous_array_round_trips(tmp_path):
    path = tmp_path / "c.bin"
    base = np.arange(20, dtype=np.float64).reshape(4, 5)
    view = base[:, ::2]
    write_container(path, {}, {"v": view})
    _, got = read_container(path)
    assert np.array_equal(got["v"], view)
