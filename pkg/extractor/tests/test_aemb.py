"""Wire-format unit tests for the AEMB reader/writer pair."""

import numpy as np
import pytest

import artvision as av


def _table(rng, n=5, dim=7):
    return {f"lot{i}": rng.standard_normal(dim).astype("<f4") for i in range(n)}


def test_round_trip_preserves_bytes_and_order(tmp_path):
    rng = np.random.default_rng(0)
    entries = _table(rng)
    path = tmp_path / "t.aemb"
    av.write_aemb(path, entries, 7, "resnet50")
    loaded, dim, tag = av.read_aemb(path)
    assert dim == 7 and tag == "resnet50"
    assert list(loaded) == list(entries)
    for k in entries:
        assert loaded[k].tobytes() == entries[k].tobytes()


def test_write_rejects_bad_vectors(tmp_path):
    with pytest.raises(av.AEMBError, match="shape"):
        av.write_aemb(tmp_path / "t.aemb", {"a": np.zeros(3)}, 4, "x")
    bad = np.array([1.0, np.nan, 0.0], dtype="<f4")
    with pytest.raises(av.AEMBError, match="non-finite"):
        av.write_aemb(tmp_path / "t.aemb", {"a": bad}, 3, "x")


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "t.aemb"
    path.write_bytes(b"NOPE" + b"\x00" * 40)
    with pytest.raises(av.AEMBError, match="magic"):
        av.read_aemb(path)


def test_read_rejects_bad_version(tmp_path):
    rng = np.random.default_rng(1)
    path = tmp_path / "t.aemb"
    av.write_aemb(path, _table(rng), 7, "x")
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(av.AEMBError, match="version"):
        av.read_aemb(path)


def test_read_rejects_truncation_and_trailing(tmp_path):
    rng = np.random.default_rng(2)
    path = tmp_path / "t.aemb"
    av.write_aemb(path, _table(rng), 7, "x")
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(av.AEMBError, match="truncated"):
        av.read_aemb(path)
    path.write_bytes(data + b"\x00\x00")
    with pytest.raises(av.AEMBError, match="trailing"):
        av.read_aemb(path)
