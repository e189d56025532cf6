import struct

import numpy as np
import pytest

from featsel.errors import DomainError, FormatError
from featsel import tensor_store as ts


def test_header_layout_hand_encoded(tmp_path):
    # 1x2x2 float32 tensor: 4+1+1+1+12 byte header, then 16-byte payload
    path = tmp_path / "t.ften"
    ts.write_tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]), path)
    raw = path.read_bytes()
    assert raw[:4] == b"FTEN"
    assert raw[4] == 1          # version
    assert raw[5] == 1          # float32
    assert raw[6] == 3          # ndim
    assert raw[7:19] == struct.pack("<III", 1, 2, 2)
    assert len(raw) == 19 + 16
    assert raw[19:] == struct.pack("<4f", 1, 2, 3, 4)


def test_roundtrip_random(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.standard_normal((4, 8, 8)).astype(np.float32)
    ts.write_tensor(t, tmp_path / "r.ften")
    back = ts.read_tensor(tmp_path / "r.ften")
    assert back.dtype == np.float32
    assert np.array_equal(back, t)  # bit-exact


def test_u8_roundtrip(tmp_path):
    t = np.arange(12, dtype=np.float32).reshape(3, 2, 2)
    ts.write_tensor(t, tmp_path / "u.ften", dtype="u8")
    back = ts.read_tensor(tmp_path / "u.ften")
    assert back.dtype == np.float32
    assert np.array_equal(back, t)


def test_empty_tensor_rejected(tmp_path):
    with pytest.raises(DomainError):
        ts.write_tensor(np.zeros((0, 2, 2)), tmp_path / "e.ften")


def test_nonfinite_rejected(tmp_path):
    with pytest.raises(DomainError):
        ts.write_tensor(np.array([[np.nan]]), tmp_path / "n.ften")


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ften"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(FormatError) as e:
        ts.read_tensor(path)
    assert e.value.offset == 0


def test_truncated_payload(tmp_path):
    path = tmp_path / "trunc.ften"
    header = b"FTEN" + bytes([1, 1, 2]) + struct.pack("<II", 2, 2)
    path.write_bytes(header + struct.pack("<3f", 1, 2, 3))  # 3 of 4 values
    with pytest.raises(FormatError, match="truncated"):
        ts.read_tensor(path)


def test_feature_tensor_invariants():
    with pytest.raises(DomainError):
        ts.FeatureTensor(np.zeros((2, 2, 2)), channel_ids=[1, 1])
    t = ts.FeatureTensor(np.zeros((3, 2, 2)))
    assert list(t.channel_ids) == [0, 1, 2]


def _write_dataset(tmp_path, fh=4, fw=8, oh=4, ow=8, n=2, m=2):
    ts.write_tensor(np.ones((3, fh, fw), dtype=np.float32), tmp_path / "f.ften")
    ts.write_tensor(np.ones((1, oh, ow), dtype=np.float32), tmp_path / "o.ften")
    manifest = ts.DatasetManifest(
        base_dir=str(tmp_path), patch_n=n, patch_m=m, tasks=[0],
        samples=[ts.ManifestSample(sample_id=0, features="f.ften",
                                   outputs={0: "o.ften"})])
    ts.save_manifest(manifest, tmp_path / "manifest.json")
    return tmp_path / "manifest.json"


def test_manifest_roundtrip_and_validation(tmp_path):
    path = _write_dataset(tmp_path)
    man = ts.load_manifest(path)
    assert man.patch_n == 2 and man.patch_m == 2
    assert man.feature_tensor(man.samples[0]).channels == 3


def test_manifest_ratio_mismatch(tmp_path):
    # M=4 demands the output be twice the feature size; it is not
    path = _write_dataset(tmp_path, n=2, m=4)
    with pytest.raises(DomainError, match="patch ratio"):
        ts.load_manifest(path)


def test_manifest_missing_file(tmp_path):
    path = _write_dataset(tmp_path)
    (tmp_path / "o.ften").unlink()
    with pytest.raises(OSError):
        ts.load_manifest(path)
