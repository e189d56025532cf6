"""Binary tensor container ("FTEN") and dataset manifests.

All feature tensors and task outputs move between tools as FTEN files:

    magic "FTEN" | version u8 (=1) | dtype u8 (1=float32, 2=uint8)
    | ndim u8 | ndim x u32 dims | raw payload

Everything is little-endian. Float32 payloads roundtrip bit-exactly,
which is what keeps downstream binning deterministic. A manifest is a
UTF-8 JSON file listing samples with paths relative to the manifest's
own directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FormatError

MAGIC = b"FTEN"
VERSION = 1
DTYPE_F32 = 1
DTYPE_U8 = 2

_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("u1")}
_HEADER_FIXED = 7  # magic + version + dtype + ndim


@dataclass
class FeatureTensor:
    """A C x H x W stack of feature maps; the unit of selection."""

    values: np.ndarray
    channel_ids: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise DomainError(f"feature tensor must be 3-D, got {self.values.ndim}-D")
        if self.channel_ids is None:
            self.channel_ids = np.arange(self.values.shape[0])
        self.channel_ids = np.asarray(self.channel_ids)
        if len(set(self.channel_ids.tolist())) != len(self.channel_ids):
            raise DomainError("channel_ids must be unique")
        if len(self.channel_ids) != self.values.shape[0]:
            raise DomainError("channel_ids length must equal channel count")

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


@dataclass
class TaskOutput:
    """A per-task output image (1 channel, or 3 for reconstruction-style tasks)."""

    task_id: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim == 2:
            self.values = self.values[None, :, :]
        if self.values.ndim != 3:
            raise DomainError(f"task output must be 2-D or 3-D, got {self.values.ndim}-D")

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def height(self):
        return self.values.shape[1]

    @property
    def width(self):
        return self.values.shape[2]


def write_tensor(t, path, dtype="f32"):
    """Write a tensor (ndarray, FeatureTensor or TaskOutput) as an FTEN file."""
    if isinstance(t, (FeatureTensor, TaskOutput)):
        arr = t.values
    else:
        arr = np.asarray(t)
    if arr.ndim < 1 or arr.ndim > 4:
        raise DomainError(f"FTEN supports 1..4 dimensions, got {arr.ndim}")
    if arr.size == 0:
        raise DomainError("refusing to write empty tensor (zero-size dimension)")
    if not np.all(np.isfinite(arr)):
        raise DomainError("tensor contains non-finite values")
    if dtype == "f32":
        code, payload = DTYPE_F32, arr.astype("<f4", copy=False)
    elif dtype == "u8":
        if arr.min() < 0 or arr.max() > 255:
            raise DomainError("u8 payload values must lie in [0, 255]")
        code, payload = DTYPE_U8, np.round(arr).astype("u1")
    else:
        raise DomainError(f"unknown dtype {dtype!r}")

    header = bytearray()
    header += MAGIC
    header.append(VERSION)
    header.append(code)
    header.append(arr.ndim)
    for d in arr.shape:
        header += int(d).to_bytes(4, "little")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(bytes(header))
        f.write(payload.tobytes())
    os.replace(tmp, path)


def read_tensor_header(path):
    """Return (dtype_code, dims) without reading the payload."""
    with open(path, "rb") as f:
        head = f.read(_HEADER_FIXED)
        if len(head) < _HEADER_FIXED:
            raise FormatError("truncated header", offset=len(head))
        if head[:4] != MAGIC:
            raise FormatError(f"bad magic {head[:4]!r}", offset=0)
        if head[4] != VERSION:
            raise FormatError(f"unsupported version {head[4]}", offset=4)
        code = head[5]
        if code not in _DTYPES:
            raise FormatError(f"unknown dtype code {code}", offset=5)
        ndim = head[6]
        if ndim < 1 or ndim > 4:
            raise FormatError(f"unsupported dimension count {ndim}", offset=6)
        raw = f.read(4 * ndim)
        if len(raw) < 4 * ndim:
            raise FormatError("truncated dimension list", offset=_HEADER_FIXED + len(raw))
        dims = tuple(int.from_bytes(raw[4 * i: 4 * i + 4], "little") for i in range(ndim))
    return code, dims


def read_tensor(path):
    """Read an FTEN file back into an ndarray.

    uint8 payloads are exposed as float32 values in [0, 255].
    """
    code, dims = read_tensor_header(path)
    np_dtype = _DTYPES[code]
    offset = _HEADER_FIXED + 4 * len(dims)
    expected = int(np.prod(dims)) * np_dtype.itemsize
    with open(path, "rb") as f:
        f.seek(offset)
        raw = f.read(expected + 1)
    if len(raw) < expected:
        raise FormatError(
            f"payload truncated: expected {expected} bytes, got {len(raw)}",
            offset=offset + len(raw),
        )
    if len(raw) > expected:
        raise FormatError("trailing bytes after payload", offset=offset + expected)
    arr = np.frombuffer(raw, dtype=np_dtype).reshape(dims)
    if code == DTYPE_U8:
        return arr.astype(np.float32)
    return arr.copy()


@dataclass
class ManifestSample:
    sample_id: int
    features: str
    outputs: dict  # task_id -> relative path


@dataclass
class DatasetManifest:
    """Index of a dataset on disk, with the patch configuration used to read it."""

    base_dir: str
    patch_n: int
    patch_m: int
    tasks: list
    samples: list = field(default_factory=list)

    def path(self, rel):
        return os.path.join(self.base_dir, rel)

    def feature_tensor(self, sample: ManifestSample) -> FeatureTensor:
        return FeatureTensor(read_tensor(self.path(sample.features)))

    def task_output(self, sample: ManifestSample, task_id) -> TaskOutput:
        return TaskOutput(task_id, read_tensor(self.path(sample.outputs[task_id])))

    def to_json(self):
        return {
            "patch": {"N": self.patch_n, "M": self.patch_m},
            "tasks": list(self.tasks),
            "samples": [
                {
                    "sample_id": s.sample_id,
                    "features": s.features,
                    "outputs": {str(t): p for t, p in s.outputs.items()},
                }
                for s in self.samples
            ],
        }


def save_manifest(manifest: DatasetManifest, path):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def load_manifest(path, validate=True) -> DatasetManifest:
    """Parse a manifest JSON file and (optionally) validate its samples.

    Validation checks that every referenced file exists with a readable
    FTEN header and that feature/output spatial sizes obey the M/N patch
    ratio for every task.
    """
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    base_dir = os.path.dirname(os.path.abspath(path))
    manifest = DatasetManifest(
        base_dir=base_dir,
        patch_n=int(doc["patch"]["N"]),
        patch_m=int(doc["patch"]["M"]),
        tasks=[int(t) for t in doc["tasks"]],
        samples=[
            ManifestSample(
                sample_id=int(s["sample_id"]),
                features=s["features"],
                outputs={int(t): p for t, p in s["outputs"].items()},
            )
            for s in doc["samples"]
        ],
    )
    if validate:
        validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: DatasetManifest):
    n, m = manifest.patch_n, manifest.patch_m
    if n < 1 or m < 1:
        raise DomainError("patch sides must be positive")
    for s in manifest.samples:
        _, fdims = read_tensor_header(manifest.path(s.features))
        if len(fdims) != 3:
            raise DomainError(f"sample {s.sample_id}: feature tensor must be 3-D")
        _, fh, fw = fdims
        for t in manifest.tasks:
            if t not in s.outputs:
                raise DomainError(f"sample {s.sample_id}: missing output for task {t}")
            _, odims = read_tensor_header(manifest.path(s.outputs[t]))
            oh, ow = odims[-2], odims[-1]
            if m * fh != n * oh or m * fw != n * ow:
                raise DomainError(
                    f"sample {s.sample_id}, task {t}: feature {fh}x{fw} and "
                    f"output {oh}x{ow} do not align on the {m}/{n} patch ratio"
                )
