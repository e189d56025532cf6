"""Hard and soft channel selection, 8-bit quantization, channel tiling,
and the surrogate transform codec for enhancement channels.

Soft selection keeps the top-ranked ("base") channels at 8-bit precision
and sends the rest ("enhancement") through a lossy 8x8 block-DCT codec
whose quality knob follows the HEVC step law step = 2^((QP-4)/6). The
surrogate keeps the build hermetic; an external-encoder hook is provided
for anyone who wants a real codec in the loop.

Bitstream container ("FENC"), all little-endian:

    magic "FENC" | version u8 (=1) | qp u8 | width u32 | height u32
    | compressed-length u32 | zlib(DEFLATE) data

The zlib payload is a varint token stream over the zigzag-scanned,
dead-zone-quantized coefficients of each 8x8 block in row-major block
order: pairs (zero-run varint, nonzero value as zigzag varint), closed
by a (trailing-zero-run, 0) pair. Decoding recovers the quantized
coefficients exactly; only the quantization itself is lossy.

When the step is <= 1 (qp <= 4) a sub-code step cannot remove any
information from 8-bit data, so the codec switches to a lossless mode
(zlib over the raw codes) and reconstruction is exact. The mode is
implied by the qp field; the container layout is unchanged.
"""

from __future__ import annotations

import json
import os
import shlex
import struct
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import DomainError, FormatError

ENC_MAGIC = b"FENC"
PAYLOAD_MAGIC = b"FPAY"
BLOCK = 8


# ---------------------------------------------------------------------------
# 8-bit quantization


@dataclass
class QuantizedTensor:
    codes: np.ndarray   # (C, H, W) uint8
    mins: np.ndarray    # (C,)
    maxs: np.ndarray    # (C,)


def quantize8(values) -> QuantizedTensor:
    """Per-channel uniform 8-bit quantization over each channel's [min, max]."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if not np.all(np.isfinite(values)):
        raise DomainError("cannot quantize non-finite values")
    mins = values.min(axis=(1, 2))
    maxs = values.max(axis=(1, 2))
    span = maxs - mins
    safe = np.where(span > 0, span, 1.0)
    codes = np.round(255.0 * (values - mins[:, None, None]) / safe[:, None, None])
    return QuantizedTensor(codes=codes.astype(np.uint8), mins=mins, maxs=maxs)


def dequantize8(q: QuantizedTensor) -> np.ndarray:
    span = q.maxs - q.mins
    vals = q.mins[:, None, None] + q.codes.astype(np.float64) * span[:, None, None] / 255.0
    return vals.astype(np.float32)


# ---------------------------------------------------------------------------
# tiling


@dataclass
class TileDescriptor:
    rows: int
    cols: int
    count: int            # real channels; rows*cols - count are zero padding
    channel_height: int
    channel_width: int


def tile_grid(count):
    rows = max(int(np.floor(np.sqrt(count))), 1)
    cols = int(np.ceil(count / rows))
    return rows, cols


def tile(codes):
    """Lay channels out row-major on the smallest near-square grid.

    Channels are expected already ordered by descending importance.
    Missing grid cells are zero channels, recorded in the descriptor.
    """
    codes = np.asarray(codes)
    if codes.ndim != 3:
        raise DomainError("tile expects a (C, H, W) array")
    c, h, w = codes.shape
    if c == 0:
        raise DomainError("cannot tile zero channels")
    rows, cols = tile_grid(c)
    image = np.zeros((rows * h, cols * w), dtype=codes.dtype)
    for i in range(c):
        r, q = divmod(i, cols)
        image[r * h:(r + 1) * h, q * w:(q + 1) * w] = codes[i]
    return image, TileDescriptor(rows=rows, cols=cols, count=c,
                                 channel_height=h, channel_width=w)


def untile(image, desc: TileDescriptor):
    """Inverse of tile; drops padding channels."""
    image = np.asarray(image)
    expect = (desc.rows * desc.channel_height, desc.cols * desc.channel_width)
    if image.shape != expect:
        raise DomainError(f"image shape {image.shape} does not match descriptor {expect}")
    h, w = desc.channel_height, desc.channel_width
    out = np.empty((desc.count, h, w), dtype=image.dtype)
    for i in range(desc.count):
        r, q = divmod(i, desc.cols)
        out[i] = image[r * h:(r + 1) * h, q * w:(q + 1) * w]
    return out


# ---------------------------------------------------------------------------
# varint helpers (LEB128; signed values via zigzag mapping)


def _write_varints(tokens):
    out = bytearray()
    for t in tokens:
        t = int(t)
        while True:
            b = t & 0x7F
            t >>= 7
            if t:
                out.append(b | 0x80)
            else:
                out.append(b)
                break
    return bytes(out)


def _read_varint(buf, pos):
    shift = 0
    val = 0
    while True:
        if pos >= len(buf):
            raise FormatError("truncated varint", offset=pos)
        b = buf[pos]
        pos += 1
        val |= (b & 0x7F) << shift
        if not b & 0x80:
            return val, pos
        shift += 7


def _zigzag(v):
    return (v << 1) ^ (v >> 63) if v < 0 else v << 1


def _unzigzag(v):
    return (v >> 1) ^ -(v & 1)


_ZIGZAG_SCAN = None


def _zigzag_scan():
    """Classic 8x8 zigzag scan order as flat indices."""
    global _ZIGZAG_SCAN
    if _ZIGZAG_SCAN is None:
        idx = []
        for s in range(2 * BLOCK - 1):
            rng = range(max(0, s - BLOCK + 1), min(s, BLOCK - 1) + 1)
            diag = [(i, s - i) for i in rng]
            if s % 2 == 0:
                diag.reverse()
            idx += [r * BLOCK + c for r, c in diag]
        _ZIGZAG_SCAN = np.array(idx)
    return _ZIGZAG_SCAN


def qp_step(qp):
    if not 0 <= qp <= 51:
        raise DomainError(f"qp must lie in [0, 51], got {qp}")
    return 2.0 ** ((qp - 4) / 6.0)


def _blocks(image):
    h, w = image.shape
    ph = (BLOCK - h % BLOCK) % BLOCK
    pw = (BLOCK - w % BLOCK) % BLOCK
    padded = np.pad(image, ((0, ph), (0, pw)))
    bh, bw = padded.shape[0] // BLOCK, padded.shape[1] // BLOCK
    blocks = padded.reshape(bh, BLOCK, bw, BLOCK).transpose(0, 2, 1, 3)
    return blocks.reshape(bh * bw, BLOCK, BLOCK), (bh, bw)


def _unblocks(blocks, grid, shape):
    bh, bw = grid
    padded = blocks.reshape(bh, bw, BLOCK, BLOCK).transpose(0, 2, 1, 3)
    padded = padded.reshape(bh * BLOCK, bw * BLOCK)
    return padded[:shape[0], :shape[1]]


def encode_enhancement(image, qp) -> bytes:
    """Encode an 8-bit image with the surrogate DCT codec."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise DomainError("encode_enhancement expects a 2-D image")
    if image.dtype != np.uint8:
        if image.min() < 0 or image.max() > 255:
            raise DomainError("image must be 8-bit (values in [0, 255])")
        image = np.round(image).astype(np.uint8)
    step = qp_step(qp)
    if step <= 1.0:
        data = zlib.compress(image.tobytes(), 6)
        header = ENC_MAGIC + struct.pack("<BBII", 1, qp, image.shape[1], image.shape[0])
        return header + struct.pack("<I", len(data)) + data
    blocks, _ = _blocks(image.astype(np.float64) - 128.0)
    coeffs = scipy.fft.dctn(blocks, axes=(1, 2), norm="ortho")
    quant = np.trunc(coeffs / step).astype(np.int64)  # dead-zone at +-step

    scan = _zigzag_scan()
    seq = quant.reshape(len(quant), BLOCK * BLOCK)[:, scan].ravel()
    nz = np.nonzero(seq)[0]
    tokens = []
    prev = -1
    for pos in nz:
        tokens.append(pos - prev - 1)          # zero run before the value
        tokens.append(_zigzag(int(seq[pos])))
        prev = pos
    tokens.append(len(seq) - prev - 1)         # trailing zeros
    tokens.append(0)                           # end marker (value 0)
    data = zlib.compress(_write_varints(tokens), 6)

    header = ENC_MAGIC + struct.pack("<BBII", 1, qp, image.shape[1], image.shape[0])
    return header + struct.pack("<I", len(data)) + data


def decode_enhancement(payload: bytes) -> np.ndarray:
    """Invert encode_enhancement back to the 8-bit image."""
    if len(payload) < 18:
        raise FormatError("bitstream too short", offset=len(payload))
    if payload[:4] != ENC_MAGIC:
        raise FormatError(f"bad magic {payload[:4]!r}", offset=0)
    version, qp, width, height = struct.unpack("<BBII", payload[4:14])
    if version != 1:
        raise FormatError(f"unsupported version {version}", offset=4)
    (length,) = struct.unpack("<I", payload[14:18])
    if len(payload) < 18 + length:
        raise FormatError("truncated bitstream", offset=len(payload))
    try:
        buf = zlib.decompress(payload[18:18 + length])
    except zlib.error as e:
        raise FormatError(f"corrupt entropy stream: {e}", offset=18) from e

    step = qp_step(qp)
    if step <= 1.0:
        if len(buf) != width * height:
            raise FormatError(
                f"lossless frame size mismatch: {len(buf)} != {width * height}",
                offset=18)
        return np.frombuffer(buf, dtype=np.uint8).reshape(height, width).copy()
    bh = -(-height // BLOCK)
    bw = -(-width // BLOCK)
    total = bh * bw * BLOCK * BLOCK
    seq = np.zeros(total, dtype=np.int64)
    pos = 0
    out_pos = 0
    while True:
        run, pos = _read_varint(buf, pos)
        val, pos = _read_varint(buf, pos)
        out_pos += run
        if val == 0:
            if out_pos != total:
                raise FormatError(
                    f"coefficient count mismatch: {out_pos} != {total}", offset=pos)
            break
        if out_pos >= total:
            raise FormatError("coefficient overrun", offset=pos)
        seq[out_pos] = _unzigzag(val)
        out_pos += 1

    scan = _zigzag_scan()
    inv = np.empty_like(scan)
    inv[scan] = np.arange(len(scan))
    quant = seq.reshape(bh * bw, BLOCK * BLOCK)[:, inv].reshape(-1, BLOCK, BLOCK)
    blocks = scipy.fft.idctn(quant.astype(np.float64) * step, axes=(1, 2), norm="ortho")
    image = _unblocks(blocks, (bh, bw), (height, width)) + 128.0
    return np.clip(np.round(image), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# external encoder hook


@dataclass
class ExternalCodec:
    """Shell out to a user-supplied encoder/decoder.

    Templates get {input}, {output} and {qp} substituted; the input is
    written as a raw 8-bit monochrome frame (row-major, no header).
    Without a decode_cmd the decoded image is unavailable and only the
    bitstream/size path works.
    """

    encode_cmd: str
    decode_cmd: str | None = None

    def encode(self, image, qp, width=None, height=None):
        image = np.asarray(image, dtype=np.uint8)
        with tempfile.TemporaryDirectory() as td:
            inp = os.path.join(td, "frame.yuv")
            out = os.path.join(td, "stream.bin")
            with open(inp, "wb") as f:
                f.write(image.tobytes())
            cmd = self.encode_cmd.format(input=inp, output=out, qp=qp,
                                         width=image.shape[1], height=image.shape[0])
            subprocess.run(shlex.split(cmd), check=True, capture_output=True)
            with open(out, "rb") as f:
                return f.read()

    def decode(self, payload, width, height):
        if self.decode_cmd is None:
            raise DomainError("external codec has no decode command configured")
        with tempfile.TemporaryDirectory() as td:
            inp = os.path.join(td, "stream.bin")
            out = os.path.join(td, "frame.yuv")
            with open(inp, "wb") as f:
                f.write(payload)
            cmd = self.decode_cmd.format(input=inp, output=out, qp=0,
                                         width=width, height=height)
            subprocess.run(shlex.split(cmd), check=True, capture_output=True)
            with open(out, "rb") as f:
                raw = f.read(width * height)
        if len(raw) < width * height:
            raise FormatError("external decoder produced a short frame", offset=len(raw))
        return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


# ---------------------------------------------------------------------------
# selection plans


@dataclass
class SelectionPlan:
    ordering: list            # channel ids, descending importance
    mode: str                 # "hard" or "soft"
    keep_count: int
    qp: int = 30
    codec: ExternalCodec | None = None   # None = surrogate

    def __post_init__(self):
        c = len(self.ordering)
        if sorted(self.ordering) != list(range(c)):
            raise DomainError("ordering must be a permutation of 0..C-1")
        if not 1 <= self.keep_count <= c:
            raise DomainError(
                f"keep count must lie in [1, {c}], got {self.keep_count}")
        if self.mode not in ("hard", "soft"):
            raise DomainError(f"unknown selection mode {self.mode!r}")
        if self.mode == "soft":
            qp_step(self.qp)  # range check


def resolve_keep_count(channels, keep_fraction=None, keep_count=None):
    if (keep_fraction is None) == (keep_count is None):
        raise DomainError("specify exactly one of keep_fraction / keep_count")
    if keep_count is None:
        if not 0 < keep_fraction <= 1:
            raise DomainError(f"keep fraction must lie in (0, 1], got {keep_fraction}")
        keep_count = int(round(keep_fraction * channels))
    return max(1, min(channels, keep_count))


def hard_select(values, plan: SelectionPlan):
    """Keep the top-ranked channels; zero-fill the rest for downstream heads.

    Returns (kept (C', H, W), reconstruction (C, H, W)).
    """
    if plan.mode != "hard":
        raise DomainError("plan mode must be 'hard'")
    values = np.asarray(values, dtype=np.float32)
    keep = plan.ordering[:plan.keep_count]
    kept = values[keep]
    recon = np.zeros_like(values)
    recon[keep] = kept
    return kept, recon


@dataclass
class CompressedPayload:
    shape: tuple              # (C, H, W)
    base_ids: list
    enh_ids: list
    base: QuantizedTensor
    enh_mins: np.ndarray
    enh_maxs: np.ndarray
    enhancement_bitstream: bytes
    descriptor: TileDescriptor | None
    qp: int

    @property
    def base_bytes(self):
        # codes plus two float32 dequantization bounds per channel
        return int(self.base.codes.size) + 8 * len(self.base_ids)

    @property
    def enhancement_bytes(self):
        return len(self.enhancement_bitstream)

    @property
    def total_bytes(self):
        return self.base_bytes + self.enhancement_bytes


def soft_select(values, plan: SelectionPlan) -> CompressedPayload:
    """8-bit base channels + codec-compressed tiled enhancement channels."""
    if plan.mode != "soft":
        raise DomainError("plan mode must be 'soft'")
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 3:
        raise DomainError("soft_select expects a (C, H, W) tensor")
    base_ids = list(plan.ordering[:plan.keep_count])
    enh_ids = list(plan.ordering[plan.keep_count:])
    base = quantize8(values[base_ids])
    if enh_ids:
        enh_q = quantize8(values[enh_ids])
        image, desc = tile(enh_q.codes)
        if plan.codec is not None:
            stream = plan.codec.encode(image, plan.qp)
        else:
            stream = encode_enhancement(image, plan.qp)
        enh_mins, enh_maxs = enh_q.mins, enh_q.maxs
    else:
        desc, stream = None, b""
        enh_mins = np.zeros(0)
        enh_maxs = np.zeros(0)
    return CompressedPayload(
        shape=tuple(values.shape), base_ids=base_ids, enh_ids=enh_ids,
        base=base, enh_mins=enh_mins, enh_maxs=enh_maxs,
        enhancement_bitstream=stream, descriptor=desc, qp=plan.qp)


def reconstruct(payload: CompressedPayload, codec: ExternalCodec | None = None) -> np.ndarray:
    """Rebuild the full (C, H, W) tensor from a compressed payload."""
    c, h, w = payload.shape
    out = np.zeros((c, h, w), dtype=np.float32)
    out[payload.base_ids] = dequantize8(payload.base)
    if payload.enh_ids:
        desc = payload.descriptor
        if codec is not None:
            image = codec.decode(payload.enhancement_bitstream,
                                 desc.cols * desc.channel_width,
                                 desc.rows * desc.channel_height)
        else:
            image = decode_enhancement(payload.enhancement_bitstream)
        codes = untile(image, desc)
        q = QuantizedTensor(codes=codes, mins=payload.enh_mins, maxs=payload.enh_maxs)
        out[payload.enh_ids] = dequantize8(q)
    return out


# ---------------------------------------------------------------------------
# payload container file ("FPAY")


def save_payload(payload: CompressedPayload, path):
    header = {
        "shape": list(payload.shape),
        "base_ids": [int(i) for i in payload.base_ids],
        "enh_ids": [int(i) for i in payload.enh_ids],
        "base_mins": payload.base.mins.tolist(),
        "base_maxs": payload.base.maxs.tolist(),
        "enh_mins": payload.enh_mins.tolist(),
        "enh_maxs": payload.enh_maxs.tolist(),
        "qp": payload.qp,
        "descriptor": None if payload.descriptor is None else vars(payload.descriptor),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(PAYLOAD_MAGIC)
        f.write(struct.pack("<BI", 1, len(blob)))
        f.write(blob)
        f.write(payload.base.codes.tobytes())
        f.write(struct.pack("<I", len(payload.enhancement_bitstream)))
        f.write(payload.enhancement_bitstream)
    os.replace(tmp, path)


def load_payload(path) -> CompressedPayload:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != PAYLOAD_MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0)
        version, hlen = struct.unpack("<BI", f.read(5))
        if version != 1:
            raise FormatError(f"unsupported version {version}", offset=4)
        header = json.loads(f.read(hlen).decode("utf-8"))
        c, h, w = header["shape"]
        n_base = len(header["base_ids"])
        codes = np.frombuffer(f.read(n_base * h * w), dtype=np.uint8)
        if codes.size != n_base * h * w:
            raise FormatError("truncated base codes", offset=9 + hlen + codes.size)
        (elen,) = struct.unpack("<I", f.read(4))
        stream = f.read(elen)
        if len(stream) != elen:
            raise FormatError("truncated enhancement stream")
    desc = header["descriptor"]
    return CompressedPayload(
        shape=(c, h, w),
        base_ids=header["base_ids"],
        enh_ids=header["enh_ids"],
        base=QuantizedTensor(codes=codes.reshape(n_base, h, w).copy(),
                             mins=np.array(header["base_mins"]),
                             maxs=np.array(header["base_maxs"])),
        enh_mins=np.array(header["enh_mins"]),
        enh_maxs=np.array(header["enh_maxs"]),
        enhancement_bitstream=stream,
        descriptor=None if desc is None else TileDescriptor(**desc),
        qp=header["qp"])
