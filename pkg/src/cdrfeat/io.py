"""WAV ingestion, feature file serialization (CDRFEAT1 binary, CSV) and PGM heatmaps."""
from dataclasses import dataclass
from pathlib import Path
import struct
import warnings

import numpy as np

from .melfeat import FeatureMatrix

MAGIC = b"CDRFEAT1"
DIGEST_BYTES = 32
_NO_DIGEST = bytes(DIGEST_BYTES)

_PCM = 1
_FLOAT = 3
_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    pass


@dataclass(frozen=True)
class WavSpec:
    sample_rate_hz: int
    channels: int
    bit_depth: int
    is_float: bool
    n_samples: int


def read_wav(path, expected_rate: int = None, strict_rate: bool = True):
    """Read a PCM16 / PCM32 / float32 RIFF file.

    Returns ``(WavSpec, samples)`` with samples shaped (channels, n) and
    integer formats scaled by ``1 / 2**(bits - 1)``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavError(f"{path}: short fmt chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _EXTENSIBLE and len(body) >= 26:
                fmt = (struct.unpack("<H", body[24:26])[0],) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise WavError(f"{path}: truncated payload ({len(body)} of {size} bytes)")
            data = body
            break
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavError(f"{path}: missing fmt or data chunk")
    codec, channels, rate, _, block_align, bits = fmt
    if codec == _PCM and bits in (16, 32):
        dtype, is_float = np.dtype(f"<i{bits // 8}"), False
    elif codec == _FLOAT and bits == 32:
        dtype, is_float = np.dtype("<f4"), True
    else:
        raise WavError(f"{path}: unsupported codec {codec} with {bits} bits")
    if channels not in (1, 2):
        raise WavError(f"{path}: {channels} channels (expected 1 or 2)")
    if len(data) % block_align:
        raise WavError(f"{path}: truncated payload (partial sample frame)")
    if expected_rate is not None and rate != expected_rate:
        msg = f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz"
        if strict_rate:
            raise WavError(msg)
        warnings.warn(msg)
    frames = np.frombuffer(data, dtype=dtype).reshape(-1, channels).T
    if is_float:
        samples = frames.astype(np.float64)
    else:
        samples = frames.astype(np.float64) / float(2 ** (bits - 1))
    spec = WavSpec(rate, channels, bits, is_float, samples.shape[1])
    return spec, samples


def write_wav(path, samples, sample_rate_hz: int, fmt: str = "float32") -> WavSpec:
    """Write (channels, n) or 1-D samples as ``pcm16``, ``pcm32`` or ``float32``."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    channels = x.shape[0]
    if channels not in (1, 2):
        raise WavError("writers support 1 or 2 channels")
    if fmt == "float32":
        payload, codec, bits = x.T.astype("<f4").tobytes(), _FLOAT, 32
    elif fmt in ("pcm16", "pcm32"):
        bits = int(fmt[3:])
        scale = 2 ** (bits - 1)
        q = np.clip(np.round(x * scale), -scale, scale - 1)
        payload, codec = q.T.astype(f"<i{bits // 8}").tobytes(), _PCM
    else:
        raise WavError(f"unknown WAV format {fmt!r}")
    block_align = channels * bits // 8
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE", b"fmt ", 16,
                         codec, channels, sample_rate_hz, sample_rate_hz * block_align,
                         block_align, bits, b"data", len(payload))
    Path(path).write_bytes(header + payload)
    return WavSpec(sample_rate_hz, channels, bits, fmt == "float32", x.shape[1])


def _layout_text(layout) -> str:
    return ",".join(f"{name}:{dim}" for name, dim in layout)


def _parse_layout(text: str) -> list:
    if not text:
        return []
    out = []
    for item in text.split(","):
        name, _, dim = item.rpartition(":")
        out.append((name, int(dim)))
    return out


def write_features(matrix: FeatureMatrix, path, fmt: str = "binary", digest: bytes = None) -> None:
    """Serialize a feature matrix.

    ``binary``: CDRFEAT1 header followed by row-major little-endian float32.
    ``csv``: one ``#`` header line, then one frame per row with 9
    significant digits.
    """
    data = matrix.data
    if not np.all(np.isfinite(data)):
        raise ValueError("feature matrix contains non-finite values")
    digest = _NO_DIGEST if digest is None else bytes(digest)
    if len(digest) != DIGEST_BYTES:
        raise ValueError(f"config digest must be {DIGEST_BYTES} bytes")
    if fmt == "binary":
        Path(path).write_bytes(encode_header(matrix.layout, matrix.n_frames, matrix.frame_period_s, digest)
                               + data.astype("<f4").tobytes())
    elif fmt == "csv":
        lines = [f"# {MAGIC.decode()} layout={_layout_text(matrix.layout)} frames={matrix.n_frames} "
                 f"frame_period_s={matrix.frame_period_s!r} digest={digest.hex()}"]
        lines += [",".join(f"{v:.9g}" for v in row) for row in data.astype(np.float32).astype(np.float64)]
        Path(path).write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown feature format {fmt!r}")


def encode_header(layout, frame_count: int, frame_period_s: float, digest: bytes = _NO_DIGEST) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(layout))]
    for name, dim in layout:
        b = name.encode()
        parts.append(struct.pack("<H", len(b)) + b + struct.pack("<I", dim))
    parts.append(struct.pack("<Qd", frame_count, frame_period_s))
    parts.append(digest)
    return b"".join(parts)


def read_features(path):
    """Read a binary or CSV feature file; returns ``(FeatureMatrix, digest)``.

    Binary payloads come back as float32 values widened to float64.
    """
    raw = Path(path).read_bytes()
    if raw[:8] == MAGIC:
        pos = 8
        (n_blocks,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        layout = []
        for _ in range(n_blocks):
            (nlen,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            name = raw[pos:pos + nlen].decode()
            pos += nlen
            (dim,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            layout.append((name, dim))
        frame_count, period = struct.unpack_from("<Qd", raw, pos)
        pos += 16
        digest = raw[pos:pos + DIGEST_BYTES]
        pos += DIGEST_BYTES
        total = sum(d for _, d in layout)
        expected = frame_count * total * 4
        if len(raw) - pos != expected:
            raise ValueError(f"{path}: payload is {len(raw) - pos} bytes, header implies {expected}")
        data = np.frombuffer(raw[pos:], dtype="<f4").reshape(frame_count, total).astype(np.float64)
        return FeatureMatrix(layout, data, period), digest
    text = raw.decode()
    header, *rows = text.splitlines()
    if not header.startswith("# " + MAGIC.decode()):
        raise ValueError(f"{path}: not a feature file")
    meta = dict(tok.split("=", 1) for tok in header.split()[2:])
    layout = _parse_layout(meta["layout"])
    total = sum(d for _, d in layout)
    data = np.array([[float(v) for v in r.split(",")] for r in rows if r.strip()]).reshape(-1, total)
    return FeatureMatrix(layout, data, float(meta["frame_period_s"])), bytes.fromhex(meta["digest"])


def heatmap_pixels(block) -> np.ndarray:
    """Min-max scale to 0..255 with round-half-up; constant blocks map to 128.

    Returns an image array with feature dimension 0 in the bottom row and
    one column per frame.
    """
    x = np.asarray(block, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("heatmap block must be 2-D (frames, dims)")
    lo, hi = (x.min(), x.max()) if x.size else (0.0, 0.0)
    if hi > lo:
        pix = np.floor((x - lo) / (hi - lo) * 255.0 + 0.5)
    else:
        pix = np.full(x.shape, 128.0)
    return pix.T[::-1].astype(np.uint8)


def write_heatmap(block, path) -> None:
    """Write a (frames, dims) block as a binary 8-bit PGM image."""
    img = heatmap_pixels(block)
    height, width = img.shape
    Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode() + img.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, dims, maxval, rest = raw.split(b"\n", 3)
    width, height = dims.split()
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    return np.frombuffer(rest, dtype=np.uint8).reshape(int(height), int(width))
