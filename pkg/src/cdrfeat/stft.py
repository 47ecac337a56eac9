"""Windowed STFT analysis and weighted overlap-add synthesis."""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AnalysisConfig:
    sample_rate_hz: int = 16000
    window_len_samples: int = 400
    hop_samples: int = 160
    dft_size: int = 512
    window_kind: str = "hann"

    def __post_init__(self):
        for name in ("sample_rate_hz", "window_len_samples", "hop_samples", "dft_size"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.hop_samples <= self.window_len_samples <= self.dft_size:
            raise ValueError("need hop_samples <= window_len_samples <= dft_size")
        if self.dft_size & (self.dft_size - 1):
            raise ValueError("dft_size must be a power of two")
        if self.window_kind != "hann":
            raise ValueError(f"unsupported window kind {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.dft_size // 2 + 1

    @property
    def frame_period_s(self) -> float:
        return self.hop_samples / self.sample_rate_hz

    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.n_bins) * (self.sample_rate_hz / self.dft_size)

    def window(self) -> np.ndarray:
        return hann_window(self.window_len_samples)


@dataclass
class StftFrame:
    """Complex spectra of one analysis frame, shape (channels, n_bins)."""

    index: int
    bins: np.ndarray = field(repr=False)

    @property
    def n_channels(self) -> int:
        return self.bins.shape[0]


def hann_window(length: int) -> np.ndarray:
    # periodic form; sums to a constant under hops that divide the length
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def frame_count(n_samples: int, window_len: int, hop: int) -> int:
    if n_samples < window_len:
        return 0
    return (n_samples - window_len) // hop + 1


def _as_channels(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        x = samples.astype(np.float64, copy=False)
        if x.ndim == 1:
            return x[None, :]
        if x.ndim != 2:
            raise ValueError("samples must be 1-D or (channels, n)")
        return x
    chans = [np.asarray(c, dtype=np.float64) for c in samples]
    if not chans:
        raise ValueError("no channels given")
    lengths = sorted({len(c) for c in chans})
    if len(lengths) > 1:
        raise ValueError(f"channel length mismatch: {lengths}")
    return np.vstack(chans)


def _transform(segments: np.ndarray, window: np.ndarray, dft_size: int) -> np.ndarray:
    # segments: (..., window_len)
    return np.fft.rfft(segments * window, n=dft_size, axis=-1)


def analyze(samples, cfg: AnalysisConfig = AnalysisConfig()):
    """Yield StftFrame objects for a multichannel block.

    ``samples`` is either a (channels, n) array or a sequence of equal-length
    1-D channels.  Frame ``t`` covers ``[t*hop, t*hop + window_len)``; the
    trailing partial frame is dropped.
    """
    x = _as_channels(samples)
    n = frame_count(x.shape[1], cfg.window_len_samples, cfg.hop_samples)
    if n == 0:
        return
    segs = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len_samples, axis=1)
    segs = segs[:, ::cfg.hop_samples][:, :n]
    spec = _transform(segs, cfg.window(), cfg.dft_size)  # (ch, frames, bins)
    for t in range(n):
        yield StftFrame(t, np.ascontiguousarray(spec[:, t, :]))


def analyze_array(samples, cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """Batch variant of :func:`analyze` returning a (frames, channels, bins) array."""
    x = _as_channels(samples)
    frames = [f.bins for f in analyze(x, cfg)]
    if not frames:
        return np.zeros((0, x.shape[0], cfg.n_bins), dtype=complex)
    return np.stack(frames)


class StreamingAnalyzer:
    """Incremental STFT front-end.

    Accepts arbitrary-sized chunks of (channels, n) samples and returns the
    frames that became complete.  Frames are identical to :func:`analyze`
    on the concatenated input.
    """

    def __init__(self, n_channels: int, cfg: AnalysisConfig = AnalysisConfig()):
        self.cfg = cfg
        self.n_channels = n_channels
        self._window = cfg.window()
        self._buf = np.zeros((n_channels, 0))
        self._next_index = 0

    def push(self, chunk) -> list:
        chunk = _as_channels(chunk)
        if chunk.shape[0] != self.n_channels:
            raise ValueError(f"expected {self.n_channels} channels, got {chunk.shape[0]}")
        self._buf = np.concatenate([self._buf, chunk], axis=1)
        cfg = self.cfg
        n = frame_count(self._buf.shape[1], cfg.window_len_samples, cfg.hop_samples)
        if n == 0:
            return []
        segs = np.lib.stride_tricks.sliding_window_view(self._buf, cfg.window_len_samples, axis=1)
        segs = segs[:, ::cfg.hop_samples][:, :n]
        spec = _transform(segs, self._window, cfg.dft_size)
        out = []
        for t in range(n):
            out.append(StftFrame(self._next_index, np.ascontiguousarray(spec[:, t, :])))
            self._next_index += 1
        self._buf = self._buf[:, n * cfg.hop_samples:].copy()
        return out


def synthesize(frames, cfg: AnalysisConfig = AnalysisConfig()) -> np.ndarray:
    """Weighted overlap-add of single-channel spectra.

    ``frames`` may be StftFrame objects (first channel used) or 1-D bin
    arrays.  Returns ``(n_frames - 1) * hop + window_len`` samples.
    """
    spectra = []
    for f in frames:
        b = f.bins[0] if isinstance(f, StftFrame) else np.asarray(f)
        if b.ndim != 1:
            raise ValueError("synthesize expects single-channel frames")
        if b.shape[0] != cfg.n_bins:
            raise ValueError(f"inconsistent bin count {b.shape[0]} (expected {cfg.n_bins})")
        spectra.append(b)
    if not spectra:
        return np.zeros(0)
    L, hop = cfg.window_len_samples, cfg.hop_samples
    w = cfg.window()
    n_out = (len(spectra) - 1) * hop + L
    num = np.zeros(n_out)
    den = np.zeros(n_out)
    seg = np.fft.irfft(np.stack(spectra), n=cfg.dft_size, axis=-1)[:, :L] * w
    for t in range(len(spectra)):
        num[t * hop:t * hop + L] += seg[t]
        den[t * hop:t * hop + L] += w * w
    return num / np.maximum(den, 1e-8)
