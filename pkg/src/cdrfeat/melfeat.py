"""Mel filterbank, the four per-frame feature paths and utterance post-processing."""
from dataclasses import dataclass, field

import numpy as np

from .stft import AnalysisConfig


@dataclass(frozen=True)
class MelConfig:
    n_mel: int = 24
    f_min_hz: float = 64.0
    f_max_hz: float = 8000.0
    log_floor: float = 1e-10
    normalize_rows_for_ratios: bool = True

    def __post_init__(self):
        if self.n_mel < 1:
            raise ValueError("n_mel must be >= 1")
        if not 0.0 <= self.f_min_hz < self.f_max_hz:
            raise ValueError("need 0 <= f_min_hz < f_max_hz")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray = field(repr=False)
    edges_hz: np.ndarray = field(repr=False)
    log_floor: float = 1e-10
    normalize_rows_for_ratios: bool = True

    @property
    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    @property
    def n_mel(self) -> int:
        return self.weights.shape[0]


def build_filterbank(mel_cfg: MelConfig = MelConfig(), analysis_cfg: AnalysisConfig = AnalysisConfig()) -> MelFilterbank:
    if mel_cfg.f_max_hz > analysis_cfg.sample_rate_hz / 2:
        raise ValueError("f_max_hz exceeds the Nyquist frequency")
    edges = mel_to_hz(np.linspace(hz_to_mel(mel_cfg.f_min_hz), hz_to_mel(mel_cfg.f_max_hz),
                                  mel_cfg.n_mel + 2))
    f = analysis_cfg.bin_freqs()
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (f - lo) / (mid - lo)
    falling = (hi - f) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.sum(axis=1) <= 0)
    if empty.size:
        raise ValueError(f"mel filters {empty.tolist()} cover no DFT bin; "
                         "reduce n_mel or widen the frequency range")
    return MelFilterbank(weights, edges, mel_cfg.log_floor, mel_cfg.normalize_rows_for_ratios)


def average_power(bins: np.ndarray) -> np.ndarray:
    """Power spectrum averaged over channels; ``bins`` is (channels, n_bins)."""
    bins = np.atleast_2d(bins)
    p = bins.real * bins.real + bins.imag * bins.imag
    return p.sum(axis=0) / bins.shape[0]


def log_mel_power(power: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    return np.log(np.maximum(fb.log_floor, fb.weights @ power))


def logmelspec(bins: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    return log_mel_power(average_power(bins), fb)


def _mel_ratio(values: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    out = fb.weights @ values
    if fb.normalize_rows_for_ratios:
        out = out / fb.row_sums
    return out


def meldiffuseness(diffuseness: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    diffuseness = getattr(diffuseness, "diffuseness", diffuseness)
    return _mel_ratio(diffuseness, fb)


def melmsc(coherence: np.ndarray, fb: MelFilterbank) -> np.ndarray:
    coherence = getattr(coherence, "coherence", coherence)
    msc = coherence.real * coherence.real + coherence.imag * coherence.imag
    return _mel_ratio(msc, fb)


@dataclass
class FeatureMatrix:
    layout: list
    data: np.ndarray
    frame_period_s: float = 0.01

    def __post_init__(self):
        self.layout = [(str(n), int(d)) for n, d in self.layout]
        self.data = np.asarray(self.data, dtype=np.float64).reshape(-1, self.total_dim)

    @property
    def total_dim(self) -> int:
        return sum(d for _, d in self.layout)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def block(self, name: str) -> np.ndarray:
        start = 0
        for n, d in self.layout:
            if n == name:
                return self.data[:, start:start + d]
            start += d
        raise KeyError(name)


DELTA_WINDOW = 2


def regression_deltas(padded: np.ndarray, width: int = DELTA_WINDOW) -> np.ndarray:
    """Regression deltas of the rows ``width .. len - width`` of ``padded``.

    The caller supplies the ``width`` context rows on both sides; streaming
    and batch code share this routine so their outputs agree bit for bit.
    """
    n = padded.shape[0] - 2 * width
    acc = np.zeros((n,) + padded.shape[1:])
    for k in range(1, width + 1):
        acc = acc + k * (padded[width + k:width + k + n] - padded[width - k:width - k + n])
    return acc / (2.0 * sum(k * k for k in range(1, width + 1)))


def deltas(features: np.ndarray, order: int = 1, width: int = DELTA_WINDOW) -> np.ndarray:
    """Delta (order 1) or acceleration (order 2) coefficients with edge replication."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    c = np.asarray(features, dtype=np.float64)
    if c.shape[0] < 1:
        raise ValueError("need at least one frame")
    for _ in range(order):
        c = regression_deltas(np.pad(c, [(width, width)] + [(0, 0)] * (c.ndim - 1), mode="edge"), width)
    return c


def mvn(features: FeatureMatrix, floor: float = 1e-8) -> FeatureMatrix:
    """Per-utterance mean and variance normalization (population std)."""
    x = features.data
    if x.shape[0] < 2:
        raise ValueError("mean/variance normalization needs at least 2 frames")
    mean = x.mean(axis=0)
    std = np.maximum(x.std(axis=0), floor)
    return FeatureMatrix(features.layout, (x - mean) / std, features.frame_period_s)


def splice(features: FeatureMatrix, context: int) -> FeatureMatrix:
    """Concatenate frames ``t-context .. t+context`` (edge replicated)."""
    if context < 0:
        raise ValueError("context must be non-negative")
    if context == 0:
        return FeatureMatrix(features.layout, features.data.copy(), features.frame_period_s)
    x = features.data
    n = x.shape[0]
    padded = np.pad(x, [(context, context), (0, 0)], mode="edge") if n else x
    parts = [padded[context + k:context + k + n] for k in range(-context, context + 1)]
    layout = [(f"{name}[{k:+d}]", d) for k in range(-context, context + 1) for name, d in features.layout]
    data = np.concatenate(parts, axis=1) if n else np.zeros((0, x.shape[1] * (2 * context + 1)))
    return FeatureMatrix(layout, data, features.frame_period_s)
