"""Feature pipeline shared by batch extraction and streaming."""
from collections import deque
from dataclasses import dataclass, field, fields
import hashlib

import numpy as np

from .coherence import CoherenceConfig, DiffusenessEstimator
from .enhance import EnhanceConfig, apply_gain, subtraction_gain
from .melfeat import (DELTA_WINDOW, FeatureMatrix, MelConfig, average_power, build_filterbank,
                      deltas as delta_coeffs, log_mel_power, meldiffuseness, melmsc, mvn,
                      regression_deltas, splice)
from .stft import AnalysisConfig, StreamingAnalyzer, _as_channels, analyze, synthesize

FEATURES = ("logmelspec", "logmelspec_enh", "meldiffuseness", "melmsc")
SPATIAL_FEATURES = frozenset({"logmelspec_enh", "meldiffuseness", "melmsc"})

# feature rows of the four systems compared in the paper's results table
PRESETS = {
    "paper-noisy": {"features": ("logmelspec",), "deltas": 2},
    "paper-enhanced": {"features": ("logmelspec_enh",), "deltas": 2},
    "paper-diffuseness": {"features": ("logmelspec", "meldiffuseness"), "deltas": 1},
    "paper-msc": {"features": ("logmelspec", "melmsc"), "deltas": 1},
}


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    coherence: CoherenceConfig = field(default_factory=CoherenceConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    features: tuple = ("logmelspec",)
    deltas: int = 0
    mvn: bool = False
    splice: int = 0

    def __post_init__(self):
        if not self.features:
            raise ConfigError("at least one feature must be selected")
        unknown = [f for f in self.features if f not in FEATURES]
        if unknown:
            raise ConfigError(f"unknown feature(s) {unknown}; choose from {list(FEATURES)}")
        if len(set(self.features)) != len(self.features):
            raise ConfigError("duplicate feature selection")
        if self.deltas not in (0, 1, 2):
            raise ConfigError("deltas must be 0, 1 or 2")
        if self.splice < 0:
            raise ConfigError("splice context must be non-negative")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "PipelineConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    @property
    def needs_two_channels(self) -> bool:
        return bool(SPATIAL_FEATURES.intersection(self.features))

    def layout(self) -> list:
        """Frame-level layout: first feature, its deltas, then remaining features."""
        n = self.mel.n_mel
        first, rest = self.features[0], self.features[1:]
        out = [(first, n)]
        if self.deltas >= 1:
            out.append(("delta", n))
        if self.deltas == 2:
            out.append(("delta_delta", n))
        out.extend((name, n) for name in rest)
        return out

    def canonical(self) -> str:
        """Stable ``key=value`` serialization of every setting."""
        lines = []
        for group in ("analysis", "coherence", "mel", "enhance"):
            obj = getattr(self, group)
            for f in fields(obj):
                lines.append(f"{group}.{f.name}={getattr(obj, f.name)!r}")
        lines.append(f"features={','.join(self.features)}")
        lines.append(f"deltas={self.deltas}")
        lines.append(f"mvn={self.mvn}")
        lines.append(f"splice={self.splice}")
        return "\n".join(lines)

    def digest(self) -> bytes:
        return hashlib.sha256(self.canonical().encode()).digest()


class FrameProcessor:
    """Computes the selected per-frame features (no deltas) for one stream."""

    def __init__(self, cfg: PipelineConfig, n_channels: int = 2):
        if cfg.needs_two_channels and n_channels != 2:
            raise ConfigError(f"features {sorted(SPATIAL_FEATURES.intersection(cfg.features))} "
                              f"need a two-channel input, got {n_channels} channel(s)")
        self.cfg = cfg
        self.fb = build_filterbank(cfg.mel, cfg.analysis)
        self.estimator = (DiffusenessEstimator(cfg.analysis.bin_freqs(), cfg.coherence)
                          if n_channels == 2 else None)

    def process(self, frame) -> dict:
        bins = getattr(frame, "bins", frame)
        wanted = self.cfg.features
        out = {}
        est = self.estimator.process(bins) if self.estimator is not None else None
        power = average_power(bins)
        if "logmelspec" in wanted:
            out["logmelspec"] = log_mel_power(power, self.fb)
        if "logmelspec_enh" in wanted:
            gain = subtraction_gain(est.cdr, self.cfg.enhance)
            out["logmelspec_enh"] = log_mel_power(apply_gain(power, gain, power=True), self.fb)
        if "meldiffuseness" in wanted:
            out["meldiffuseness"] = meldiffuseness(est.diffuseness, self.fb)
        if "melmsc" in wanted:
            out["melmsc"] = melmsc(est.coherence, self.fb)
        return out


class StreamingDeltas:
    """Regression deltas with bounded lookahead.

    Rows go in one at a time; a delta row is released once ``width``
    future rows are known (or at :meth:`flush`, with the last row
    replicated), matching :func:`melfeat.deltas` exactly.
    """

    def __init__(self, width: int = DELTA_WINDOW):
        self.width = width
        self._rows = {}
        self._n_in = 0
        self._n_out = 0

    def _emit(self, last: int) -> np.ndarray:
        t = self._n_out
        idx = [min(max(t + k, 0), last) for k in range(-self.width, self.width + 1)]
        window = np.stack([self._rows[i] for i in idx])
        self._n_out += 1
        for i in [i for i in self._rows if i < self._n_out - self.width]:
            del self._rows[i]
        return regression_deltas(window, self.width)[0]

    def push(self, row) -> list:
        self._rows[self._n_in] = np.asarray(row, dtype=np.float64)
        self._n_in += 1
        out = []
        while self._n_out + self.width < self._n_in:
            out.append(self._emit(self._n_in - 1))
        return out

    def flush(self) -> list:
        out = []
        while self._n_out < self._n_in:
            out.append(self._emit(self._n_in - 1))
        return out


class FeatureStream:
    """Frame-level feature rows (features plus deltas) from raw sample chunks.

    Rows are released as soon as the delta lookahead allows; call
    :meth:`finish` at end of input to drain the remaining rows.  Output is
    bit-identical to :func:`extract_frames` on the concatenated input.
    """

    def __init__(self, cfg: PipelineConfig, n_channels: int = 2):
        self.cfg = cfg
        self.analyzer = StreamingAnalyzer(n_channels, cfg.analysis)
        self.processor = FrameProcessor(cfg, n_channels)
        self._pending = deque()
        self._d1 = StreamingDeltas() if cfg.deltas >= 1 else None
        self._d2 = StreamingDeltas() if cfg.deltas == 2 else None
        self._q1 = deque()
        self._q2 = deque()

    def _route(self, d1_rows, final=False):
        self._q1.extend(d1_rows)
        if self._d2 is not None:
            for r in d1_rows:
                self._q2.extend(self._d2.push(r))
            if final:
                self._q2.extend(self._d2.flush())

    def _collect(self) -> list:
        rows = []
        while self._pending:
            if self._d1 is not None and not self._q1:
                break
            if self._d2 is not None and not self._q2:
                break
            feats = self._pending.popleft()
            parts = [feats[self.cfg.features[0]]]
            if self._d1 is not None:
                parts.append(self._q1.popleft())
            if self._d2 is not None:
                parts.append(self._q2.popleft())
            parts.extend(feats[name] for name in self.cfg.features[1:])
            rows.append(np.concatenate(parts))
        return rows

    def push(self, chunk) -> list:
        for frame in self.analyzer.push(chunk):
            feats = self.processor.process(frame)
            self._pending.append(feats)
            if self._d1 is not None:
                self._route(self._d1.push(feats[self.cfg.features[0]]))
        return self._collect()

    def finish(self) -> list:
        if self._d1 is not None:
            self._route(self._d1.flush(), final=True)
        return self._collect()


def extract_frames(samples, cfg: PipelineConfig) -> FeatureMatrix:
    """Frame-level features (with deltas, without MVN/splicing) for a whole utterance."""
    x = _as_channels(samples)
    proc = FrameProcessor(cfg, x.shape[0])
    per_frame = [proc.process(frame) for frame in analyze(x, cfg.analysis)]
    layout = cfg.layout()
    if not per_frame:
        return FeatureMatrix(layout, np.zeros((0, sum(d for _, d in layout))), cfg.analysis.frame_period_s)
    blocks = {name: np.stack([f[name] for f in per_frame]) for name in cfg.features}
    first = blocks[cfg.features[0]]
    parts = [first]
    for order in range(1, cfg.deltas + 1):
        parts.append(delta_coeffs(first, order))
    parts.extend(blocks[name] for name in cfg.features[1:])
    return FeatureMatrix(layout, np.concatenate(parts, axis=1), cfg.analysis.frame_period_s)


def postprocess(frames: FeatureMatrix, cfg: PipelineConfig) -> FeatureMatrix:
    """Utterance-level steps: MVN first, then splicing."""
    out = frames
    if cfg.mvn:
        out = mvn(out)
    if cfg.splice:
        out = splice(out, cfg.splice)
    return out


def extract(samples, cfg: PipelineConfig) -> FeatureMatrix:
    out = postprocess(extract_frames(samples, cfg), cfg)
    if not np.all(np.isfinite(out.data)):
        raise NumericalError("non-finite feature value")
    return out


def enhance_signal(samples, cfg: PipelineConfig):
    """Apply the coherence-based gain to both channels and resynthesize.

    Returns ``(enhanced, mean_diffuseness)`` where ``enhanced`` has the input
    shape (samples outside the last full frame are zero) and
    ``mean_diffuseness`` is the per-frame diffuseness averaged over the bins
    inside the Mel frequency range.
    """
    x = _as_channels(samples)
    if x.shape[0] != 2:
        raise ConfigError("enhancement needs a two-channel input")
    acfg = cfg.analysis
    est = DiffusenessEstimator(acfg.bin_freqs(), cfg.coherence)
    f = acfg.bin_freqs()
    in_range = (f >= cfg.mel.f_min_hz) & (f <= cfg.mel.f_max_hz)
    enhanced = [[], []]
    mean_d = []
    for frame in analyze(x, acfg):
        d = est.process(frame)
        gain = subtraction_gain(d.cdr, cfg.enhance)
        scaled = apply_gain(frame.bins, gain)
        enhanced[0].append(scaled[0])
        enhanced[1].append(scaled[1])
        mean_d.append(float(d.diffuseness[in_range].mean()))
    out = np.zeros_like(x)
    if mean_d:
        for ch in range(2):
            y = synthesize(enhanced[ch], acfg)
            out[ch, :len(y)] = y
    return out, np.array(mean_d)

