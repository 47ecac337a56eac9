"""Recursive spatial coherence estimation and the blind CDR estimator.

Two omnidirectional microphones observe a fully coherent direct component
(plane wave, unknown arrival direction) plus a spherically isotropic
diffuse component.  The mixture coherence lies on the chord between the
direct-path phasor and the real diffuse coherence; the estimator below
recovers the coherent-to-diffuse power ratio (CDR) from the mixture
coherence alone, using only ``|Gamma_s| = 1``.

Convention note: the diffuse coherence uses the *unnormalized* sinc,
``sin(x) / x`` with ``x = 2*pi*f*d/c``.  ``np.sinc`` is the normalized
variant and must be called as ``np.sinc(2*f*d/c)`` to match.
"""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CoherenceConfig:
    forgetting_factor: float = 0.68
    mic_spacing_m: float = 0.08
    sound_speed_mps: float = 343.0
    cdr_max: float = 1e4
    gamma_clip_eps: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.forgetting_factor < 1.0:
            raise ValueError("forgetting_factor must lie in [0, 1)")
        if self.mic_spacing_m <= 0 or self.sound_speed_mps <= 0:
            raise ValueError("mic spacing and sound speed must be positive")
        if self.cdr_max <= 0 or self.gamma_clip_eps <= 0:
            raise ValueError("cdr_max and gamma_clip_eps must be positive")


@dataclass
class CoherenceState:
    """Recursively averaged auto- and cross-power spectra for one stream."""

    phi11: np.ndarray
    phi22: np.ndarray
    phi12: np.ndarray
    frames_seen: int = 0

    @classmethod
    def zeros(cls, n_bins: int) -> "CoherenceState":
        return cls(np.zeros(n_bins), np.zeros(n_bins), np.zeros(n_bins, dtype=complex))

    @property
    def n_bins(self) -> int:
        return self.phi11.shape[0]


@dataclass
class DiffusenessFrame:
    index: int
    coherence: np.ndarray = field(repr=False)
    cdr: np.ndarray = field(repr=False)
    diffuseness: np.ndarray = field(repr=False)


def update(state: CoherenceState, bins: np.ndarray, cfg: CoherenceConfig = CoherenceConfig()) -> np.ndarray:
    """Advance the recursive averages by one frame and return the coherence.

    ``bins`` is the (2, n_bins) complex spectrum of the current frame (an
    ``StftFrame`` is accepted too).  ``state`` is modified in place.
    """
    bins = getattr(bins, "bins", bins)
    if bins.ndim != 2 or bins.shape[0] != 2:
        raise ValueError(f"coherence needs exactly 2 channels, got shape {bins.shape}")
    if bins.shape[1] != state.n_bins:
        raise ValueError(f"bin count {bins.shape[1]} does not match state ({state.n_bins})")
    lam = cfg.forgetting_factor
    x1, x2 = bins[0], bins[1]
    state.phi11 = lam * state.phi11 + (1.0 - lam) * (x1.real * x1.real + x1.imag * x1.imag)
    state.phi22 = lam * state.phi22 + (1.0 - lam) * (x2.real * x2.real + x2.imag * x2.imag)
    state.phi12 = lam * state.phi12 + (1.0 - lam) * (x1 * np.conj(x2))
    state.frames_seen += 1
    return coherence_from_state(state, cfg)


def coherence_from_state(state: CoherenceState, cfg: CoherenceConfig = CoherenceConfig()) -> np.ndarray:
    denom = np.sqrt(state.phi11 * state.phi22)
    live = denom >= cfg.gamma_clip_eps
    gamma = np.zeros(state.n_bins, dtype=complex)
    gamma[live] = state.phi12[live] / denom[live]
    mag = np.abs(gamma)
    over = mag > 1.0
    if over.any():
        # land a few ulps inside the unit circle so |gamma| <= 1 survives rounding
        gamma[over] *= (1.0 - 4.0 * np.finfo(float).eps) / mag[over]
    return gamma


def diffuse_coherence_model(bin_freqs_hz, cfg: CoherenceConfig = CoherenceConfig()) -> np.ndarray:
    """Coherence of a spherically isotropic field, ``sin(x)/x`` at ``x = 2*pi*f*d/c``."""
    f = np.asarray(bin_freqs_hz, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequencies must be non-negative")
    # np.sinc(t) = sin(pi t)/(pi t), so t = 2 f d / c
    return np.sinc(2.0 * f * cfg.mic_spacing_m / cfg.sound_speed_mps)


def mixed_coherence_forward(snr, gamma_s, gamma_n):
    """Coherence of a mixture of a coherent and a diffuse component.

    Forward model used as the estimator's test oracle:
    ``(snr * gamma_s + gamma_n) / (snr + 1)``.
    """
    snr = np.asarray(snr, dtype=np.float64)
    gamma_s = np.asarray(gamma_s, dtype=complex)
    if np.any(snr < 0):
        raise ValueError("snr must be non-negative")
    if np.any(np.abs(np.abs(gamma_s) - 1.0) > 1e-12):
        raise ValueError("gamma_s must have unit magnitude")
    return (snr * gamma_s + gamma_n) / (snr + 1.0)


def estimate_cdr(gamma_x, gamma_n, cfg: CoherenceConfig = CoherenceConfig()) -> np.ndarray:
    """Blind (DOA-independent) CDR estimate from the mixture coherence.

    Guards: the square-root argument is clamped at zero, a vanishing
    denominator ``|gamma_x|^2 - 1`` saturates to ``cfg.cdr_max``, and the
    result is clipped into ``[0, cdr_max]``.
    """
    gx = np.asarray(gamma_x, dtype=complex)
    gn = np.asarray(gamma_n, dtype=np.float64)
    re = gx.real
    mag2 = gx.real * gx.real + gx.imag * gx.imag
    # gn^2 re^2 - gn^2 |gx|^2 + gn^2 - 2 gn re + |gx|^2, regrouped into two
    # non-negative terms; the expanded form cancels near gx = gn and the
    # sqrt turns 1e-16 of rounding into 1e-8 of CDR error
    root_arg = (gn - re) ** 2 + gx.imag * gx.imag * (1.0 - gn * gn)
    num = gn * re - mag2 - np.sqrt(np.maximum(root_arg, 0.0))
    den = mag2 - 1.0
    degenerate = np.abs(den) < cfg.gamma_clip_eps
    with np.errstate(divide="ignore", invalid="ignore"):
        cdr = np.where(degenerate, cfg.cdr_max, num / np.where(degenerate, -1.0, den))
    cdr = np.where(np.isnan(cdr), cfg.cdr_max, cdr)
    return np.clip(cdr, 0.0, cfg.cdr_max)


def cdr_to_diffuseness(cdr) -> np.ndarray:
    return 1.0 / (np.asarray(cdr, dtype=np.float64) + 1.0)


class DiffusenessEstimator:
    """Per-stream chain: recursive coherence -> CDR -> diffuseness."""

    def __init__(self, bin_freqs_hz, cfg: CoherenceConfig = CoherenceConfig()):
        self.cfg = cfg
        self.gamma_n = diffuse_coherence_model(bin_freqs_hz, cfg)
        self.state = CoherenceState.zeros(len(self.gamma_n))

    def process(self, frame) -> DiffusenessFrame:
        bins = getattr(frame, "bins", frame)
        gamma = update(self.state, bins, self.cfg)
        cdr = estimate_cdr(gamma, self.gamma_n, self.cfg)
        return DiffusenessFrame(getattr(frame, "index", self.state.frames_seen - 1),
                                gamma, cdr, cdr_to_diffuseness(cdr))


def long_term_coherence(spectra: np.ndarray) -> np.ndarray:
    """Coherence from spectra averaged over all frames; ``spectra`` is (frames, 2, bins)."""
    x1, x2 = spectra[:, 0], spectra[:, 1]
    p11 = np.mean(np.abs(x1) ** 2, axis=0)
    p22 = np.mean(np.abs(x2) ** 2, axis=0)
    p12 = np.mean(x1 * np.conj(x2), axis=0)
    denom = np.sqrt(p11 * p22)
    return np.divide(p12, denom, out=np.zeros_like(p12), where=denom > 0)
