"""Coherence-based spectral magnitude subtraction."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnhanceConfig:
    gain_floor: float = 0.1
    overestimation: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gain_floor <= 1.0:
            raise ValueError("gain_floor must lie in [0, 1]")
        if self.overestimation <= 0:
            raise ValueError("overestimation must be positive")


def subtraction_gain(cdr, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    """Magnitude-subtraction gain ``max(G_min, 1 - mu * sqrt(1 / (cdr + 1)))``.

    ``1 / (cdr + 1)`` is the diffuse power fraction, so its square root is
    the diffuse magnitude fraction that gets subtracted.
    """
    diffuse_power = 1.0 / (np.asarray(cdr, dtype=np.float64) + 1.0)
    return np.maximum(cfg.gain_floor, 1.0 - cfg.overestimation * np.sqrt(diffuse_power))


def apply_gain(spectrum, gain, power: bool = False):
    """Scale complex bins by ``gain`` (phase kept) or a power spectrum by ``gain**2``.

    Accepts an array of shape (..., n_bins) or an ``StftFrame``.
    """
    gain = np.asarray(gain, dtype=np.float64)
    bins = getattr(spectrum, "bins", spectrum)
    bins = np.asarray(bins)
    if bins.shape[-1] != gain.shape[-1]:
        raise ValueError(f"bin count mismatch: spectrum {bins.shape[-1]}, gain {gain.shape[-1]}")
    out = bins * (gain * gain) if power else bins * gain
    if hasattr(spectrum, "bins"):
        return type(spectrum)(spectrum.index, out)
    return out
