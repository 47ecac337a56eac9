"""Synthetic two-microphone sound fields: plane wave plus spherically isotropic noise.

The microphones sit on the x axis at +-d/2.  A plane wave arriving at angle
``theta`` to that axis reaches microphone 2 ``d*cos(theta)/c`` seconds after
microphone 1.  The diffuse field is a superposition of independent white
plane waves whose ``cos(theta)`` is uniform on [-1, 1], i.e. directions
uniform on the sphere (azimuth does not affect a two-element line array).
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

FRACTIONAL_DELAY_TAPS = 32
_KAISER_BETA = 8.0


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 10.0
    snr_db: float = 0.0
    doa_deg: float = 90.0
    n_diffuse_waves: int = 128
    seed: int = 0
    mic_spacing_m: float = 0.08
    sound_speed_mps: float = 343.0
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if not 0.0 <= self.doa_deg <= 180.0:
            raise ValueError("doa_deg must lie in [0, 180]")
        if self.n_diffuse_waves < 32:
            raise ValueError("n_diffuse_waves must be >= 32")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def max_delay_samples(self) -> float:
        return self.mic_spacing_m / self.sound_speed_mps * self.sample_rate_hz


def tdoa_samples(doa_deg: float, cfg: SynthConfig) -> float:
    """Inter-microphone delay (mic 2 relative to mic 1) in samples."""
    delay = cfg.max_delay_samples * np.cos(np.deg2rad(doa_deg))
    # cos(pi/2) is 6e-17 in floating point; broadside must be an exact copy
    return 0.0 if abs(delay) < 1e-9 else float(delay)


def fractional_delay_filter(delay: float, taps: int = FRACTIONAL_DELAY_TAPS) -> np.ndarray:
    """Kaiser-windowed sinc interpolator; the window is centred on ``delay``."""
    n = np.arange(taps)
    half = taps / 2.0
    u = (n - delay) / half
    w = np.where(np.abs(u) < 1.0, np.i0(_KAISER_BETA * np.sqrt(np.clip(1.0 - u * u, 0.0, None))), 0.0)
    return np.sinc(n - delay) * w / np.i0(_KAISER_BETA)


def fractional_delay(x: np.ndarray, delay: float, taps: int = FRACTIONAL_DELAY_TAPS) -> np.ndarray:
    """Delay ``x`` by ``delay`` samples (may be negative or fractional), same length output."""
    x = np.asarray(x, dtype=np.float64)
    if float(delay).is_integer():
        shift = int(delay)
        out = np.zeros_like(x)
        if shift >= 0:
            out[shift:] = x[:len(x) - shift]
        else:
            out[:shift] = x[-shift:]
        return out
    bulk = taps // 2 - 1
    frac_total = bulk + delay
    if not 0.0 <= frac_total <= taps - 1:
        raise ValueError(f"delay {delay} outside the {taps}-tap interpolator range")
    y = np.convolve(x, fractional_delay_filter(frac_total, taps))
    return y[bulk:bulk + len(x)]


def plane_wave_pair(source, cfg: SynthConfig) -> np.ndarray:
    """Two-channel plane wave: channel 1 is ``source``, channel 2 the delayed copy."""
    source = np.asarray(source, dtype=np.float64)
    if not np.all(np.isfinite(source)):
        raise ValueError("source must be finite")
    return np.vstack([source, fractional_delay(source, tdoa_samples(cfg.doa_deg, cfg))])


def _rngs(cfg: SynthConfig):
    seq = np.random.SeedSequence(cfg.seed)
    source_seq, diffuse_seq = seq.spawn(2)
    return np.random.default_rng(source_seq), np.random.default_rng(diffuse_seq)


def diffuse_waves(cfg: SynthConfig):
    """Yield the (2, n) contribution of each diffuse plane wave.

    Each wave carries white noise of variance ``1 / n_diffuse_waves`` so
    the summed field has roughly unit power per channel.
    """
    _, rng = _rngs(cfg)
    # jittered stratification of cos(theta): each wave is still uniform on
    # its stratum, but the ensemble covers the sphere evenly, so the
    # realized coherence tracks the isotropic model with few waves
    n = cfg.n_diffuse_waves
    cos_theta = -1.0 + 2.0 * (np.arange(n) + rng.uniform(0.0, 1.0, n)) / n
    scale = 1.0 / np.sqrt(cfg.n_diffuse_waves)
    for ct in cos_theta:
        s = scale * rng.standard_normal(cfg.n_samples)
        half = 0.5 * cfg.max_delay_samples * ct
        yield np.vstack([fractional_delay(s, -half), fractional_delay(s, half)])


def diffuse_noise_pair(cfg: SynthConfig) -> np.ndarray:
    out = np.zeros((2, cfg.n_samples))
    for wave in diffuse_waves(cfg):
        out += wave
    return out


def white_source(cfg: SynthConfig) -> np.ndarray:
    rng, _ = _rngs(cfg)
    return rng.standard_normal(cfg.n_samples)


def broadband_power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def mix_at_cdr(coherent, diffuse, snr_db: float) -> np.ndarray:
    """Scale ``diffuse`` so the broadband coherent/diffuse power ratio is ``snr_db``."""
    coherent = np.asarray(coherent, dtype=np.float64)
    diffuse = np.asarray(diffuse, dtype=np.float64)
    if coherent.shape != diffuse.shape:
        raise ValueError(f"length mismatch: {coherent.shape} vs {diffuse.shape}")
    if np.isposinf(snr_db):
        return coherent.copy()
    p_diffuse = broadband_power(diffuse)
    if p_diffuse == 0.0:
        return coherent.copy()
    gain = np.sqrt(broadband_power(coherent) / (p_diffuse * 10.0 ** (snr_db / 10.0)))
    return coherent + gain * diffuse


def generate(cfg: SynthConfig, coherent_only: bool = False, diffuse_only: bool = False) -> np.ndarray:
    """White plane-wave source mixed with diffuse noise at ``cfg.snr_db``."""
    if coherent_only and diffuse_only:
        raise ValueError("coherent_only and diffuse_only are exclusive")
    if diffuse_only:
        return diffuse_noise_pair(cfg)
    coherent = plane_wave_pair(white_source(cfg), cfg)
    if coherent_only:
        return coherent
    return mix_at_cdr(coherent, diffuse_noise_pair(cfg), cfg.snr_db)


def burst_utterance(cfg: SynthConfig, burst_s: float = 0.35, gap_s: float = 0.45,
                    t60_s: float = 0.5, reverb_db: float = -6.0, floor_db: float = -40.0):
    """Speech-like test signal: coherent noise bursts with a diffuse reverberant tail.

    Bursts are low-pass shaped noise arriving from ``cfg.doa_deg``.  The
    diffuse part is the synthetic isotropic field modulated by the burst
    energy envelope smeared with an exponential decay of ``t60_s``, scaled
    to ``reverb_db`` relative to the direct bursts, over a stationary diffuse
    floor at ``floor_db``.

    Returns ``(signal, bursts)`` where ``bursts`` lists ``(start, stop)``
    sample indices of the direct-sound bursts.
    """
    fs = cfg.sample_rate_hz
    n = cfg.n_samples
    rng, _ = _rngs(cfg)
    raw = rng.standard_normal(n)
    # one-pole low-pass gives a falling, speech-like long-term spectrum
    shaped = lfilter([1.0], [1.0, -0.7], raw)
    shaped /= np.std(shaped)

    gate = np.zeros(n)
    bursts = []
    period = int((burst_s + gap_s) * fs)
    start = int(0.3 * fs)
    while start + int(burst_s * fs) <= n - int(0.2 * fs):
        stop = start + int(burst_s * fs)
        ramp = int(0.005 * fs)
        g = np.ones(stop - start)
        g[:ramp] = np.linspace(0.0, 1.0, ramp)
        g[-ramp:] = np.linspace(1.0, 0.0, ramp)
        gate[start:stop] = g
        bursts.append((start, stop))
        start += period
    direct = plane_wave_pair(shaped * gate, cfg)

    # exponential energy decay: 60 dB over t60_s
    decay = 10.0 ** (-6.0 / (t60_s * fs))
    energy = lfilter([1.0 - decay], [1.0, -decay], gate * gate)
    envelope = np.sqrt(10.0 ** (reverb_db / 10.0) * energy + 10.0 ** (floor_db / 10.0))
    diffuse = diffuse_noise_pair(cfg)
    diffuse /= np.sqrt(broadband_power(diffuse))
    return direct + envelope * diffuse, bursts
