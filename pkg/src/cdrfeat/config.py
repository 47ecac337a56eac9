"""Flat ``key = value`` configuration files and their mapping onto pipeline settings.

Keys are the long CLI flag names without dashes (``lambda``, ``gmin``,
``n-mel`` or ``n_mel``...).  Lines starting with ``#`` are comments.
"""
import os
from pathlib import Path

from .coherence import CoherenceConfig
from .enhance import EnhanceConfig
from .melfeat import MelConfig
from .pipeline import PRESETS, ConfigError, PipelineConfig
from .stft import AnalysisConfig

ENV_VAR = "CDRFEAT_CONFIG"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _features(text):
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


# canonical key -> parser
KEYS = {
    "in": str, "out": str, "preset": str, "features": _features, "deltas": int, "mvn": _bool,
    "splice": int, "d": float, "lambda": float, "gmin": float, "mu": float, "format": str,
    "heatmap": str, "jobs": int, "sample_rate": int, "window_len": int, "hop": int,
    "dft_size": int, "n_mel": int, "fmin": float, "fmax": float, "sound_speed": float,
    "cdr_max": float, "log_floor": float, "normalize_ratios": _bool,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def load_config_file(path=None) -> dict:
    """Read ``path`` or, if None, the file named by ``$CDRFEAT_CONFIG`` (if set)."""
    if path is None:
        path = os.environ.get(ENV_VAR)
        if not path:
            return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text, str(p))


def merge(file_settings: dict, flag_settings: dict) -> dict:
    """Flags override file values; both are parsed into typed values."""
    merged = {}
    for source in (file_settings, flag_settings):
        for key, value in source.items():
            if value is None:
                continue
            try:
                merged[key] = KEYS[key](value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return merged


def build_pipeline_config(settings: dict) -> PipelineConfig:
    s = settings
    if s.get("preset") and s["preset"] not in PRESETS:
        raise ConfigError(f"unknown preset {s['preset']!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[s["preset"]] if s.get("preset") else {}
    try:
        analysis = AnalysisConfig(
            sample_rate_hz=s.get("sample_rate", 16000),
            window_len_samples=s.get("window_len", 400),
            hop_samples=s.get("hop", 160),
            dft_size=s.get("dft_size", 512),
        )
        coherence = CoherenceConfig(
            forgetting_factor=s.get("lambda", 0.68),
            mic_spacing_m=s.get("d", 0.08),
            sound_speed_mps=s.get("sound_speed", 343.0),
            cdr_max=s.get("cdr_max", 1e4),
        )
        mel = MelConfig(
            n_mel=s.get("n_mel", 24),
            f_min_hz=s.get("fmin", 64.0),
            f_max_hz=s.get("fmax", 8000.0),
            log_floor=s.get("log_floor", 1e-10),
            normalize_rows_for_ratios=s.get("normalize_ratios", True),
        )
        enhance = EnhanceConfig(gain_floor=s.get("gmin", 0.1), overestimation=s.get("mu", 1.0))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return PipelineConfig(
        analysis=analysis, coherence=coherence, mel=mel, enhance=enhance,
        features=s.get("features", base.get("features", ("logmelspec",))),
        deltas=s.get("deltas", base.get("deltas", 0)),
        mvn=s.get("mvn", False),
        splice=s.get("splice", 0),
    )
