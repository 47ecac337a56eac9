"""Blind coherent-to-diffuse ratio estimation and diffuseness features for two-microphone ASR front ends."""
from .coherence import (CoherenceConfig, CoherenceState, DiffusenessEstimator, DiffusenessFrame,
                        cdr_to_diffuseness, diffuse_coherence_model, estimate_cdr,
                        mixed_coherence_forward, update)
from .enhance import EnhanceConfig, apply_gain, subtraction_gain
from .melfeat import (FeatureMatrix, MelConfig, MelFilterbank, build_filterbank, deltas,
                      logmelspec, meldiffuseness, melmsc, mvn, splice)
from .pipeline import PRESETS, FeatureStream, PipelineConfig, extract, extract_frames
from .stft import AnalysisConfig, StftFrame, analyze, synthesize
from .synth import SynthConfig, diffuse_noise_pair, mix_at_cdr, plane_wave_pair

__version__ = "0.1.0"
