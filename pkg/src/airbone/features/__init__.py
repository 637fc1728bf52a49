"""Feature extraction: mel spectrograms, time-delay and energy-decrease matrices."""

from airbone.features.framing import FrameGrid
from airbone.features.melspec import MelSpec, mel_filterbank, mel_spectrogram
from airbone.features.vad import NoVoiceActivityError, detect_voice_activity
from airbone.features.tdoa import TimeDelayMatrix, gcc_phat, time_delay_matrix
from airbone.features.energy import EnergyDecreaseMatrix, energy_decrease_matrix
from airbone.features.bundle import (
    ExtractConfig,
    FeatureBundle,
    extract_bundle,
    load_bundle,
    save_bundle,
    substitute_ac_features,
)

__all__ = [
    "EnergyDecreaseMatrix",
    "ExtractConfig",
    "FeatureBundle",
    "FrameGrid",
    "MelSpec",
    "NoVoiceActivityError",
    "TimeDelayMatrix",
    "detect_voice_activity",
    "energy_decrease_matrix",
    "extract_bundle",
    "gcc_phat",
    "load_bundle",
    "mel_filterbank",
    "mel_spectrogram",
    "save_bundle",
    "substitute_ac_features",
    "time_delay_matrix",
]
