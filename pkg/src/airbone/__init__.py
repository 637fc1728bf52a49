"""Voice authentication from glasses-style microphone arrays.

Combines per-channel mel spectrograms, pairwise time-delay and
energy-decrease matrices (sound-field features) and bone-conduction
spectra into a trainable speaker embedding with cosine verification
and an envelope-based liveness gate.
"""

__version__ = "0.1.0"

from airbone.audio_io import (
    ChannelRole,
    MultichannelRecording,
    UtteranceEntry,
    apply_gain,
    load_manifest,
    load_recording,
    mix_noise,
    resample,
    select_channels,
    write_recording,
)

__all__ = [
    "ChannelRole",
    "MultichannelRecording",
    "UtteranceEntry",
    "apply_gain",
    "load_manifest",
    "load_recording",
    "mix_noise",
    "resample",
    "select_channels",
    "write_recording",
    "__version__",
]
