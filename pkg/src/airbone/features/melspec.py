"""Log-mel spectrograms with an exact -100 dB floor.

The dB values are 10*log10(max(power, 1e-10)), so silence lands exactly on
the floor and a uniform input gain shifts every unfloored value by exactly
the gain in dB — the identity train-time amplitude augmentation relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from airbone.features.framing import FrameGrid, windowed_frames

DB_FLOOR = -100.0
_POWER_FLOOR = 10.0 ** (DB_FLOOR / 10.0)


@dataclass
class MelSpec:
    values: np.ndarray          # [n_mels, n_frames], dB
    n_mels: int
    fmin: float
    fmax: float
    channel_index: int = -1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("mel spectrogram contains non-finite values")

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, nfft: int, rate: int, fmin: float,
                   fmax: float) -> np.ndarray:
    """Triangular filters on the mel scale, [n_mels, nfft//2 + 1]."""
    if fmax > rate / 2:
        raise ValueError(f"fmax {fmax} above Nyquist {rate / 2}")
    if n_mels < 8:
        raise ValueError("n_mels must be >= 8")
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(nfft // 2 + 1) * rate / nfft
    fb = np.zeros((n_mels, freqs.shape[0]))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def band_centers(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2))
    return edges[1:-1]


def power_to_db(mel_power: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(mel_power, _POWER_FLOOR))


def mel_from_power(power_spec: np.ndarray, nfft: int, rate: int, n_mels: int,
                   fmin: float, fmax: float, channel_index: int = -1) -> MelSpec:
    """Mel dB values from a precomputed [F, bins] power spectrum."""
    fb = mel_filterbank(n_mels, nfft, rate, fmin, fmax)
    values = power_to_db(power_spec @ fb.T).T               # [n_mels, F]
    return MelSpec(values, n_mels, fmin, fmax, channel_index)


def mel_spectrogram(channel_samples: np.ndarray, rate: int, n_mels: int = 64,
                    fmin: float = 50.0, fmax: float = 8000.0,
                    frame_s: float = 0.025, hop_s: float = 0.010,
                    grid: FrameGrid | None = None, nfft: int | None = None,
                    channel_index: int = -1) -> MelSpec:
    """Window -> magnitude-squared DFT -> triangular mel bank -> dB."""
    x = np.asarray(channel_samples, dtype=np.float64)
    if grid is None:
        grid = FrameGrid.for_signal(x.shape[0], rate, frame_s, hop_s)
    frames = windowed_frames(x, grid)
    if nfft is None:
        nfft = scipy.fft.next_fast_len(grid.frame_len, real=True)
    spec = np.abs(scipy.fft.rfft(frames, nfft)) ** 2        # [F, bins]
    return mel_from_power(spec, nfft, rate, n_mels, fmin, fmax, channel_index)
