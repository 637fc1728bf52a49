"""Time-difference-of-arrival estimation and the pairwise time-delay matrix.

Delays come from phase-transform-weighted generalized cross-correlation
restricted to a speech band (whitening over sensor-noise-only bins would
wash out the peak), refined to sub-sample precision by parabolic
interpolation. The matrix is antisymmetric with a zero diagonal by
construction; entries whose correlation peak is weak are zeroed and the
peak value kept as a per-entry coherence plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from airbone.audio_io import AIR, MultichannelRecording
from airbone.features.framing import FrameGrid, windowed_frames

PHAT_FMIN = 50.0
PHAT_FMAX = 8000.0
COHERENCE_FLOOR = 0.3
DEFAULT_MAX_LAG_S = 0.001


@dataclass
class TimeDelayMatrix:
    tau: np.ndarray          # [M, M, F] seconds, antisymmetric
    coherence: np.ndarray    # [M, M, F] in [0, 1]
    max_lag_s: float

    @property
    def n_channels(self) -> int:
        return self.tau.shape[0]

    @property
    def n_frames(self) -> int:
        return self.tau.shape[2]

    def validate(self) -> None:
        if not np.array_equal(self.tau, -self.tau.transpose(1, 0, 2)):
            raise ValueError("time-delay matrix is not antisymmetric")
        if np.abs(self.tau).max() > self.max_lag_s:
            raise ValueError("delay exceeds max_lag")


def _corr_nfft(frame_len: int, n_lags: int) -> int:
    return scipy.fft.next_fast_len(frame_len + n_lags + 1, real=True)


def _band_bins(nfft: int, rate: int, fmin: float, fmax: float) -> np.ndarray:
    freqs = np.arange(1, (nfft + 1) // 2) * rate / nfft   # no DC, no Nyquist
    keep = (freqs >= fmin) & (freqs <= min(fmax, rate / 2))
    return np.flatnonzero(keep) + 1


def _phat_cc(Xi: np.ndarray, Xj: np.ndarray, nfft: int, bins: np.ndarray,
             n_lags: int) -> np.ndarray:
    """Band-limited PHAT cross-correlation, normalized so that identical
    inputs give exactly 1.0 at zero lag. Last axis: lags -L..L."""
    R = np.conj(Xi[..., bins]) * Xj[..., bins]
    mag = np.abs(R)
    W = np.zeros(Xi.shape[:-1] + (nfft // 2 + 1,), dtype=R.dtype)
    with np.errstate(invalid="ignore"):
        W[..., bins] = np.where(mag > 0, R / np.maximum(mag, 1e-30), 0)
    c = scipy.fft.irfft(W, nfft)
    scale = nfft / (2.0 * bins.shape[0])
    return np.concatenate([c[..., -n_lags:], c[..., :n_lags + 1]],
                          axis=-1) * scale


def _refine_peaks(cc: np.ndarray, n_lags: int):
    """Vectorized argmax + parabolic refinement over the last axis.

    Returns (delay_samples, coherence) with the leading shape of cc.
    """
    k = np.argmax(cc, axis=-1)
    y0 = np.take_along_axis(cc, k[..., None], axis=-1)[..., 0]
    km = np.clip(k - 1, 0, cc.shape[-1] - 1)
    kp = np.clip(k + 1, 0, cc.shape[-1] - 1)
    ym = np.take_along_axis(cc, km[..., None], axis=-1)[..., 0]
    yp = np.take_along_axis(cc, kp[..., None], axis=-1)[..., 0]
    denom = ym - 2.0 * y0 + yp
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(np.abs(denom) > 1e-20, 0.5 * (ym - yp) / denom, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    interior = (k > 0) & (k < cc.shape[-1] - 1)
    delta = np.where(interior, delta, 0.0)
    delay = np.clip(k - n_lags + delta, -n_lags, n_lags)
    coherence = np.clip(y0, 0.0, 1.0)
    return delay, coherence


def gcc_phat(x_frame: np.ndarray, y_frame: np.ndarray, rate: int,
             max_lag_s: float = DEFAULT_MAX_LAG_S, fmin: float = PHAT_FMIN,
             fmax: float = PHAT_FMAX) -> tuple[float, float]:
    """Delay of y relative to x in seconds (positive: y lags, x arrives
    first), plus the normalized correlation peak in [0, 1]."""
    x = np.asarray(x_frame, dtype=np.float64)
    y = np.asarray(y_frame, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("frames must be 1-D and the same length")
    if x.shape[0] < 256:
        raise ValueError("frames must be >= 256 samples")
    n_lags = int(round(max_lag_s * rate))
    if n_lags < 1 or x.shape[0] < 2 * n_lags:
        raise ValueError(f"frame of {x.shape[0]} too short for max_lag "
                         f"{max_lag_s}s at {rate} Hz")
    nfft = _corr_nfft(x.shape[0], n_lags)
    bins = _band_bins(nfft, rate, fmin, fmax)
    X = scipy.fft.rfft(x, nfft)
    Y = scipy.fft.rfft(y, nfft)
    cc = _phat_cc(X, Y, nfft, bins, n_lags)
    delay, coherence = _refine_peaks(cc, n_lags)
    return float(delay) / rate, float(coherence)


def tdm_from_spectra(spectra, rate: int, nfft: int, max_lag_s: float,
                     coherence_floor: float = COHERENCE_FLOOR,
                     fmin: float = PHAT_FMIN, fmax: float = PHAT_FMAX,
                     ) -> TimeDelayMatrix:
    """TDM from per-channel frame spectra (list of [F, nfft//2+1]).

    Spectra are taken in float32 (the phase-transform peak location is
    insensitive to precision and single-precision transforms halve cost).
    """
    n_lags = int(round(max_lag_s * rate))
    bins = _band_bins(nfft, rate, fmin, fmax)
    spectra = [np.ascontiguousarray(s, dtype=np.complex64) for s in spectra]
    m = len(spectra)
    f = spectra[0].shape[0]
    tau = np.zeros((m, m, f))
    coh = np.zeros((m, m, f))
    coh[np.arange(m), np.arange(m), :] = 1.0
    for i in range(m):
        for j in range(i + 1, m):
            cc = _phat_cc(spectra[i], spectra[j], nfft, bins, n_lags)
            delay, c = _refine_peaks(cc, n_lags)
            delay = np.where(c >= coherence_floor, delay, 0.0)
            # tau_ij = (d_i - d_j)/c: negative of "j lags i" from gcc_phat
            t = -delay.astype(np.float64) / rate
            tau[i, j] = t
            tau[j, i] = -t
            coh[i, j] = c
            coh[j, i] = c
    return TimeDelayMatrix(tau, coh, max_lag_s)


def time_delay_matrix(rec: MultichannelRecording, channel_subset,
                      frame_grid: FrameGrid | None = None,
                      max_lag_s: float = DEFAULT_MAX_LAG_S,
                      coherence_floor: float = COHERENCE_FLOOR,
                      fmin: float = PHAT_FMIN, fmax: float = PHAT_FMAX,
                      ) -> TimeDelayMatrix:
    """Per-frame pairwise delays across an air-channel subset."""
    subset = list(channel_subset)
    if len(subset) < 2:
        raise ValueError("need at least 2 channels for a time-delay matrix")
    if rec.channel_map:
        for c in subset:
            if rec.channel_map[c].kind != AIR:
                raise ValueError(f"channel {c} is not an air-conduction mic")
    if frame_grid is None:
        frame_grid = FrameGrid.for_signal(rec.n_samples, rec.sample_rate)
    n_lags = int(round(max_lag_s * rec.sample_rate))
    if n_lags < 1 or frame_grid.frame_len < 2 * n_lags:
        raise ValueError("frame too short for requested max_lag")
    nfft = _corr_nfft(frame_grid.frame_len, n_lags)
    spectra = [
        scipy.fft.rfft(windowed_frames(
            rec.samples[c], frame_grid).astype(np.float32), nfft)
        for c in subset
    ]
    return tdm_from_spectra(spectra, rec.sample_rate, nfft, max_lag_s,
                            coherence_floor, fmin, fmax)
