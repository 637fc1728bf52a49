"""Energy-based voice activity detection on a reference channel."""

from __future__ import annotations

import numpy as np

from airbone.audio_io import MultichannelRecording
from airbone.features.framing import FrameGrid
from numpy.lib.stride_tricks import sliding_window_view

SNR_MARGIN_DB = 6.0
OCCUPANCY = 0.8
PAD_S = 0.100
MIN_DURATION_S = 0.2


class NoVoiceActivityError(Exception):
    """No frame rises far enough above the noise floor."""


def detect_voice_activity(rec: MultichannelRecording, reference_channel: int = 0,
                          ) -> tuple[int, int]:
    """Tightest sample window whose reference-channel energy sits above
    noise_floor + 6 dB for >= 80% of frames, padded by 100 ms.

    The floor is the 10th-percentile frame energy, so the decision is
    invariant to uniform gain.
    """
    if rec.duration_s < MIN_DURATION_S:
        raise ValueError(f"recording shorter than {MIN_DURATION_S}s")
    x = rec.samples[reference_channel]
    grid = FrameGrid.for_signal(x.shape[0], rec.sample_rate, window="rect")
    frames = sliding_window_view(x, grid.frame_len)[::grid.hop][:grid.n_frames]
    energy_db = 10.0 * np.log10(np.mean(frames ** 2, axis=1) + 1e-30)
    floor = np.percentile(energy_db, 10.0)
    voiced = energy_db >= floor + SNR_MARGIN_DB
    if not voiced.any():
        raise NoVoiceActivityError("no voiced region found")

    idx = np.flatnonzero(voiced)
    lo, hi = int(idx[0]), int(idx[-1])
    # If big interior gaps drag occupancy below target, cut at the widest
    # gap and keep the denser side.
    while voiced[lo:hi + 1].mean() < OCCUPANCY and hi > lo:
        inside = np.flatnonzero(voiced[lo:hi + 1]) + lo
        gaps = np.diff(inside)
        g = int(np.argmax(gaps))
        left, right = inside[:g + 1], inside[g + 1:]
        if voiced[left[0]:left[-1] + 1].mean() * (left[-1] - left[0] + 1) >= \
           voiced[right[0]:right[-1] + 1].mean() * (right[-1] - right[0] + 1):
            lo, hi = int(left[0]), int(left[-1])
        else:
            lo, hi = int(right[0]), int(right[-1])

    pad = int(PAD_S * rec.sample_rate)
    start = max(0, lo * grid.hop - pad)
    end = min(rec.n_samples, hi * grid.hop + grid.frame_len + pad)
    return start, end
