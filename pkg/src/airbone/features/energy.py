"""Pairwise frame-energy ratios in dB (the spatial attenuation signature)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from airbone.audio_io import MultichannelRecording
from airbone.features.framing import FrameGrid, windowed_frames

ENERGY_EPS = 1e-12


@dataclass
class EnergyDecreaseMatrix:
    delta_db: np.ndarray     # [M, M, F], antisymmetric in dB

    @property
    def n_channels(self) -> int:
        return self.delta_db.shape[0]

    @property
    def n_frames(self) -> int:
        return self.delta_db.shape[2]

    def validate(self) -> None:
        if not np.array_equal(self.delta_db, -self.delta_db.transpose(1, 0, 2)):
            raise ValueError("energy-decrease matrix is not antisymmetric")


def frame_energies_db(rec: MultichannelRecording, channel_subset,
                      frame_grid: FrameGrid) -> np.ndarray:
    """10*log10 of windowed frame mean-square energy per channel, [M, F]."""
    e = np.stack([
        np.mean(windowed_frames(rec.samples[c], frame_grid) ** 2, axis=1)
        for c in channel_subset
    ])
    return 10.0 * np.log10(e + ENERGY_EPS)


def energy_decrease_matrix(rec: MultichannelRecording, channel_subset,
                           frame_grid: FrameGrid | None = None,
                           ) -> EnergyDecreaseMatrix:
    """delta[i,j,f] = 10*log10(E_i(f)/E_j(f)).

    Built from per-channel dB energies by broadcast subtraction, which
    makes antisymmetry and the log-ratio additivity identity exact to
    float rounding.
    """
    subset = list(channel_subset)
    if len(subset) < 2:
        raise ValueError("need at least 2 channels for an energy matrix")
    if frame_grid is None:
        frame_grid = FrameGrid.for_signal(rec.n_samples, rec.sample_rate)
    e_db = frame_energies_db(rec, subset, frame_grid)
    delta = e_db[:, None, :] - e_db[None, :, :]
    return EnergyDecreaseMatrix(delta)
