"""Frame grids shared by every feature stream of an utterance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_FRAME_S = 0.025
DEFAULT_HOP_S = 0.010


def next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


@dataclass(frozen=True)
class FrameGrid:
    frame_len: int
    hop: int
    n_frames: int
    window: str = "hann"

    def __post_init__(self):
        if not self.frame_len > self.hop > 0:
            raise ValueError(f"need frame_len > hop > 0, got "
                             f"{self.frame_len}/{self.hop}")
        if self.n_frames < 1:
            raise ValueError("signal shorter than one frame")

    @classmethod
    def for_signal(cls, n_samples: int, rate: int,
                   frame_s: float = DEFAULT_FRAME_S,
                   hop_s: float = DEFAULT_HOP_S,
                   window: str = "hann") -> "FrameGrid":
        frame_len = int(round(frame_s * rate))
        hop = int(round(hop_s * rate))
        n_frames = 1 + (n_samples - frame_len) // hop if n_samples >= frame_len else 0
        return cls(frame_len, hop, n_frames, window)

    def window_values(self) -> np.ndarray:
        if self.window == "hann":
            return np.hanning(self.frame_len)
        if self.window == "rect":
            return np.ones(self.frame_len)
        raise ValueError(f"unknown window {self.window!r}")


def windowed_frames(x: np.ndarray, grid: FrameGrid) -> np.ndarray:
    """[n_frames, frame_len] windowed frames of a 1-D signal."""
    frames = sliding_window_view(x, grid.frame_len)[::grid.hop][:grid.n_frames]
    return frames * grid.window_values()
