"""Geometric model of the glasses prototype: mic positions, mouth, speed of sound."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from airbone.audio_io import AIR, BONE, ChannelRole, default_channel_map

SPEED_OF_SOUND = 343.0

# Default articulation point, meters in the head frame (below and forward
# of the nose bridge).
DEFAULT_MOUTH = (0.0, -0.08, 0.10)

# Loudspeaker placements for replay attacks: front near/far, rear, left,
# right, front-above. Distances are plausible defaults; override per config.
REPLAY_POSITIONS = {
    "replay_pos1": (0.0, 0.0, 0.5),
    "replay_pos2": (0.0, 0.0, 1.5),
    "replay_pos3": (0.0, 0.0, -1.0),
    "replay_pos4": (-1.0, 0.0, 0.0),
    "replay_pos5": (1.0, 0.0, 0.0),
    "replay_pos6": (0.0, 0.8, 0.6),
}


def seed_for(*parts) -> int:
    """Stable 63-bit sub-seed derived from arbitrary key parts."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big") >> 1


@dataclass
class GeometryModel:
    """Mic layout plus mouth position and speed of sound."""

    channel_map: list[ChannelRole] = field(default_factory=default_channel_map)
    mouth: tuple[float, float, float] = DEFAULT_MOUTH
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        air = [r for r in self.channel_map if r.kind == AIR]
        pos = np.array([r.position for r in air])
        for i in range(len(air)):
            d = np.linalg.norm(pos - pos[i], axis=1)
            if d.max() > 0.25:
                raise ValueError("air mic pair separation exceeds 0.25 m")
        if not (self.mouth[1] < 0 and self.mouth[2] > 0):
            raise ValueError("mouth must sit below and forward of the nose bridge")

    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.channel_map], dtype=np.float64)

    def distances(self, source_position) -> np.ndarray:
        """Euclidean distance from a source point to every mic."""
        src = np.asarray(source_position, dtype=np.float64)
        return np.linalg.norm(self.positions() - src, axis=1)

    def delays_s(self, source_position) -> np.ndarray:
        return self.distances(source_position) / self.speed_of_sound

    def air_indices(self) -> list[int]:
        return [r.index for r in self.channel_map if r.kind == AIR]

    def bone_indices(self) -> list[int]:
        return [r.index for r in self.channel_map if r.kind == BONE]

    def with_mic_jitter(self, jitter_m: float, seed: int) -> "GeometryModel":
        """Perturb every mic position by uniform +-jitter_m per axis.

        Models wearing-position variation between sessions.
        """
        if jitter_m == 0.0:
            return self
        rng = np.random.default_rng(seed)
        roles = []
        for r in self.channel_map:
            dp = rng.uniform(-jitter_m, jitter_m, size=3)
            roles.append(replace(r, position=tuple(np.asarray(r.position) + dp)))
        return GeometryModel(roles, self.mouth, self.speed_of_sound)


def default_geometry() -> GeometryModel:
    return GeometryModel()
