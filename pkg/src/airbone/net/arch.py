"""Architecture descriptor and bundle-to-tensor input assembly.

Four parallel stream encoders feed one embedding: the air and bone mel
stacks go through three conv blocks; the time-delay and energy matrices
are flattened per frame, projected, and convolved over time. Variable
utterance length is handled by global average pooling, so the descriptor
only pins channel/band/pair counts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from airbone.features.bundle import FeatureBundle

STREAMS = ("ac_mel", "bc_mel", "tdm", "edm")

# Fixed input affine scalings (data-independent: a data-dependent
# normalization would cancel the amplitude augmentation).
MEL_OFFSET_DB = 60.0
MEL_SCALE_DB = 40.0
EDM_SCALE_DB = 20.0

MIN_FRAMES = 8


@dataclass(frozen=True)
class Architecture:
    streams: tuple = STREAMS
    ac_channels: int = 14
    ac_mels: int = 64
    bc_channels: int = 2
    bc_mels: int = 32
    pair_channels: int = 14            # M: air channels in the TDM/EDM
    conv_channels: tuple = (16, 32, 64)
    matrix_proj: int = 64
    embed_dim: int = 128
    n_classes: int = 0                 # training head; 0 = embedding only
    include_coherence: bool = True
    dtype: str = "float64"

    def __post_init__(self):
        unknown = set(self.streams) - set(STREAMS)
        if unknown:
            raise ValueError(f"unknown streams {sorted(unknown)}")
        if not self.streams:
            raise ValueError("need at least one feature stream")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32/float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def matrix_in_dim(self, stream: str) -> int:
        m2 = self.pair_channels ** 2
        if stream == "tdm" and self.include_coherence:
            return 2 * m2
        return m2

    def concat_dim(self) -> int:
        total = 0
        for s in self.streams:
            if s in ("ac_mel", "bc_mel"):
                total += self.conv_channels[-1]
            else:
                total += self.matrix_proj
        return total

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, blob: str) -> "Architecture":
        d = json.loads(blob)
        d["streams"] = tuple(d["streams"])
        d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)

    @classmethod
    def for_bundle(cls, bundle: FeatureBundle, streams=STREAMS,
                   conv_channels=(16, 32, 64), matrix_proj: int = 64,
                   embed_dim: int = 128, n_classes: int = 0,
                   dtype: str = "float64") -> "Architecture":
        return cls(
            streams=tuple(streams),
            ac_channels=len(bundle.ac_mels),
            ac_mels=bundle.ac_mels[0].n_mels if bundle.ac_mels else 0,
            bc_channels=len(bundle.bc_mels),
            bc_mels=bundle.bc_mels[0].n_mels if bundle.bc_mels else 0,
            pair_channels=bundle.tdm.n_channels,
            conv_channels=tuple(conv_channels),
            matrix_proj=matrix_proj,
            embed_dim=embed_dim,
            n_classes=n_classes,
            dtype=dtype,
        )

    def check_bundle(self, bundle: FeatureBundle) -> None:
        if "ac_mel" in self.streams:
            if len(bundle.ac_mels) != self.ac_channels or \
               bundle.ac_mels[0].n_mels != self.ac_mels:
                raise ValueError("bundle air-mel stack does not fit architecture")
        if "bc_mel" in self.streams:
            if len(bundle.bc_mels) != self.bc_channels or \
               bundle.bc_mels[0].n_mels != self.bc_mels:
                raise ValueError("bundle bone-mel stack does not fit architecture")
        if ("tdm" in self.streams or "edm" in self.streams) and \
           bundle.tdm.n_channels != self.pair_channels:
            raise ValueError("bundle pair count does not fit architecture")


def _crop_or_tile(values: np.ndarray, n_frames: int, start: int) -> np.ndarray:
    """[..., F] -> [..., n_frames], tiling short inputs."""
    have = values.shape[-1]
    if have < n_frames:
        reps = int(np.ceil(n_frames / have))
        values = np.concatenate([values] * reps, axis=-1)
        have = values.shape[-1]
    start = min(start, have - n_frames)
    return values[..., start:start + n_frames]


def build_inputs(arch: Architecture, bundles, n_frames: int | None = None,
                 starts=None, gain_offsets_db=None) -> dict:
    """Assemble a batch of bundles into scaled stream tensors.

    n_frames None means "use the common minimum" (single-bundle calls pass
    the bundle's own length). gain_offsets_db shifts the mel streams only:
    by the gain-shift identity this equals amplitude-scaling the audio.
    """
    if not bundles:
        raise ValueError("empty bundle batch")
    for b in bundles:
        arch.check_bundle(b)
    if n_frames is None:
        n_frames = min(b.n_frames for b in bundles)
    if n_frames < MIN_FRAMES:
        raise ValueError(f"need >= {MIN_FRAMES} frames, got {n_frames}")
    batch = len(bundles)
    if starts is None:
        starts = [0] * batch
    if gain_offsets_db is None:
        gain_offsets_db = [0.0] * batch
    dt = arch.np_dtype
    out = {}
    if "ac_mel" in arch.streams:
        x = np.empty((batch, arch.ac_channels, arch.ac_mels, n_frames), dtype=dt)
        for i, b in enumerate(bundles):
            v = _crop_or_tile(b.ac_stack(), n_frames, starts[i])
            x[i] = (v + gain_offsets_db[i] + MEL_OFFSET_DB) / MEL_SCALE_DB
        out["ac_mel"] = x
    if "bc_mel" in arch.streams:
        x = np.empty((batch, arch.bc_channels, arch.bc_mels, n_frames), dtype=dt)
        for i, b in enumerate(bundles):
            v = _crop_or_tile(b.bc_stack(), n_frames, starts[i])
            x[i] = (v + gain_offsets_db[i] + MEL_OFFSET_DB) / MEL_SCALE_DB
        out["bc_mel"] = x
    if "tdm" in arch.streams:
        x = np.empty((batch, arch.matrix_in_dim("tdm"), n_frames), dtype=dt)
        m2 = arch.pair_channels ** 2
        for i, b in enumerate(bundles):
            tau = _crop_or_tile(b.tdm.tau, n_frames, starts[i])
            x[i, :m2] = tau.reshape(m2, n_frames) / b.tdm.max_lag_s
            if arch.include_coherence:
                coh = _crop_or_tile(b.tdm.coherence, n_frames, starts[i])
                x[i, m2:] = coh.reshape(m2, n_frames)
        out["tdm"] = x
    if "edm" in arch.streams:
        m2 = arch.pair_channels ** 2
        x = np.empty((batch, m2, n_frames), dtype=dt)
        for i, b in enumerate(bundles):
            d = _crop_or_tile(b.edm.delta_db, n_frames, starts[i])
            x[i] = d.reshape(m2, n_frames) / EDM_SCALE_DB
        out["edm"] = x
    return out
