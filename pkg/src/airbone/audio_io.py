"""Multichannel recording I/O, resampling, gain, noise mixing and manifests.

Recordings are float arrays of shape [channels, samples] at full scale
+-1.0. Files are RIFF/WAVE with 32-bit float samples, which round-trips
losslessly and keeps feature tests free of quantization effects.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin

AIR = "air"
BONE = "bone"

VOLUMES = ("soft", "medium", "loud")
LABELS = ("genuine", "attack")
ATTACK_TYPES = (
    "wearer_sim",
    "replay_pos1",
    "replay_pos2",
    "replay_pos3",
    "replay_pos4",
    "replay_pos5",
    "replay_pos6",
    "ac_substitution",
)

SUPPORTED_RATES = (96000, 16000)

# Mixing / SNR measurements use this channel unless told otherwise.
REFERENCE_CHANNEL = 6


class AudioIOError(Exception):
    """Raised for unreadable, malformed or mismatched audio files."""


class ManifestError(Exception):
    """Raised for schema violations in dataset manifests."""


@dataclass(frozen=True)
class ChannelRole:
    """One microphone: its index, conduction kind, and head-frame position.

    Positions are meters in a head-centered frame: origin at the nose
    bridge, +x right, +y up, +z forward.
    """

    index: int
    kind: str
    position: tuple[float, float, float]
    label: str = ""

    def __post_init__(self):
        if self.kind not in (AIR, BONE):
            raise ValueError(f"unknown channel kind {self.kind!r}")


def default_channel_map() -> list[ChannelRole]:
    """The stock 16-channel layout: 14 air mics on the frame, 2 bone mics
    at the nose pads. Frame footprint 167.0 mm wide, 145.3 mm deep."""
    half = 0.0835
    spec = [
        (AIR, (0.0, 0.0, 0.020), "nose_bridge"),
        (AIR, (-0.045, -0.020, 0.022), "left_rim_lower"),
        (AIR, (0.045, -0.020, 0.022), "right_rim_lower"),
        (AIR, (-0.045, 0.022, 0.022), "left_rim_upper"),
        (AIR, (0.045, 0.022, 0.022), "right_rim_upper"),
        (AIR, (-half, 0.010, 0.015), "left_hinge"),
        (AIR, (half, 0.010, 0.015), "right_hinge"),
        (AIR, (-half, 0.005, -0.020), "left_temple_front"),
        (AIR, (half, 0.005, -0.020), "right_temple_front"),
        (AIR, (-half, 0.002, -0.080), "left_temple_rear"),
        (AIR, (half, 0.002, -0.080), "right_temple_rear"),
        (AIR, (-half, -0.005, -0.123), "left_ear"),
        (AIR, (half, -0.005, -0.123), "right_ear"),
        (AIR, (0.0, 0.018, 0.020), "nose_bridge_top"),
        (BONE, (-0.012, -0.012, 0.016), "left_nose_pad"),
        (BONE, (0.012, -0.012, 0.016), "right_nose_pad"),
    ]
    return [ChannelRole(i, k, p, lbl) for i, (k, p, lbl) in enumerate(spec)]


# Named AC-channel subsets mimicking commercial form factors.
LAYOUTS = {
    "3ch": (0, 7, 8),
    "5ch": (0, 7, 8, 11, 12),
    "full": tuple(range(14)),
}


@dataclass
class MultichannelRecording:
    """Synchronized multichannel samples plus rate and channel roles."""

    samples: np.ndarray  # [channels, n_samples], linear amplitude
    sample_rate: int
    channel_map: list[ChannelRole] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.channel_map and len(self.channel_map) != self.samples.shape[0]:
            raise AudioIOError(
                f"channel_map has {len(self.channel_map)} roles for "
                f"{self.samples.shape[0]} channels"
            )

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate

    def air_indices(self) -> list[int]:
        return [r.index for r in self.channel_map if r.kind == AIR]

    def bone_indices(self) -> list[int]:
        return [r.index for r in self.channel_map if r.kind == BONE]


@dataclass(frozen=True)
class UtteranceEntry:
    """One manifest row describing a recorded utterance."""

    path: str
    user_id: str
    session: int
    command_id: int
    volume: str
    take: int
    label: str
    sample_rate: int
    attack_type: str | None = None

    def validate(self) -> None:
        if self.volume not in VOLUMES:
            raise ManifestError(f"bad volume {self.volume!r}")
        if self.label not in LABELS:
            raise ManifestError(f"bad label {self.label!r}")
        if not 1 <= self.command_id <= 15:
            raise ManifestError(f"command_id {self.command_id} outside 1..15")
        if self.take < 1:
            raise ManifestError(f"take {self.take} must be >= 1")
        if self.label == "attack":
            if self.attack_type is None:
                raise ManifestError("attack entry missing attack_type")
            if self.attack_type not in ATTACK_TYPES:
                raise ManifestError(f"unknown attack_type {self.attack_type!r}")
        elif self.attack_type is not None:
            raise ManifestError("genuine entry carries attack_type")

    def key(self) -> tuple:
        # Identity used for duplicate rejection.
        return (self.user_id, self.session, self.command_id, self.volume,
                self.take, self.label, self.attack_type)


def load_recording(path, expected_channel_map: list[ChannelRole] | None = None,
                   ) -> MultichannelRecording:
    """Load a float/PCM WAV as a normalized multichannel recording.

    Integer PCM is scaled by 2^(bits-1) to +-1.0 full scale; float data
    passes through untouched.
    """
    path = Path(path)
    if not path.exists():
        raise AudioIOError(f"no such file: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except Exception as exc:
        raise AudioIOError(f"unreadable wav {path}: {exc}") from exc
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.T.astype(np.float64)
    elif data.dtype == np.int16:
        samples = data.T.astype(np.float64) / 2.0 ** 15
    elif data.dtype == np.int32:
        samples = data.T.astype(np.float64) / 2.0 ** 31
    elif data.dtype == np.uint8:
        samples = (data.T.astype(np.float64) - 128.0) / 128.0
    else:
        raise AudioIOError(f"unsupported sample format {data.dtype} in {path}")
    if rate not in SUPPORTED_RATES:
        raise AudioIOError(f"unsupported sample rate {rate} in {path}")
    if expected_channel_map is not None:
        if samples.shape[0] != len(expected_channel_map):
            raise AudioIOError(
                f"{path}: expected {len(expected_channel_map)} channels, "
                f"file has {samples.shape[0]}"
            )
        channel_map = list(expected_channel_map)
    else:
        channel_map = []
    return MultichannelRecording(samples, int(rate), channel_map)


def write_recording(rec: MultichannelRecording, path) -> None:
    """Write as interleaved float32 WAV (lossless round trip)."""
    if rec.n_samples == 0 or rec.n_channels == 0:
        raise AudioIOError("refusing to write empty recording")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), rec.sample_rate,
                  np.ascontiguousarray(rec.samples.T, dtype=np.float32))


def select_channels(rec: MultichannelRecording, indices) -> MultichannelRecording:
    """Keep the given channels, renumbering roles to 0..len-1."""
    indices = list(indices)
    bad = [i for i in indices if not 0 <= i < rec.n_channels]
    if bad:
        raise AudioIOError(f"channel indices {bad} out of range")
    roles = []
    for new_idx, old_idx in enumerate(indices):
        if rec.channel_map:
            roles.append(replace(rec.channel_map[old_idx], index=new_idx))
    return MultichannelRecording(rec.samples[indices].copy(), rec.sample_rate, roles)


# Anti-aliasing filter: odd-length windowed sinc so the group delay is an
# integer number of samples and can be trimmed exactly. Identical filtering
# on every channel preserves inter-channel delays.
_RESAMPLE_TAPS = 65
_RESAMPLE_BETA = 8.0


def resample(rec: MultichannelRecording, target_rate_hz: int) -> MultichannelRecording:
    """Integer-factor decimation with a Kaiser low-pass below 0.45*target."""
    if target_rate_hz <= 0 or rec.sample_rate % target_rate_hz != 0:
        raise AudioIOError(
            f"target rate {target_rate_hz} does not divide {rec.sample_rate}")
    q = rec.sample_rate // target_rate_hz
    if q == 1:
        return MultichannelRecording(rec.samples.copy(), rec.sample_rate,
                                     list(rec.channel_map))
    h = firwin(_RESAMPLE_TAPS, 0.45 * target_rate_hz, fs=rec.sample_rate,
               window=("kaiser", _RESAMPLE_BETA))
    delay = (_RESAMPLE_TAPS - 1) // 2
    n = rec.n_samples
    out_len = n // q
    out = np.empty((rec.n_channels, out_len), dtype=np.float64)
    for c in range(rec.n_channels):
        y = np.convolve(rec.samples[c], h)[delay:delay + n]
        out[c] = y[: out_len * q : q]
    return MultichannelRecording(out, target_rate_hz, list(rec.channel_map))


def apply_gain(rec: MultichannelRecording, gain_db: float) -> MultichannelRecording:
    """Scale every channel by 10^(gain_db/20). No clipping (float domain)."""
    if not math.isfinite(gain_db):
        raise ValueError(f"gain_db must be finite, got {gain_db}")
    factor = 10.0 ** (gain_db / 20.0)
    return MultichannelRecording(rec.samples * factor, rec.sample_rate,
                                 list(rec.channel_map))


def _loop_noise(noise: np.ndarray, n: int, fade: int) -> np.ndarray:
    """Tile noise to n samples, joining copies with an equal-power crossfade."""
    if noise.shape[1] >= n:
        return noise[:, :n]
    fade = min(fade, noise.shape[1] // 2)
    theta = 0.5 * np.pi * np.arange(fade) / max(fade, 1)
    w_out, w_in = np.cos(theta), np.sin(theta)
    out = noise.copy()
    while out.shape[1] < n:
        head = noise.copy()
        if fade > 0:
            out[:, -fade:] = out[:, -fade:] * w_out + head[:, :fade] * w_in
            head = head[:, fade:]
        out = np.concatenate([out, head], axis=1)
    return out[:, :n]


def mix_noise(signal: MultichannelRecording, noise: MultichannelRecording,
              target_snr_db: float,
              reference_channel_index: int = REFERENCE_CHANNEL,
              ) -> MultichannelRecording:
    """Add noise scaled by one global factor so the reference channel hits
    the target SNR (mean-square powers over the whole utterance)."""
    if noise.n_channels != signal.n_channels:
        raise AudioIOError(
            f"noise has {noise.n_channels} channels, signal {signal.n_channels}")
    if noise.sample_rate != signal.sample_rate:
        raise AudioIOError("noise/signal sample rates differ")
    if not 0 <= reference_channel_index < signal.n_channels:
        raise AudioIOError(f"reference channel {reference_channel_index} out of range")
    fade = int(round(0.05 * signal.sample_rate))
    seg = _loop_noise(noise.samples, signal.n_samples, fade)
    p_sig = float(np.mean(signal.samples[reference_channel_index] ** 2))
    p_noise = float(np.mean(seg[reference_channel_index] ** 2))
    if p_noise == 0.0:
        raise AudioIOError("noise is silent on the reference channel")
    alpha = math.sqrt(p_sig / (p_noise * 10.0 ** (target_snr_db / 10.0)))
    return MultichannelRecording(signal.samples + alpha * seg,
                                 signal.sample_rate, list(signal.channel_map))


_MANIFEST_KEYS = {"path", "user_id", "session", "command_id", "volume",
                  "take", "label", "sample_rate", "attack_type"}
_MANIFEST_REQUIRED = _MANIFEST_KEYS - {"attack_type"}


def load_manifest(path) -> list[UtteranceEntry]:
    """Parse a line-delimited JSON manifest, rejecting unknown keys and
    duplicate utterance identities."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"no such manifest: {path}")
    entries: list[UtteranceEntry] = []
    seen: set[tuple] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise ManifestError(f"{path}:{lineno}: record is not an object")
            unknown = set(rec) - _MANIFEST_KEYS
            if unknown:
                raise ManifestError(f"{path}:{lineno}: unknown keys {sorted(unknown)}")
            missing = _MANIFEST_REQUIRED - set(rec)
            if missing:
                raise ManifestError(f"{path}:{lineno}: missing keys {sorted(missing)}")
            try:
                entry = UtteranceEntry(
                    path=str(rec["path"]),
                    user_id=str(rec["user_id"]),
                    session=int(rec["session"]),
                    command_id=int(rec["command_id"]),
                    volume=str(rec["volume"]),
                    take=int(rec["take"]),
                    label=str(rec["label"]),
                    sample_rate=int(rec["sample_rate"]),
                    attack_type=rec.get("attack_type"),
                )
                entry.validate()
            except (ManifestError, TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if entry.key() in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate entry {entry.key()}")
            seen.add(entry.key())
            entries.append(entry)
    return entries


def write_manifest(entries: list[UtteranceEntry], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            rec = {
                "path": e.path, "user_id": e.user_id, "session": e.session,
                "command_id": e.command_id, "volume": e.volume, "take": e.take,
                "label": e.label, "sample_rate": e.sample_rate,
            }
            if e.attack_type is not None:
                rec["attack_type"] = e.attack_type
            fh.write(json.dumps(rec) + "\n")
