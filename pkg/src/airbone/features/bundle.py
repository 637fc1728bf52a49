"""Per-utterance feature bundles: extraction, substitution, binary cache format.

A bundle carries the four feature streams on one shared frame grid:
air-channel mel spectrograms, bone-channel mel spectrograms, and the
time-delay / energy-decrease matrices over the air subset.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from airbone.audio_io import (
    AIR,
    BONE,
    REFERENCE_CHANNEL,
    MultichannelRecording,
    UtteranceEntry,
)
from airbone.features.energy import EnergyDecreaseMatrix
from airbone.features.framing import FrameGrid
from airbone.features.melspec import MelSpec
from airbone.features.tdoa import (
    COHERENCE_FLOOR,
    DEFAULT_MAX_LAG_S,
    PHAT_FMAX,
    PHAT_FMIN,
    TimeDelayMatrix,
)
from airbone.features.vad import detect_voice_activity

_MAGIC = b"ABFB"
_VERSION = 1


class BundleFormatError(Exception):
    """Raised for unreadable or mismatched bundle cache files."""


@dataclass(frozen=True)
class ExtractConfig:
    """Everything that determines a bundle's numeric content."""

    frame_s: float = 0.025
    hop_s: float = 0.010
    ac_channels: tuple | None = None      # None -> every air channel
    bc_channels: tuple | None = None      # None -> every bone channel
    n_mels_ac: int = 64
    fmin_ac: float = 50.0
    fmax_ac: float = 8000.0
    n_mels_bc: int = 32
    fmin_bc: float = 20.0
    fmax_bc: float = 2000.0
    max_lag_s: float = DEFAULT_MAX_LAG_S
    coherence_floor: float = COHERENCE_FLOOR
    phat_fmin: float = PHAT_FMIN
    phat_fmax: float = PHAT_FMAX
    vad: bool = True
    reference_channel: int | None = None  # None -> stock reference if present

    def fmax_ac_at(self, rate: int) -> float:
        return min(self.fmax_ac, rate / 2.0)

    def fmax_bc_at(self, rate: int) -> float:
        return min(self.fmax_bc, rate / 2.0)

    def fingerprint(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class FeatureBundle:
    ac_mels: list[MelSpec]
    bc_mels: list[MelSpec]
    tdm: TimeDelayMatrix
    edm: EnergyDecreaseMatrix
    channel_subset: list[int]             # air channel indices in the recording
    bc_subset: list[int]
    sample_rate: int
    frame_s: float
    hop_s: float
    meta: UtteranceEntry | None = None
    config_fingerprint: str = ""

    def __post_init__(self):
        frames = {m.n_frames for m in self.ac_mels}
        frames |= {m.n_frames for m in self.bc_mels}
        frames |= {self.tdm.n_frames, self.edm.n_frames}
        if len(frames) != 1:
            raise ValueError(f"feature streams disagree on frame count: {frames}")

    @property
    def n_frames(self) -> int:
        return self.tdm.n_frames

    def ac_stack(self) -> np.ndarray:
        return np.stack([m.values for m in self.ac_mels])

    def bc_stack(self) -> np.ndarray:
        return np.stack([m.values for m in self.bc_mels])

    def crop(self, n_frames: int) -> "FeatureBundle":
        """First n_frames of every stream (shared-grid invariant kept)."""
        if not 1 <= n_frames <= self.n_frames:
            raise ValueError(f"cannot crop to {n_frames} of {self.n_frames}")
        return FeatureBundle(
            ac_mels=[replace(m, values=m.values[:, :n_frames]) for m in self.ac_mels],
            bc_mels=[replace(m, values=m.values[:, :n_frames]) for m in self.bc_mels],
            tdm=TimeDelayMatrix(self.tdm.tau[:, :, :n_frames],
                                self.tdm.coherence[:, :, :n_frames],
                                self.tdm.max_lag_s),
            edm=EnergyDecreaseMatrix(self.edm.delta_db[:, :, :n_frames]),
            channel_subset=list(self.channel_subset),
            bc_subset=list(self.bc_subset),
            sample_rate=self.sample_rate, frame_s=self.frame_s, hop_s=self.hop_s,
            meta=self.meta, config_fingerprint=self.config_fingerprint)


def _resolve_channels(rec: MultichannelRecording, config: ExtractConfig):
    if not rec.channel_map:
        raise ValueError("recording carries no channel map")
    air = rec.air_indices()
    bone = rec.bone_indices()
    ac = list(config.ac_channels) if config.ac_channels is not None else air
    bc = list(config.bc_channels) if config.bc_channels is not None else bone
    for c in ac:
        if c not in air:
            raise ValueError(f"configured air channel {c} absent from channel map")
    for c in bc:
        if c not in bone:
            raise ValueError(f"configured bone channel {c} absent from channel map")
    if config.reference_channel is not None:
        ref = config.reference_channel
        if ref not in air:
            raise ValueError(f"reference channel {ref} is not an air channel")
    else:
        ref = REFERENCE_CHANNEL if REFERENCE_CHANNEL in air else ac[0]
    return ac, bc, ref


def extract_bundle(rec: MultichannelRecording, config: ExtractConfig = ExtractConfig(),
                   meta: UtteranceEntry | None = None) -> FeatureBundle:
    """Voice-activity trim, then all four feature streams on one grid.

    Each channel is framed and transformed once; the same spectra feed the
    mel banks and the pairwise correlations.
    """
    import scipy.fft

    from airbone.features.energy import ENERGY_EPS, EnergyDecreaseMatrix
    from airbone.features.framing import windowed_frames
    from airbone.features.melspec import mel_from_power
    from airbone.features.tdoa import _corr_nfft, tdm_from_spectra

    ac, bc, ref = _resolve_channels(rec, config)
    if config.vad:
        start, end = detect_voice_activity(rec, ref)
        trimmed = MultichannelRecording(rec.samples[:, start:end],
                                        rec.sample_rate, list(rec.channel_map))
    else:
        trimmed = rec
    rate = rec.sample_rate
    grid = FrameGrid.for_signal(trimmed.n_samples, rate, config.frame_s,
                                config.hop_s)
    n_lags = int(round(config.max_lag_s * rate))
    if n_lags < 1 or grid.frame_len < 2 * n_lags:
        raise ValueError("frame too short for the configured max_lag")
    nfft = _corr_nfft(grid.frame_len, n_lags)

    frames = {c: windowed_frames(trimmed.samples[c], grid)
              for c in dict.fromkeys(ac + bc)}
    spectra = {c: scipy.fft.rfft(frames[c], nfft) for c in frames}

    ac_mels = [
        mel_from_power(np.abs(spectra[c]) ** 2, nfft, rate, config.n_mels_ac,
                       config.fmin_ac, config.fmax_ac_at(rate), channel_index=c)
        for c in ac
    ]
    bc_mels = [
        mel_from_power(np.abs(spectra[c]) ** 2, nfft, rate, config.n_mels_bc,
                       config.fmin_bc, config.fmax_bc_at(rate), channel_index=c)
        for c in bc
    ]
    tdm = tdm_from_spectra([spectra[c] for c in ac], rate, nfft,
                           config.max_lag_s, config.coherence_floor,
                           config.phat_fmin, config.phat_fmax)
    e_db = 10.0 * np.log10(np.stack(
        [np.mean(frames[c] ** 2, axis=1) for c in ac]) + ENERGY_EPS)
    edm = EnergyDecreaseMatrix(e_db[:, None, :] - e_db[None, :, :])
    return FeatureBundle(ac_mels, bc_mels, tdm, edm, ac, bc, rate,
                         config.frame_s, config.hop_s, meta,
                         config.fingerprint())


def substitute_ac_features(attack_bundle: FeatureBundle,
                           genuine_bundle: FeatureBundle) -> FeatureBundle:
    """Attack bundle whose air-mel stream is replaced by the genuine one.

    Models an attacker who replays a perfect copy of the airborne
    voiceprint: bone and sound-field streams stay from the attack.
    """
    if attack_bundle.channel_subset != genuine_bundle.channel_subset or \
       attack_bundle.bc_subset != genuine_bundle.bc_subset:
        raise ValueError("bundles use incompatible channel subsets")
    if attack_bundle.sample_rate != genuine_bundle.sample_rate:
        raise ValueError("bundles use different sample rates")
    n = min(attack_bundle.n_frames, genuine_bundle.n_frames)
    atk = attack_bundle.crop(n)
    gen = genuine_bundle.crop(n)
    meta = atk.meta
    if meta is not None and meta.label == "attack":
        meta = replace(meta, attack_type="ac_substitution")
    return FeatureBundle(
        ac_mels=[replace(m, values=m.values.copy()) for m in gen.ac_mels],
        bc_mels=atk.bc_mels, tdm=atk.tdm, edm=atk.edm,
        channel_subset=atk.channel_subset, bc_subset=atk.bc_subset,
        sample_rate=atk.sample_rate, frame_s=atk.frame_s, hop_s=atk.hop_s,
        meta=meta, config_fingerprint=atk.config_fingerprint)


def save_bundle(bundle: FeatureBundle, path) -> None:
    """Versioned binary container: JSON header + float32 payloads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = [
        ("ac_mels", bundle.ac_stack()),
        ("bc_mels", bundle.bc_stack()),
        ("tau", bundle.tdm.tau),
        ("coherence", bundle.tdm.coherence),
        ("edm", bundle.edm.delta_db),
    ]
    header = {
        "sample_rate": bundle.sample_rate,
        "frame_s": bundle.frame_s,
        "hop_s": bundle.hop_s,
        "channel_subset": list(bundle.channel_subset),
        "bc_subset": list(bundle.bc_subset),
        "max_lag_s": bundle.tdm.max_lag_s,
        "config_fingerprint": bundle.config_fingerprint,
        "meta": None if bundle.meta is None else dataclasses.asdict(bundle.meta),
        "ac": [{"channel_index": m.channel_index, "n_mels": m.n_mels,
                "fmin": m.fmin, "fmax": m.fmax} for m in bundle.ac_mels],
        "bc": [{"channel_index": m.channel_index, "n_mels": m.n_mels,
                "fmin": m.fmin, "fmax": m.fmax} for m in bundle.bc_mels],
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=np.float32).tobytes())


def load_bundle(path) -> FeatureBundle:
    path = Path(path)
    try:
        raw = path.read_bytes()
        if raw[:4] != _MAGIC:
            raise BundleFormatError(f"{path}: not a feature bundle")
        version, hlen = struct.unpack("<II", raw[4:12])
        if version != _VERSION:
            raise BundleFormatError(f"{path}: unsupported version {version}")
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
        offset = 12 + hlen
        data = {}
        for spec in header["arrays"]:
            count = int(np.prod(spec["shape"]))
            arr = np.frombuffer(raw, dtype=np.float32, count=count,
                                offset=offset).reshape(spec["shape"])
            data[spec["name"]] = arr.astype(np.float64)
            offset += count * 4
        if offset != len(raw):
            raise BundleFormatError(f"{path}: trailing or missing payload bytes")
    except (struct.error, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"{path}: corrupt bundle: {exc}") from exc
    meta = None
    if header["meta"] is not None:
        meta = UtteranceEntry(**header["meta"])
    ac = [MelSpec(data["ac_mels"][i], d["n_mels"], d["fmin"], d["fmax"],
                  d["channel_index"]) for i, d in enumerate(header["ac"])]
    bc = [MelSpec(data["bc_mels"][i], d["n_mels"], d["fmin"], d["fmax"],
                  d["channel_index"]) for i, d in enumerate(header["bc"])]
    tdm = TimeDelayMatrix(data["tau"], data["coherence"], header["max_lag_s"])
    edm = EnergyDecreaseMatrix(data["edm"])
    return FeatureBundle(ac, bc, tdm, edm, header["channel_subset"],
                         header["bc_subset"], header["sample_rate"],
                         header["frame_s"], header["hop_s"], meta,
                         header.get("config_fingerprint", ""))
