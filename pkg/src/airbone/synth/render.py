"""Scene rendering: propagate a source to every mic with exact delays/gains.

Air channels get a windowed-sinc fractional delay of d/c and inverse
distance amplitude, so the geometric ground truth (delay and level
differences) is known analytically per render. Bone channels follow the
scenario: the wearer's tissue filter, a generic simulator filter, or a
heavily attenuated air leak for replay sources.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from airbone.audio_io import AIR, BONE, MultichannelRecording
from airbone.synth.geometry import GeometryModel, seed_for
from airbone.synth.profile import SpeakerProfile

# Amplitude at distance d is AMP_REF/d (times the source signal).
AMP_REF = 0.05
SENSOR_NOISE_DB = -60.0
BC_TISSUE_REL_DB = -10.0      # bone RMS relative to the nose-bridge air mic
BC_AIR_LEAK_REL_DB = -40.0    # replay leak relative to the tissue level
GENERIC_BONE_CUTOFF = 1100.0
GENERIC_BONE_RESONANCE = 2.5

_FRAC_TAPS = 32
_FRAC_BETA = 8.0
MAX_DELAY_S = 0.010

BC_MODES = ("user_transfer", "generic_transfer", "air_leak")
_KIND_TO_MODE = {"genuine": "user_transfer", "wearer_sim": "generic_transfer",
                 "replay": "air_leak"}


@dataclass
class ScenarioSpec:
    """What is emitting, from where, and how the bone channel is driven."""

    kind: str                                  # genuine | wearer_sim | replay
    source_position: tuple | None = None       # replay only; None -> mouth
    bc_mode: str | None = None

    def __post_init__(self):
        if self.kind not in _KIND_TO_MODE:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        expected = _KIND_TO_MODE[self.kind]
        if self.bc_mode is None:
            self.bc_mode = expected
        elif self.bc_mode != expected:
            raise ValueError(f"{self.kind} scenario requires bc_mode {expected}")
        if self.kind == "replay" and self.source_position is None:
            raise ValueError("replay scenario needs a source_position")


def fractional_delay(signal: np.ndarray, delay_s: float, rate: int) -> np.ndarray:
    """Delay a signal by a possibly fractional number of samples.

    Windowed-sinc interpolation (32 taps, Kaiser window); output has the
    input length with zeros shifted in at the edges.
    """
    if abs(delay_s) >= MAX_DELAY_S:
        raise ValueError(f"|delay| must be < {MAX_DELAY_S}s, got {delay_s}")
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[0]
    total = delay_s * rate
    n0 = int(np.floor(total))
    mu = total - n0                      # [0, 1)
    center = _FRAC_TAPS // 2 - 1
    k = np.arange(_FRAC_TAPS)
    h = np.sinc(k - center - mu) * np.kaiser(_FRAC_TAPS, _FRAC_BETA)
    h /= h.sum()
    full = np.convolve(x, h)             # len n + taps - 1, delay center+mu
    shift = n0 - center                  # remaining integer alignment
    out = np.zeros(n)
    # out[t] = full[t - shift] where valid
    lo = max(0, shift)
    hi = min(n, full.shape[0] + shift)
    if hi > lo:
        out[lo:hi] = full[lo - shift:hi - shift]
    return out


def bone_filter(signal: np.ndarray, cutoff_hz: float, resonance: float,
                rate: int) -> np.ndarray:
    """Resonant second-order low-pass (RBJ biquad) modelling tissue transfer."""
    w0 = 2.0 * np.pi * cutoff_hz / rate
    alpha = np.sin(w0) / (2.0 * resonance)
    cosw = np.cos(w0)
    b = np.array([(1 - cosw) / 2, 1 - cosw, (1 - cosw) / 2])
    a = np.array([1 + alpha, -2 * cosw, 1 - alpha])
    return lfilter(b / a[0], a / a[0], signal)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x ** 2)))


def render_scene(source_signal: np.ndarray, geometry: GeometryModel,
                 profile: SpeakerProfile, scenario: ScenarioSpec, rate: int,
                 seed: int = 0, sensor_noise_db: float = SENSOR_NOISE_DB,
                 ) -> MultichannelRecording:
    """Render one scene to all channels of the geometry's layout."""
    src = np.asarray(source_signal, dtype=np.float64)
    if src.ndim != 1 or src.size == 0:
        raise ValueError("source_signal must be a non-empty 1-D array")
    if scenario.kind == "replay":
        pos = np.asarray(scenario.source_position, dtype=np.float64)
    elif scenario.kind == "genuine":
        pos = np.asarray(geometry.mouth) + np.asarray(profile.mouth_offset)
    else:  # wearer_sim: the rig's fixed mouth, no personal articulation offset
        pos = np.asarray(geometry.mouth, dtype=np.float64)

    dists = geometry.distances(pos)
    if dists.min() < 0.01:
        raise ValueError("source within 1 cm of a microphone")

    rng = np.random.default_rng(seed_for("render", seed))
    noise_sigma = 10.0 ** (sensor_noise_db / 20.0)
    n = src.shape[0]
    out = np.empty((len(geometry.channel_map), n))

    nose_idx = geometry.air_indices()[0]
    nose_clean = None
    for role in geometry.channel_map:
        i = role.index
        if role.kind == AIR:
            clean = fractional_delay(src, dists[i] / geometry.speed_of_sound,
                                     rate) * (AMP_REF / dists[i])
            if i == nose_idx:
                nose_clean = clean
            out[i] = clean
    if nose_clean is None:
        raise ValueError("geometry has no air channels")
    tissue_target = _rms(nose_clean) * 10.0 ** (BC_TISSUE_REL_DB / 20.0)

    for role in geometry.channel_map:
        i = role.index
        if role.kind != BONE:
            continue
        if scenario.bc_mode == "user_transfer":
            bc = bone_filter(src, profile.bone_cutoff_hz, profile.bone_resonance,
                             rate)
            scale = tissue_target / max(_rms(bc), 1e-30)
        elif scenario.bc_mode == "generic_transfer":
            bc = bone_filter(src, GENERIC_BONE_CUTOFF, GENERIC_BONE_RESONANCE,
                             rate)
            scale = tissue_target / max(_rms(bc), 1e-30)
        else:  # air_leak
            bc = fractional_delay(src, dists[i] / geometry.speed_of_sound,
                                  rate) * (AMP_REF / dists[i])
            leak_target = tissue_target * 10.0 ** (BC_AIR_LEAK_REL_DB / 20.0)
            scale = leak_target / max(_rms(bc), 1e-30)
        out[i] = bc * scale

    out += rng.standard_normal(out.shape) * noise_sigma
    return MultichannelRecording(out, rate, list(geometry.channel_map))


def scene_ground_truth(geometry: GeometryModel, profile: SpeakerProfile,
                       scenario: ScenarioSpec) -> dict:
    """Analytic per-mic distances and delays for a scenario (oracle data)."""
    if scenario.kind == "replay":
        pos = np.asarray(scenario.source_position, dtype=np.float64)
    elif scenario.kind == "genuine":
        pos = np.asarray(geometry.mouth) + np.asarray(profile.mouth_offset)
    else:
        pos = np.asarray(geometry.mouth, dtype=np.float64)
    dists = geometry.distances(pos)
    return {
        "scenario": scenario.kind,
        "bc_mode": scenario.bc_mode,
        "source_position": [float(v) for v in pos],
        "mic_distances_m": [float(d) for d in dists],
        "mic_delays_s": [float(d / geometry.speed_of_sound) for d in dists],
        "speed_of_sound": geometry.speed_of_sound,
    }
