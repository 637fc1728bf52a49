"""Source-signal synthesis: glottal pulse train shaped by formant resonators.

Each command id selects a fixed syllable template (count, relative
lengths, accents); each take perturbs timing and pitch through its own
seed, so repeated takes of one command are similar but not identical.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from airbone.audio_io import VOLUMES
from airbone.synth.geometry import seed_for
from airbone.synth.profile import SpeakerProfile

SYNTH_RATES = (96000,)


def _resonator_coeffs(freq: float, bw: float, rate: int):
    """Two-pole resonator (unit peak gain near the center frequency)."""
    r = np.exp(-np.pi * bw / rate)
    theta = 2.0 * np.pi * freq / rate
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    peak = (1.0 - r) * np.sqrt(1.0 - 2.0 * r * np.cos(2.0 * theta) + r * r)
    return [peak], a


def _command_template(command_id: int):
    """Syllable layout shared by all takes of one command."""
    rng = np.random.default_rng(seed_for("command-template", command_id))
    n_syll = int(rng.integers(4, 9))
    lengths = rng.uniform(0.7, 1.3, n_syll)
    gaps = rng.uniform(0.25, 0.55, n_syll)        # relative to syllable length
    accents = rng.uniform(0.6, 1.0, n_syll)
    tilt = rng.uniform(-0.3, 0.3)                 # pitch drift over the utterance
    return n_syll, lengths, gaps, accents, tilt


def _envelope(n: int, rate: int, command_id: int, rng) -> np.ndarray:
    """Syllable amplitude envelope in [floor, 1] with smooth attack/decay."""
    n_syll, lengths, gaps, accents, _ = _command_template(command_id)
    lengths = lengths * rng.uniform(0.9, 1.1, n_syll)
    unit = n / float(np.sum(lengths * (1.0 + gaps)))
    env = np.full(n, 0.01)                        # -40 dB inter-syllable floor
    pos = 0.0
    for k in range(n_syll):
        syl = int(lengths[k] * unit)
        gap = int(lengths[k] * gaps[k] * unit)
        s, e = int(pos), min(int(pos) + syl, n)
        if e > s:
            # steep onset/offset so few frames straddle syllable edges
            t = np.linspace(0.0, np.pi, e - s)
            env[s:e] = np.maximum(env[s:e], accents[k] * np.sin(t) ** 0.35)
        pos += syl + gap
    return env


def _pulse_train(n: int, rate: int, f0: float, tilt: float, rng) -> np.ndarray:
    """Jittered glottal excitation with a gentle spectral rolloff."""
    exc = np.zeros(n)
    t = 0.0
    phase = 0.0
    while True:
        f = f0 * (1.0 + tilt * (t / (n / rate) - 0.5)) * rng.uniform(0.98, 1.02)
        period = rate / f
        phase += period
        idx = int(round(phase))
        if idx >= n:
            break
        exc[idx] = rng.uniform(0.85, 1.0)
        t = phase / rate
    # One-pole smoothing approximates the glottal -12 dB/oct rolloff.
    rolloff = np.exp(-2.0 * np.pi * 900.0 / rate)
    exc = lfilter([1.0 - rolloff], [1.0, -rolloff], exc)
    return lfilter([1.0 - rolloff], [1.0, -rolloff], exc)


def synth_utterance(profile: SpeakerProfile, command_id: int, volume: str,
                    rate: int, seed: int = 0,
                    duration_range: tuple[float, float] = (1.5, 3.0),
                    ) -> np.ndarray:
    """Render one command utterance as a mono source signal.

    Deterministic in (profile, command_id, volume, seed). RMS is set
    exactly to the profile's level for the volume class.
    """
    if rate not in SYNTH_RATES:
        raise ValueError(f"synthesis supports rates {SYNTH_RATES}, got {rate}")
    if volume not in VOLUMES:
        raise ValueError(f"unknown volume class {volume!r}")
    rng = np.random.default_rng(
        seed_for("utterance", profile.seed, command_id, volume, seed))
    duration = rng.uniform(*duration_range)
    n = int(duration * rate)
    _, _, _, _, tilt = _command_template(command_id)

    voiced = _pulse_train(n, rate, profile.f0_hz, tilt, rng)
    # Aspiration noise fills the envelope between harmonics; it also keeps
    # inter-channel coherence measurable away from harmonic bins.
    noise = rng.standard_normal(n) * 0.15 * float(np.std(voiced))
    exc = voiced + noise
    out = exc
    for freq, bw in zip(profile.formants_hz, profile.bandwidths_hz):
        b, a = _resonator_coeffs(freq, bw, rate)
        out = out + lfilter(b, a, exc) * 4.0
    out = np.diff(out, prepend=0.0)               # lip radiation: +6 dB/oct
    out *= _envelope(n, rate, command_id, rng)

    target_rms = 10.0 ** (profile.level_db[volume] / 20.0)
    rms = float(np.sqrt(np.mean(out ** 2)))
    if rms > 0:
        out *= target_rms / rms
    return out.astype(np.float64)
