"""Dataset generation: genuine renders, attack renders, manifests, sidecars.

Every file is derived from a sub-seed keyed on the dataset seed and the
entry identity, so generation is bit-deterministic and embarrassingly
parallel without losing reproducibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from airbone.audio_io import (
    REFERENCE_CHANNEL,
    MultichannelRecording,
    UtteranceEntry,
    write_manifest,
    write_recording,
)
from airbone.synth.geometry import (
    REPLAY_POSITIONS,
    GeometryModel,
    default_geometry,
    seed_for,
)
from airbone.synth.profile import SpeakerProfile, synth_speaker_profile
from airbone.synth.render import ScenarioSpec, render_scene, scene_ground_truth
from airbone.synth.voice import synth_utterance

PAD_S = 0.15  # leading/trailing room so voice-activity trimming has work to do
SENSOR_NOISE_FLOOR_DB = -50.0


@dataclass
class AttackPlan:
    """Which attacks to render, and from which subset of genuine sources."""

    kind: str                                  # wearer_sim | replay
    volumes: tuple | None = None               # None -> all
    takes: tuple | None = None
    commands: tuple | None = None
    positions: dict = field(default_factory=lambda: dict(REPLAY_POSITIONS))

    def wants(self, command_id: int, volume: str, take: int) -> bool:
        if self.volumes is not None and volume not in self.volumes:
            return False
        if self.takes is not None and take not in self.takes:
            return False
        if self.commands is not None and command_id not in self.commands:
            return False
        return True


def _pad(signal: np.ndarray, rate: int) -> np.ndarray:
    pad = np.zeros(int(PAD_S * rate))
    return np.concatenate([pad, signal, pad])


def _balanced_source(captured: np.ndarray, target_ref_rms: float,
                     geo: GeometryModel, source_position) -> np.ndarray:
    """Pre-scale the replayed audio so the reference mic receives it at the
    genuine level (the attacker balances the loudspeaker volume)."""
    from airbone.synth.render import AMP_REF
    d_ref = float(np.linalg.norm(
        np.asarray(geo.channel_map[REFERENCE_CHANNEL].position)
        - np.asarray(source_position, dtype=np.float64)))
    rms = float(np.sqrt(np.mean(captured ** 2)))
    if rms <= 0:
        return captured
    return captured * (target_ref_rms * d_ref / AMP_REF / rms)


def _render_speaker(task) -> list:
    (spk_idx, profile, base_geometry, command_ids, volumes, take_ids,
     scenarios, out_dir, seed, rate, duration_range, session,
     mic_jitter_m) = task
    audio_dir = Path(out_dir) / "audio"
    truth_dir = Path(out_dir) / "truth"
    user_id = f"u{spk_idx:02d}"
    # Each user wears the device their own way in each session.
    geo = base_geometry.with_mic_jitter(
        mic_jitter_m, seed_for("wearing", seed, session, user_id))
    entries = []
    for cmd in command_ids:
        for vol in volumes:
            for take in take_ids:
                key = (user_id, session, cmd, vol, take)
                stem = f"{user_id}_s{session}_c{cmd:02d}_{vol}_t{take}"
                src = _pad(synth_utterance(
                    profile, cmd, vol, rate,
                    seed=seed_for("take", seed, *key),
                    duration_range=duration_range), rate)
                scen = ScenarioSpec("genuine")
                rec = render_scene(src, geo, profile, scen, rate,
                                   seed=seed_for("scene", seed, *key))
                wav = audio_dir / f"{stem}.wav"
                write_recording(rec, wav)
                _write_truth(truth_dir / f"{stem}.json", geo, profile, scen)
                entries.append(UtteranceEntry(
                    path=str(wav), user_id=user_id, session=session,
                    command_id=cmd, volume=vol, take=take, label="genuine",
                    sample_rate=rate))
                ref_rms = float(np.sqrt(np.mean(
                    rec.samples[REFERENCE_CHANNEL] ** 2)))
                captured = rec.samples[REFERENCE_CHANNEL].copy()
                for plan in scenarios:
                    if not plan.wants(cmd, vol, take):
                        continue
                    entries.extend(_render_attacks(
                        plan, captured, ref_rms, geo, profile, rate,
                        seed, key, stem, audio_dir, truth_dir, None))
    return entries


def generate_dataset(n_speakers: int, commands, volumes, takes, scenarios,
                     out_dir, seed: int, rate: int = 96000,
                     duration_range: tuple[float, float] = (1.5, 3.0),
                     session: int = 1, mic_jitter_m: float = 0.0,
                     geometry: GeometryModel | None = None,
                     progress=None, jobs: int = 1) -> Path:
    """Render a labeled synthetic dataset and return the manifest path.

    `commands` may be an int (1..n) or an iterable of command ids; same for
    `takes`. `scenarios` is a list of AttackPlan (genuine data is always
    rendered). Session 2+ should pass mic_jitter_m to model re-wearing.
    Every file derives from its own sub-seed, so jobs > 1 renders speakers
    in parallel with bit-identical output.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    (out_dir / "truth").mkdir(parents=True, exist_ok=True)
    base_geometry = geometry or default_geometry()

    command_ids = list(range(1, commands + 1)) if isinstance(commands, int) \
        else list(commands)
    take_ids = list(range(1, takes + 1)) if isinstance(takes, int) else list(takes)
    volumes = list(volumes)
    tasks = [
        (i, synth_speaker_profile(seed_for("profile", seed, i)), base_geometry,
         command_ids, volumes, take_ids, scenarios, out_dir, seed, rate,
         duration_range, session, mic_jitter_m)
        for i in range(n_speakers)
    ]
    if jobs > 1 and n_speakers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_speaker = list(pool.map(_render_speaker, tasks))
    else:
        per_speaker = [_render_speaker(t) for t in tasks]

    entries: list[UtteranceEntry] = []
    for chunk in per_speaker:
        entries.extend(chunk)
        if progress:
            for e in chunk:
                progress(e)
    manifest = out_dir / "manifest.jsonl"
    write_manifest(entries, manifest)
    return manifest


def _render_attacks(plan, captured, ref_rms, geo, profile, rate, seed, key,
                    stem, audio_dir, truth_dir, progress):
    """Render attack variants of one genuine utterance.

    Attacks replay the captured reference-channel audio (what an attacker
    could realistically record), volume-balanced to the genuine level.
    """
    user_id, session, cmd, vol, take = key
    out = []
    if plan.kind == "wearer_sim":
        variants = [("wearer_sim", ScenarioSpec("wearer_sim"))]
    elif plan.kind == "replay":
        variants = [(name, ScenarioSpec("replay", source_position=pos))
                    for name, pos in sorted(plan.positions.items())]
    else:
        raise ValueError(f"unknown attack kind {plan.kind!r}")
    for attack_type, scen in variants:
        pos = scen.source_position if scen.kind == "replay" else geo.mouth
        src = _balanced_source(captured, ref_rms, geo, pos)
        rec = render_scene(src, geo, profile, scen, rate,
                           seed=seed_for("attack", seed, attack_type, *key))
        wav = audio_dir / f"{stem}_{attack_type}.wav"
        write_recording(rec, wav)
        _write_truth(truth_dir / f"{stem}_{attack_type}.json", geo, profile, scen)
        out.append(UtteranceEntry(
            path=str(wav), user_id=user_id, session=session, command_id=cmd,
            volume=vol, take=take, label="attack", attack_type=attack_type,
            sample_rate=rate))
        if progress:
            progress(out[-1])
    return out


def _write_truth(path: Path, geo, profile, scen) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_ground_truth(geo, profile, scen), fh, indent=1)


def generate_noise_recording(duration_s: float, rate: int, seed: int,
                             n_sources: int = 8,
                             geometry: GeometryModel | None = None,
                             ) -> MultichannelRecording:
    """Diffuse babble: several far talkers rendered through the array.

    Used for SNR sweeps; multichannel structure matches the device layout
    so the noise field is spatially plausible.
    """
    geo = geometry or default_geometry()
    rng = np.random.default_rng(seed_for("noise", seed))
    n = int(duration_s * rate)
    total = None
    for s in range(n_sources):
        profile = synth_speaker_profile(seed_for("noise-voice", seed, s))
        chunks = []
        while sum(c.shape[0] for c in chunks) < n:
            chunks.append(synth_utterance(
                profile, int(rng.integers(1, 16)), "medium", rate,
                seed=seed_for("noise-utt", seed, s, len(chunks)),
                duration_range=(1.0, 2.0)))
        src = np.concatenate(chunks)[:n]
        az = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(2.0, 3.0)
        pos = (dist * np.sin(az), rng.uniform(-0.3, 0.3), dist * np.cos(az))
        scen = ScenarioSpec("replay", source_position=pos)
        rec = render_scene(src, geo, profile, scen, rate,
                           seed=seed_for("noise-scene", seed, s),
                           sensor_noise_db=-120.0)
        total = rec.samples if total is None else total + rec.samples
    sigma = 10.0 ** (SENSOR_NOISE_FLOOR_DB / 20.0)
    total += rng.standard_normal(total.shape) * sigma
    return MultichannelRecording(total, rate, list(geo.channel_map))
