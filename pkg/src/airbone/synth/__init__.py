"""Synthetic multichannel scene generation with exact geometric ground truth."""

from airbone.synth.geometry import GeometryModel, default_geometry, REPLAY_POSITIONS
from airbone.synth.profile import SpeakerProfile, synth_speaker_profile
from airbone.synth.voice import synth_utterance
from airbone.synth.render import ScenarioSpec, fractional_delay, render_scene
from airbone.synth.dataset import AttackPlan, generate_dataset, generate_noise_recording

__all__ = [
    "AttackPlan",
    "GeometryModel",
    "REPLAY_POSITIONS",
    "ScenarioSpec",
    "SpeakerProfile",
    "default_geometry",
    "fractional_delay",
    "generate_dataset",
    "generate_noise_recording",
    "render_scene",
    "synth_speaker_profile",
    "synth_utterance",
]
