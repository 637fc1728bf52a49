"""Evaluation protocols: cross-user EER, attack success rates, robustness sweeps."""

from airbone.evalharness.metrics import compute_eer
from airbone.evalharness.folds import FoldSplit, kfold_split
from airbone.evalharness.report import EvalReport
from airbone.evalharness.protocol import (
    EvalContext,
    FoldArtifacts,
    run_ablation_eval,
    run_attack_eval,
    run_authentication_eval,
    run_channel_restriction_eval,
    run_cross_session_eval,
    run_downsample_eval,
    run_snr_sweep,
)

__all__ = [
    "EvalContext",
    "EvalReport",
    "FoldArtifacts",
    "FoldSplit",
    "compute_eer",
    "kfold_split",
    "run_ablation_eval",
    "run_attack_eval",
    "run_authentication_eval",
    "run_channel_restriction_eval",
    "run_cross_session_eval",
    "run_downsample_eval",
    "run_snr_sweep",
]
