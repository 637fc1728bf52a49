"""Equal error rate from genuine/impostor score lists.

Candidate thresholds are the observed scores (plus sentinels). FAR(t) is
the impostor fraction >= t and FRR(t) the genuine fraction < t; both are
step functions, so the FAR=FRR crossing is found by linear interpolation
between adjacent candidates, ties broken toward the lower threshold.
"""

from __future__ import annotations

import numpy as np


def far_frr_at(threshold: float, genuine: np.ndarray, impostor: np.ndarray):
    far = float(np.mean(impostor >= threshold))
    frr = float(np.mean(genuine < threshold))
    return far, frr


def compute_eer(genuine_scores, impostor_scores) -> tuple[float, float]:
    """Returns (eer, threshold)."""
    genuine = np.asarray(genuine_scores, dtype=np.float64)
    impostor = np.asarray(impostor_scores, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise ValueError("need non-empty genuine and impostor score lists")

    candidates = np.unique(np.concatenate([genuine, impostor]))
    span = max(candidates[-1] - candidates[0], 1.0)
    candidates = np.concatenate([
        [candidates[0] - span], candidates, [candidates[-1] + span]])

    # Vectorized FAR/FRR over all candidates via sorted-rank counting.
    far = 1.0 - np.searchsorted(np.sort(impostor), candidates, side="left") \
        / impostor.size
    frr = np.searchsorted(np.sort(genuine), candidates, side="left") \
        / genuine.size
    diff = far - frr  # non-increasing in the threshold

    exact = np.flatnonzero(diff == 0.0)
    if exact.size:
        k = int(exact[0])  # ties toward the lower threshold
        return float(far[k]), float(candidates[k])

    k = int(np.flatnonzero(diff > 0)[-1])  # last positive before the sign change
    d1, d2 = diff[k], diff[k + 1]
    alpha = d1 / (d1 - d2)
    threshold = candidates[k] + alpha * (candidates[k + 1] - candidates[k])
    eer = far[k] + alpha * (far[k + 1] - far[k])
    return float(eer), float(threshold)
