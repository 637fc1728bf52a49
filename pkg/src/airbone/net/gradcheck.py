"""Analytic-vs-finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from airbone.net.loss import loss_and_grad
from airbone.net.model import NetworkParams

FD_STEP = 1e-5
_DENOM_FLOOR = 1e-5


def gradient_check(params: NetworkParams, batch_bundles=None, labels=None,
                   fraction: float = 0.01, min_per_tensor: int = 2,
                   step: float = FD_STEP, seed: int = 0,
                   inputs: dict | None = None, margin: float = 0.2,
                   scale: float = 30.0) -> float:
    """Worst relative error between analytic gradients and central
    differences over a random coordinate subset. Double precision only."""
    if params.arch.dtype != "float64":
        raise ValueError("gradient checks need a float64 architecture")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)

    def compute_loss():
        loss, grads, _ = loss_and_grad(params, batch_bundles, labels,
                                       inputs=inputs, margin=margin, scale=scale)
        return loss, grads

    _, grads = compute_loss()
    worst = 0.0
    for name in sorted(params.tensors):
        tensor = params.tensors[name]
        flat = tensor.reshape(-1)
        gflat = grads[name].reshape(-1)
        n_pick = max(min_per_tensor, int(fraction * flat.size))
        coords = rng.choice(flat.size, size=min(n_pick, flat.size), replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            lp, _, _ = loss_and_grad(params, batch_bundles, labels, inputs=inputs,
                                     margin=margin, scale=scale)
            flat[c] = orig - step
            lm, _, _ = loss_and_grad(params, batch_bundles, labels, inputs=inputs,
                                     margin=margin, scale=scale)
            flat[c] = orig
            fd = (lp - lm) / (2.0 * step)
            denom = max(abs(gflat[c]), abs(fd), _DENOM_FLOOR)
            worst = max(worst, abs(gflat[c] - fd) / denom)
    return worst
