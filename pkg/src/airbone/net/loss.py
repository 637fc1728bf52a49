"""Additive-angular-margin softmax over training speaker identities.

Embeddings stay unit-norm and the class weights are row-normalized, so
logits are cosines; the target class cosine is replaced by cos(theta + m)
(with the usual linear fallback where that stops being monotonic) and
everything is scaled by s before cross-entropy.
"""

from __future__ import annotations

import numpy as np

from airbone.net.arch import build_inputs
from airbone.net.model import NetworkParams, backward_batch, forward_batch

DEFAULT_MARGIN = 0.2
DEFAULT_SCALE = 30.0
_SIN_FLOOR = 1e-6


def aam_loss_from_embeddings(emb: np.ndarray, head_w: np.ndarray,
                             labels: np.ndarray, margin: float, scale: float):
    """Returns (loss, g_emb, g_head_w, per_sample_losses)."""
    b = emb.shape[0]
    norms = np.maximum(np.linalg.norm(head_w, axis=1, keepdims=True), 1e-12)
    w_hat = head_w / norms
    cos = emb @ w_hat.T                                     # [B, C]
    cos = np.clip(cos, -1.0, 1.0)

    cos_m, sin_m = np.cos(margin), np.sin(margin)
    th = np.cos(np.pi - margin)
    mm = np.sin(np.pi - margin) * margin

    idx = np.arange(b)
    cos_t = cos[idx, labels]
    sin_t = np.sqrt(np.clip(1.0 - cos_t ** 2, 0.0, 1.0))
    main = cos_t > th
    phi = np.where(main, cos_t * cos_m - sin_t * sin_m, cos_t - mm)

    logits = scale * cos
    logits[idx, labels] = scale * phi
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    softmax = expl / expl.sum(axis=1, keepdims=True)
    p_target = np.maximum(softmax[idx, labels], 1e-300)
    per_sample = -np.log(p_target)
    loss = float(per_sample.mean())

    # dL/dlogits, then through the margin substitution on the target cosine.
    dlogits = softmax.copy()
    dlogits[idx, labels] -= 1.0
    dlogits /= b
    dcos = dlogits * scale
    dphi_dcos = np.where(main,
                         cos_m + sin_m * cos_t / np.maximum(sin_t, _SIN_FLOOR),
                         1.0)
    dcos[idx, labels] *= dphi_dcos

    g_emb = dcos @ w_hat
    g_what = dcos.T @ emb                                   # [C, D]
    dot = np.sum(w_hat * g_what, axis=1, keepdims=True)
    g_head = (g_what - w_hat * dot) / norms
    return loss, g_emb, g_head, per_sample


def loss_and_grad(params: NetworkParams, batch_bundles, labels,
                  gain_offsets_db=None, n_frames: int | None = None,
                  starts=None, margin: float = DEFAULT_MARGIN,
                  scale: float = DEFAULT_SCALE, inputs: dict | None = None):
    """Classification loss and full parameter gradients for a batch.

    `labels` are integer class ids. Returns (loss, grads, aux) where aux
    carries per-sample losses.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if np.unique(labels).size < 2:
        raise ValueError("batch must contain at least 2 distinct labels")
    if params.arch.n_classes <= int(labels.max()):
        raise ValueError("label id outside the classification head")
    if inputs is None:
        inputs = build_inputs(params.arch, batch_bundles, n_frames=n_frames,
                              starts=starts, gain_offsets_db=gain_offsets_db)
    emb, caches = forward_batch(params, inputs, want_cache=True)
    loss, g_emb, g_head, per_sample = aam_loss_from_embeddings(
        emb, params.tensors["head_w"], labels, margin, scale)
    grads = backward_batch(params, caches, g_emb.astype(params.arch.np_dtype))
    grads["head_w"] = g_head
    aux = {"per_sample_losses": per_sample, "embeddings": emb}
    return loss, grads, aux
