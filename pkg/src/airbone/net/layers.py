"""Primitive layers as (forward, backward) pairs with explicit caches."""

from __future__ import annotations

import numpy as np

from airbone import _kernels


def conv2d_forward(x, w, b):
    y = _kernels.conv2d_forward(x, w, b)
    return y, (x, w)


def conv2d_backward(cache, gout):
    x, w = cache
    return _kernels.conv2d_backward(x, w, np.ascontiguousarray(gout))


def conv1d_forward(x, w, b):
    y = _kernels.conv1d_forward(x, w, b)
    return y, (x, w)


def conv1d_backward(cache, gout):
    x, w = cache
    return _kernels.conv1d_backward(x, w, np.ascontiguousarray(gout))


def relu_forward(x):
    y = np.maximum(x, 0)
    return y, (x > 0)


def relu_backward(cache, gout):
    return gout * cache


def avgpool2d_forward(x):
    """2x2 stride-2 mean pool; odd trailing row/col dropped."""
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    if h2 < 1 or w2 < 1:
        raise ValueError(f"feature map {h}x{w} too small to pool")
    v = x[:, :, :h2 * 2, :w2 * 2].reshape(b, c, h2, 2, w2, 2)
    return v.mean(axis=(3, 5)), (h, w)


def avgpool2d_backward(cache, gout):
    h, w = cache
    b, c, h2, w2 = gout.shape
    gx = np.zeros((b, c, h, w), dtype=gout.dtype)
    g = np.repeat(np.repeat(gout, 2, axis=2), 2, axis=3) * 0.25
    gx[:, :, :h2 * 2, :w2 * 2] = g
    return gx


def global_mean_forward(x, axes):
    return x.mean(axis=axes), (x.shape, axes)


def global_mean_backward(cache, gout):
    shape, axes = cache
    scale = 1.0
    expand = list(gout.shape)
    for ax in sorted(axes):
        scale *= shape[ax]
        expand.insert(ax, 1)
    return np.broadcast_to(gout.reshape(expand) / scale, shape).astype(gout.dtype)


def instance_norm_forward(x, axes, eps=1e-5):
    """Zero-mean/unit-variance per sample (and channel) over `axes`.

    Removes the common spectral shape and any constant dB offset, which
    keeps the pooled features from collapsing to one point and makes the
    embedding invariant to uniform input gain.
    """
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv
    return y, (y, inv, axes)


def instance_norm_backward(cache, gout):
    y, inv, axes = cache
    gm = gout.mean(axis=axes, keepdims=True)
    gy = np.mean(gout * y, axis=axes, keepdims=True)
    return inv * (gout - gm - y * gy)


def linear_forward(x, w, b):
    """x[B,I] @ w[O,I].T + b."""
    return x @ w.T + b, (x, w)


def linear_backward(cache, gout):
    x, w = cache
    gx = gout @ w
    gw = gout.T @ x
    gb = gout.sum(axis=0)
    return gx, gw, gb


def framewise_linear_forward(x, w, b):
    """x[B,I,T], w[O,I] -> y[B,O,T]."""
    y = np.matmul(w, x) + b[None, :, None]
    return y, (x, w)


def framewise_linear_backward(cache, gout):
    x, w = cache
    gx = np.matmul(w.T, gout)
    gw = np.einsum("bot,bit->oi", gout, x, optimize=True)
    gb = gout.sum(axis=(0, 2))
    return gx, gw, gb


def l2norm_forward(x, eps=1e-12):
    norm = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    norm = np.maximum(norm, eps)
    y = x / norm
    return y, (y, norm)


def l2norm_backward(cache, gout):
    y, norm = cache
    dot = np.sum(y * gout, axis=1, keepdims=True)
    return (gout - y * dot) / norm
