"""Vectorized numpy kernels: 3x3 conv2d and 3-tap conv1d, stride 1, pad 1.

Layout is [batch, channels, ...spatial]. These lean on BLAS through
tensordot; the compiled backend implements the same contracts with direct
loops and no patch materialization.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad2d(x):
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def _pad1d(x):
    return np.pad(x, ((0, 0), (0, 0), (1, 1)))


def conv2d_forward(x, w, b):
    """x[B,C,H,W], w[K,C,3,3], b[K] -> y[B,K,H,W]."""
    xp = _pad2d(x)
    patches = sliding_window_view(xp, (3, 3), axis=(2, 3))  # B,C,H,W,3,3
    y = np.tensordot(patches, w, axes=([1, 4, 5], [1, 2, 3]))
    y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, gout):
    """Gradients of conv2d_forward w.r.t. (x, w, b) given dL/dy."""
    xp = _pad2d(x)
    patches = sliding_window_view(xp, (3, 3), axis=(2, 3))
    gw = np.tensordot(gout, patches, axes=([0, 2, 3], [0, 2, 3]))
    gb = gout.sum(axis=(0, 2, 3))
    gp = _pad2d(gout)
    gpatches = sliding_window_view(gp, (3, 3), axis=(2, 3))  # B,K,H,W,3,3
    wf = w[:, :, ::-1, ::-1]
    gx = np.tensordot(gpatches, wf, axes=([1, 4, 5], [0, 2, 3]))
    gx = np.ascontiguousarray(gx.transpose(0, 3, 1, 2))
    return gx, gw, gb


def conv1d_forward(x, w, b):
    """x[B,C,T], w[K,C,3], b[K] -> y[B,K,T]."""
    xp = _pad1d(x)
    patches = sliding_window_view(xp, 3, axis=2)             # B,C,T,3
    y = np.tensordot(patches, w, axes=([1, 3], [1, 2]))      # B,T,K
    y = np.ascontiguousarray(y.transpose(0, 2, 1))
    y += b[None, :, None]
    return y


def conv1d_backward(x, w, gout):
    xp = _pad1d(x)
    patches = sliding_window_view(xp, 3, axis=2)
    gw = np.tensordot(gout, patches, axes=([0, 2], [0, 2]))  # K,C,3
    gb = gout.sum(axis=(0, 2))
    gp = _pad1d(gout)
    gpatches = sliding_window_view(gp, 3, axis=2)            # B,K,T,3
    wf = w[:, :, ::-1]
    gx = np.tensordot(gpatches, wf, axes=([1, 3], [0, 2]))   # B,T,C
    gx = np.ascontiguousarray(gx.transpose(0, 2, 1))
    return gx, gw, gb
