"""Network parameters, initialization, and the embedding forward/backward."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from airbone.features.bundle import FeatureBundle
from airbone.net import layers
from airbone.net.arch import Architecture, build_inputs

PARAMS_VERSION = 1


@dataclass
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = float(np.linalg.norm(self.values))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {n} not within 1e-6 of 1")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class NetworkParams:
    arch: Architecture
    tensors: dict = field(default_factory=dict)
    rng_seed: int = 0
    version: int = PARAMS_VERSION

    def fingerprint(self) -> str:
        h = hashlib.sha256(self.arch.to_json().encode())
        for name in sorted(self.tensors):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.tensors[name]).tobytes())
        return h.hexdigest()[:16]

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch,
                             {k: v.copy() for k, v in self.tensors.items()},
                             self.rng_seed, self.version)

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


def _param_specs(arch: Architecture):
    """(name, shape, fan_in) in a fixed order (init and IO rely on it)."""
    specs = []
    for stream in ("ac_mel", "bc_mel"):
        if stream not in arch.streams:
            continue
        c_in = arch.ac_channels if stream == "ac_mel" else arch.bc_channels
        for k, c_out in enumerate(arch.conv_channels):
            specs.append((f"{stream}_conv{k}_w", (c_out, c_in, 3, 3), c_in * 9))
            specs.append((f"{stream}_conv{k}_b", (c_out,), 0))
            c_in = c_out
    for stream in ("tdm", "edm"):
        if stream not in arch.streams:
            continue
        in_dim = arch.matrix_in_dim(stream)
        p = arch.matrix_proj
        specs.append((f"{stream}_proj_w", (p, in_dim), in_dim))
        specs.append((f"{stream}_proj_b", (p,), 0))
        specs.append((f"{stream}_conv_w", (p, p, 3), p * 3))
        specs.append((f"{stream}_conv_b", (p,), 0))
    specs.append(("fc_w", (arch.embed_dim, arch.concat_dim()), arch.concat_dim()))
    specs.append(("fc_b", (arch.embed_dim,), 0))
    if arch.n_classes > 0:
        specs.append(("head_w", (arch.n_classes, arch.embed_dim), arch.embed_dim))
    return specs


def init_network(arch: Architecture, seed: int = 0) -> NetworkParams:
    """Fan-in-scaled uniform init: U(-a, a) with a = sqrt(6/fan_in), so the
    weight variance is 2/fan_in. Biases start at zero."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape, fan_in in _param_specs(arch):
        if fan_in == 0:
            tensors[name] = np.zeros(shape, dtype=arch.np_dtype)
        else:
            a = np.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-a, a, size=shape).astype(arch.np_dtype)
    return NetworkParams(arch, tensors, rng_seed=seed)


def _mel_stream_forward(params, stream, x):
    t = params.tensors
    caches = []
    h, c0 = layers.instance_norm_forward(x, (2, 3))
    caches.append(c0)
    for k in range(len(params.arch.conv_channels)):
        h, c1 = layers.conv2d_forward(h, t[f"{stream}_conv{k}_w"],
                                      t[f"{stream}_conv{k}_b"])
        h, c2 = layers.relu_forward(h)
        h, c3 = layers.avgpool2d_forward(h)
        caches.append((c1, c2, c3))
    h, c4 = layers.global_mean_forward(h, (2, 3))
    caches.append(c4)
    return h, caches


def _mel_stream_backward(params, stream, caches, gout):
    grads = {}
    g = layers.global_mean_backward(caches[-1], gout)
    for k in reversed(range(len(params.arch.conv_channels))):
        c1, c2, c3 = caches[k + 1]
        g = layers.avgpool2d_backward(c3, g)
        g = layers.relu_backward(c2, g)
        g, gw, gb = layers.conv2d_backward(c1, g)
        grads[f"{stream}_conv{k}_w"] = gw
        grads[f"{stream}_conv{k}_b"] = gb
    g = layers.instance_norm_backward(caches[0], g)
    return g, grads


def _matrix_stream_forward(params, stream, x):
    t = params.tensors
    h, c1 = layers.framewise_linear_forward(x, t[f"{stream}_proj_w"],
                                            t[f"{stream}_proj_b"])
    h, c2 = layers.relu_forward(h)
    h, c3 = layers.conv1d_forward(h, t[f"{stream}_conv_w"], t[f"{stream}_conv_b"])
    h, c4 = layers.relu_forward(h)
    h, c5 = layers.global_mean_forward(h, (2,))
    return h, (c1, c2, c3, c4, c5)


def _matrix_stream_backward(params, stream, caches, gout):
    c1, c2, c3, c4, c5 = caches
    grads = {}
    g = layers.global_mean_backward(c5, gout)
    g = layers.relu_backward(c4, g)
    g, gw, gb = layers.conv1d_backward(c3, g)
    grads[f"{stream}_conv_w"] = gw
    grads[f"{stream}_conv_b"] = gb
    g = layers.relu_backward(c2, g)
    g, gw, gb = layers.framewise_linear_backward(c1, g)
    grads[f"{stream}_proj_w"] = gw
    grads[f"{stream}_proj_b"] = gb
    return g, grads


def forward_batch(params: NetworkParams, inputs: dict, want_cache: bool = False):
    """Batched embedding forward over assembled stream tensors."""
    arch = params.arch
    pooled = []
    caches = {}
    for stream in arch.streams:
        x = inputs[stream]
        if stream in ("ac_mel", "bc_mel"):
            h, c = _mel_stream_forward(params, stream, x)
        else:
            h, c = _matrix_stream_forward(params, stream, x)
        pooled.append(h)
        caches[stream] = c
    concat = np.concatenate(pooled, axis=1)
    z, c_fc = layers.linear_forward(concat, params.tensors["fc_w"],
                                    params.tensors["fc_b"])
    emb, c_norm = layers.l2norm_forward(z)
    if not want_cache:
        return emb, None
    caches["_fc"] = c_fc
    caches["_norm"] = c_norm
    caches["_split"] = np.cumsum([p.shape[1] for p in pooled])[:-1]
    return emb, caches


def backward_batch(params: NetworkParams, caches, g_emb):
    """Gradients of all parameters given dL/d(embedding)."""
    arch = params.arch
    grads = {}
    g = layers.l2norm_backward(caches["_norm"], g_emb)
    g, gw, gb = layers.linear_backward(caches["_fc"], g)
    grads["fc_w"] = gw
    grads["fc_b"] = gb
    pieces = np.split(g, caches["_split"], axis=1)
    for stream, piece in zip(arch.streams, pieces):
        if stream in ("ac_mel", "bc_mel"):
            _, sg = _mel_stream_backward(params, stream, caches[stream], piece)
        else:
            _, sg = _matrix_stream_backward(params, stream, caches[stream], piece)
        grads.update(sg)
    return grads


def forward(params: NetworkParams, bundle: FeatureBundle) -> EmbeddingVector:
    """Unit-norm embedding of one bundle (full length, deterministic)."""
    inputs = build_inputs(params.arch, [bundle], n_frames=bundle.n_frames)
    emb, _ = forward_batch(params, inputs)
    return EmbeddingVector(emb[0])


def embed_bundles(params: NetworkParams, bundles, crop_frames: int | None = None,
                  batch_size: int = 64) -> np.ndarray:
    """[N, D] embeddings; with crop_frames set, center-crops for batching."""
    out = np.empty((len(bundles), params.arch.embed_dim))
    if crop_frames is None:
        for i, b in enumerate(bundles):
            out[i] = forward(params, b).values
        return out
    for lo in range(0, len(bundles), batch_size):
        chunk = bundles[lo:lo + batch_size]
        starts = [max(0, (b.n_frames - crop_frames) // 2) for b in chunk]
        inputs = build_inputs(params.arch, chunk, n_frames=crop_frames,
                              starts=starts)
        emb, _ = forward_batch(params, inputs)
        out[lo:lo + len(chunk)] = emb
    return out
