"""Mini-batch momentum SGD with amplitude augmentation and probe-EER
checkpoint selection.

Augmentation happens in feature space: a uniform audio gain shifts mel
streams by the same dB and leaves the delay/energy matrices untouched, so
each training instance is (bundle, random gain offset). Every eval_every
epochs a held-in enroll/verify probe EER is computed and the checkpoint
with the lowest probe EER is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from airbone.net.arch import STREAMS, Architecture, build_inputs
from airbone.net.loss import loss_and_grad
from airbone.net.model import NetworkParams, embed_bundles, init_network
from airbone.synth.geometry import seed_for

VOLUME_ORDER = {"soft": 0, "medium": 1, "loud": 2}


@dataclass
class TrainConfig:
    epochs: int = 50
    eval_every: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    margin: float = 0.2
    margin_warmup_frac: float = 0.25   # fraction of epochs at margin 0
    scale: float = 30.0
    augmentation_count: int = 10
    gain_range_db: tuple = (-12.0, 6.0)
    crop_frames: int = 120
    rng_seed: int = 0
    streams: tuple = STREAMS
    conv_channels: tuple = (16, 32, 64)
    matrix_proj: int = 64
    embed_dim: int = 128
    dtype: str = "float64"
    probe_per_user: int = 4

    def __post_init__(self):
        if not self.epochs >= self.eval_every >= 1:
            raise ValueError("need epochs >= eval_every >= 1")


def _bundle_sort_key(bundle, idx):
    m = bundle.meta
    if m is None:
        return (0, 0, 0, idx, "")
    return (m.command_id, VOLUME_ORDER.get(m.volume, 9), m.take, m.session, m.path)


def _probe_split(bundles, labels, per_user):
    """Enrollment = first bundle per (user, command); probes = a few of the
    rest. Used only for checkpoint selection (no held-out validation set)."""
    by_user = {}
    for i, lab in enumerate(labels):
        by_user.setdefault(lab, []).append(i)
    enroll, probe = {}, {}
    for user, idxs in by_user.items():
        idxs = sorted(idxs, key=lambda i: _bundle_sort_key(bundles[i], i))
        seen_cmd = set()
        e, rest = [], []
        for i in idxs:
            m = bundles[i].meta
            cmd = m.command_id if m is not None else None
            if cmd not in seen_cmd:
                seen_cmd.add(cmd)
                e.append(i)
            else:
                rest.append(i)
        enroll[user] = e
        probe[user] = rest[:per_user] if rest else list(e)
    return enroll, probe


def _probe_eer(params, bundles, enroll, probe, crop):
    # local import: the eval package itself drives training runs
    from airbone.evalharness.metrics import compute_eer
    users = sorted(enroll)
    templates = {}
    for u in users:
        embs = embed_bundles(params, [bundles[i] for i in enroll[u]],
                             crop_frames=crop)
        t = embs.mean(axis=0)
        templates[u] = t / max(np.linalg.norm(t), 1e-12)
    genuine, impostor = [], []
    for u in users:
        embs = embed_bundles(params, [bundles[i] for i in probe[u]],
                             crop_frames=crop)
        for e in embs:
            for v in users:
                score = float(e @ templates[v])
                (genuine if v == u else impostor).append(score)
    eer, _ = compute_eer(genuine, impostor)
    return eer


def _diversify_batches(order, labels, batch_size):
    """Ensure no batch is single-label by swapping in a differing instance."""
    order = list(order)
    n = len(order)
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        batch_labels = {labels[i] for i, _ in order[lo:hi]}
        if len(batch_labels) >= 2 or hi - lo < 2:
            continue
        only = next(iter(batch_labels))
        for j in range(hi, n):
            if labels[order[j][0]] != only:
                order[hi - 1], order[j] = order[j], order[hi - 1]
                break
        else:
            for j in range(0, lo):
                if labels[order[j][0]] != only:
                    order[hi - 1], order[j] = order[j], order[hi - 1]
                    break
    return order


def train(dataset_bundles, labels, config: TrainConfig = TrainConfig()):
    """Returns (best_params, history).

    `labels` are per-bundle user ids (strings). History carries one entry
    per epoch plus a probe-EER record for every evaluation epoch.
    """
    if len(dataset_bundles) != len(labels):
        raise ValueError("bundles and labels differ in length")
    users = sorted(set(labels))
    if len(users) < 2:
        raise ValueError("training needs at least 2 speakers")
    class_of = {u: i for i, u in enumerate(users)}
    y = np.array([class_of[lab] for lab in labels], dtype=np.int64)

    arch = Architecture.for_bundle(
        dataset_bundles[0], streams=config.streams,
        conv_channels=config.conv_channels, matrix_proj=config.matrix_proj,
        embed_dim=config.embed_dim, n_classes=len(users), dtype=config.dtype)
    params = init_network(arch, seed=config.rng_seed)
    velocity = params.zeros_like()

    enroll, probe = _probe_split(dataset_bundles, labels, config.probe_per_user)
    history = {"entries": [], "selected_epoch": 0, "best_probe_eer": None,
               "n_classes": len(users), "users": users}
    best = params.copy()
    best_eer = np.inf

    n = len(dataset_bundles)
    warmup = int(round(config.margin_warmup_frac * config.epochs))
    for epoch in range(1, config.epochs + 1):
        # angular margin needs a softmax-trained start to bite; cold-start
        # margins stall on a high-loss plateau
        margin = 0.0 if epoch <= warmup else config.margin
        rng = np.random.default_rng(seed_for("train-epoch", config.rng_seed, epoch))
        gains = rng.uniform(config.gain_range_db[0], config.gain_range_db[1],
                            size=(n, config.augmentation_count))
        instances = [(i, gains[i, a]) for i in range(n)
                     for a in range(config.augmentation_count)]
        perm = rng.permutation(len(instances))
        order = _diversify_batches([instances[p] for p in perm], y,
                                   config.batch_size)

        losses = []
        for lo in range(0, len(order), config.batch_size):
            chunk = order[lo:lo + config.batch_size]
            if len(chunk) < 2:
                continue
            idxs = [i for i, _ in chunk]
            batch = [dataset_bundles[i] for i in idxs]
            starts = [int(rng.integers(0, max(b.n_frames - config.crop_frames, 0)
                                       + 1)) for b in batch]
            loss, grads, _ = loss_and_grad(
                params, batch, y[idxs], gain_offsets_db=[g for _, g in chunk],
                n_frames=config.crop_frames, starts=starts,
                margin=margin, scale=config.scale)
            losses.append(loss)
            for name, g in grads.items():
                v = velocity[name]
                v *= config.momentum
                v -= config.learning_rate * g
                params.tensors[name] += v

        entry = {"epoch": epoch, "mean_loss": float(np.mean(losses))}
        if epoch % config.eval_every == 0:
            eer = _probe_eer(params, dataset_bundles, enroll, probe,
                             config.crop_frames)
            entry["probe_eer"] = eer
            if eer < best_eer:
                best_eer = eer
                best = params.copy()
                history["selected_epoch"] = epoch
        history["entries"].append(entry)

    history["best_probe_eer"] = None if np.isinf(best_eer) else float(best_eer)
    if np.isinf(best_eer):   # no eval epoch hit: return the final state
        best = params
        history["selected_epoch"] = config.epochs
    return best, history
