"""Enrollment, cosine verification, liveness scoring, template persistence.

The flow is pre-process -> liveness -> verify: the liveness gate checks
that bone-conduction energy co-occurs and co-varies with the airborne
speech (tissue vibration cannot be injected by a loudspeaker), then the
embedding is compared against the enrolled template by cosine similarity.
"""

from __future__ import annotations

import base64
import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from airbone.audio_io import REFERENCE_CHANNEL
from airbone.features.bundle import FeatureBundle
from airbone.net.model import EmbeddingVector, NetworkParams, forward

DEFAULT_SIM_THRESHOLD = 0.62      # averaged operating point; recalibrate per fleet
DEFAULT_LIVE_THRESHOLD = 0.5
LIVENESS_MARGIN_DB = 6.0
LIVENESS_LAG_S = 0.005


class AuthError(Exception):
    """Template-store or fingerprint failures."""


@dataclass
class UserTemplate:
    user_id: str
    embedding: EmbeddingVector
    n_enroll_samples: int
    created_at: float
    model_fingerprint: str


@dataclass
class AuthDecision:
    accepted: bool
    similarity: float
    liveness: float
    threshold_sim: float
    threshold_live: float
    reason: str    # ok | low_similarity | failed_liveness

    def __post_init__(self):
        should = (self.similarity >= self.threshold_sim
                  and self.liveness >= self.threshold_live)
        if self.accepted != should:
            raise ValueError("decision inconsistent with thresholds")


def _bundle_sort_key(bundle: FeatureBundle, idx: int):
    m = bundle.meta
    if m is None:
        return (1, "", idx)
    return (0, m.path, idx)


def enroll(model_params: NetworkParams, bundles, user_id: str) -> UserTemplate:
    """Average the enrollment embeddings and renormalize.

    Bundles are summed in a canonical order (sorted by utterance path) so
    enrollment is bit-stable under input reordering.
    """
    if not bundles:
        raise ValueError("enrollment needs at least one bundle")
    ordered = [b for _, b in sorted(
        ((_bundle_sort_key(b, i), b) for i, b in enumerate(bundles)),
        key=lambda t: t[0])]
    embs = np.stack([forward(model_params, b).values for b in ordered])
    mean = embs.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm < 1e-12:
        raise ValueError("enrollment embeddings cancel out")
    return UserTemplate(
        user_id=user_id,
        embedding=EmbeddingVector(mean / norm),
        n_enroll_samples=len(bundles),
        created_at=time.time(),
        model_fingerprint=model_params.fingerprint(),
    )


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))


def _envelopes(bundle: FeatureBundle):
    """Per-frame linear power envelopes of the reference air channel and the
    first bone channel, from the mel streams."""
    if not bundle.bc_mels:
        raise ValueError("bundle has no bone-conduction stream")
    ref = None
    for m in bundle.ac_mels:
        if m.channel_index == REFERENCE_CHANNEL:
            ref = m
            break
    if ref is None:
        ref = bundle.ac_mels[0]
    ac_env = np.mean(10.0 ** (ref.values / 10.0), axis=0)
    bc_env = np.mean(10.0 ** (bundle.bc_mels[0].values / 10.0), axis=0)
    return ac_env, bc_env


def liveness_score(bundle: FeatureBundle) -> float:
    """Envelope coherence times bone-activity rate, in [0, 1].

    c_env: max normalized cross-correlation between the air and bone
    frame-energy envelopes over lags within +-5 ms. r_act: fraction of
    voiced frames whose bone energy rises 6 dB above its own floor. Both
    terms are scale-free, so uniform gain leaves the score unchanged.
    """
    ac_env, bc_env = _envelopes(bundle)
    f = ac_env.shape[0]
    if f < 4:
        raise ValueError("too few frames for a liveness score")

    ac_db = 10.0 * np.log10(np.maximum(ac_env, 1e-30))
    bc_db = 10.0 * np.log10(np.maximum(bc_env, 1e-30))
    voiced = ac_db >= np.percentile(ac_db, 10.0) + LIVENESS_MARGIN_DB
    bc_active = bc_db >= np.percentile(bc_db, 10.0) + LIVENESS_MARGIN_DB
    r_act = float(np.mean(bc_active[voiced])) if voiced.any() else 0.0

    max_lag = int(LIVENESS_LAG_S / bundle.hop_s)
    a = ac_env - ac_env.mean()
    b = bc_env - bc_env.mean()
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    c_env = 0.0
    if denom > 0:
        for lag in range(-max_lag, max_lag + 1):
            if lag >= 0:
                num = float(np.dot(a[lag:], b[:f - lag]))
            else:
                num = float(np.dot(a[:f + lag], b[-lag:]))
            c_env = max(c_env, num / denom)
    return float(np.clip(c_env, 0.0, 1.0) * np.clip(r_act, 0.0, 1.0))


def authenticate(model_params: NetworkParams, template: UserTemplate,
                 bundle: FeatureBundle,
                 threshold_sim: float = DEFAULT_SIM_THRESHOLD,
                 threshold_live: float = DEFAULT_LIVE_THRESHOLD) -> AuthDecision:
    """Liveness gate first, similarity always computed and reported."""
    if template.model_fingerprint != model_params.fingerprint():
        raise AuthError("template was enrolled with a different model")
    live = liveness_score(bundle)
    emb = forward(model_params, bundle)
    sim = cosine_similarity(emb, template.embedding)
    if live < threshold_live:
        reason = "failed_liveness"
    elif sim < threshold_sim:
        reason = "low_similarity"
    else:
        reason = "ok"
    return AuthDecision(accepted=(reason == "ok"), similarity=sim, liveness=live,
                        threshold_sim=threshold_sim, threshold_live=threshold_live,
                        reason=reason)


# --- template store: one file per user, exclusive lock for writers --------

def _template_path(store_path: Path, user_id: str) -> Path:
    safe = base64.urlsafe_b64encode(user_id.encode()).decode().rstrip("=")
    return store_path / f"{safe}.tmpl"


def save_template(template: UserTemplate, store_path) -> Path:
    """Atomic write-new-then-rename under the store lock."""
    store = Path(store_path)
    store.mkdir(parents=True, exist_ok=True)
    target = _template_path(store, template.user_id)
    header = {
        "user_id": template.user_id,
        "n_enroll_samples": template.n_enroll_samples,
        "created_at": template.created_at,
        "model_fingerprint": template.model_fingerprint,
        "dim": template.embedding.dim,
    }
    payload = np.ascontiguousarray(template.embedding.values,
                                   dtype=np.float64).tobytes()
    with FileLock(str(store / "store.lock")):
        tmp = target.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            fh.write(json.dumps(header).encode("utf-8") + b"\n")
            fh.write(payload)
        tmp.replace(target)
    return target


def load_template(store_path, user_id: str) -> UserTemplate:
    store = Path(store_path)
    target = _template_path(store, user_id)
    if not target.exists():
        raise AuthError(f"no template for user {user_id!r} in {store}")
    raw = target.read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    values = np.frombuffer(raw[nl + 1:], dtype=np.float64)
    if values.shape[0] != header["dim"]:
        raise AuthError(f"template for {user_id!r} is truncated")
    return UserTemplate(
        user_id=header["user_id"],
        embedding=EmbeddingVector(values.copy()),
        n_enroll_samples=header["n_enroll_samples"],
        created_at=header["created_at"],
        model_fingerprint=header["model_fingerprint"],
    )


def list_templates(store_path) -> list[str]:
    store = Path(store_path)
    users = []
    for path in sorted(store.glob("*.tmpl")):
        pad = "=" * (-len(path.stem) % 4)
        users.append(base64.urlsafe_b64decode(path.stem + pad).decode())
    return users
