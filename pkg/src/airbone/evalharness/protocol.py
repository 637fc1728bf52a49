"""The experiment protocols: cross-user folds, attacks, and robustness sweeps.

Every protocol follows the same recipe: train the embedding on the fold's
training users, enroll each test user with one sample per command, score
genuine vs impostor trials exhaustively inside the fold, and operate at
the fold's equal-error threshold.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from airbone.audio_io import (
    MultichannelRecording,
    UtteranceEntry,
    load_recording,
    mix_noise,
    resample,
    write_manifest,
    write_recording,
)
from airbone.auth import UserTemplate, authenticate, enroll, liveness_score
from airbone.cache import BundleCache
from airbone.evalharness.folds import FoldSplit, kfold_split
from airbone.evalharness.metrics import compute_eer
from airbone.evalharness.report import EvalReport
from airbone.features.bundle import ExtractConfig, extract_bundle, \
    substitute_ac_features
from airbone.net.model import NetworkParams, forward
from airbone.net.train import TrainConfig, VOLUME_ORDER, train
from airbone.synth.geometry import seed_for

DEFAULT_LIVENESS_THRESHOLD = 0.5
GLOBAL_SIM_THRESHOLD = 0.62


@dataclass
class EvalContext:
    """Manifest entries plus the bundle cache they were extracted into."""

    entries: list
    cache: BundleCache

    def genuine(self):
        return [e for e in self.entries if e.label == "genuine"]

    def attacks(self, kinds=None):
        out = [e for e in self.entries if e.label == "attack"]
        if kinds is not None:
            out = [e for e in out if e.attack_type in kinds]
        return out


@dataclass
class FoldArtifacts:
    fold: FoldSplit
    params: NetworkParams
    templates: dict                     # user_id -> UserTemplate
    enroll_keys: set = field(default_factory=set)
    eer: float = 0.0
    threshold: float = 0.0
    history: dict = field(default_factory=dict)


def _entry_key(e: UtteranceEntry):
    return (e.user_id, e.session, e.command_id, e.volume, e.take)


def _enroll_selection(entries):
    """One sample per command: the earliest (volume, take) of each command."""
    chosen = {}
    for e in sorted(entries, key=lambda e: (e.command_id,
                                            VOLUME_ORDER.get(e.volume, 9),
                                            e.take, e.path)):
        chosen.setdefault(e.command_id, e)
    return list(chosen.values())


def _fold_train_config(train_config: TrainConfig, streams, seed, fold_index):
    return dataclasses.replace(
        train_config, streams=tuple(streams),
        rng_seed=seed_for("fold-train", seed, fold_index))


def _score_fold(params, templates, probes_by_user, bundle_of):
    """Exhaustive genuine/impostor cosine trials inside one fold."""
    genuine, impostor = [], []
    users = sorted(templates)
    for u in users:
        for e in probes_by_user.get(u, []):
            emb = forward(params, bundle_of(e))
            for v in users:
                score = float(emb.values @ templates[v].embedding.values)
                (genuine if v == u else impostor).append(score)
    return genuine, impostor


def _run_one_fold(ctx: EvalContext, fold: FoldSplit, by_user, streams,
                  train_config: TrainConfig, seed: int):
    genuine = ctx.genuine()
    train_entries = [e for e in genuine if e.user_id in fold.train_user_ids]
    train_bundles = [ctx.cache.get(e) for e in train_entries]
    labels = [e.user_id for e in train_entries]
    cfg = _fold_train_config(train_config, streams, seed, fold.fold_index)
    params, history = train(train_bundles, labels, cfg)

    templates, enroll_keys, probes = {}, set(), {}
    for u in fold.test_user_ids:
        enrollment = _enroll_selection(by_user[u])
        if len(enrollment) == len(by_user[u]):
            raise ValueError(f"user {u} has no samples left to verify after "
                             "enrollment")
        templates[u] = enroll(params, [ctx.cache.get(e) for e in enrollment], u)
        enroll_keys |= {_entry_key(e) for e in enrollment}
        probes[u] = [e for e in by_user[u] if _entry_key(e) not in enroll_keys]
    gen, imp = _score_fold(params, templates, probes, ctx.cache.get)
    eer, thr = compute_eer(gen, imp)
    return FoldArtifacts(fold, params, templates, enroll_keys, eer, thr,
                         history), len(gen), len(imp)


def _fold_worker(args):
    import os
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    return _run_one_fold(*args)


def run_authentication_eval(ctx: EvalContext, streams, train_config: TrainConfig,
                            k: int, seed: int,
                            experiment_id: str = "authentication",
                            folds: list[FoldSplit] | None = None,
                            jobs: int = 1,
                            ) -> tuple[EvalReport, list[FoldArtifacts]]:
    """Cross-user k-fold EER with per-command enrollment.

    Folds are independent; jobs > 1 trains them in parallel processes
    (per-fold seeds make the result identical either way).
    """
    t0 = time.time()
    genuine = ctx.genuine()
    users = sorted({e.user_id for e in genuine})
    if len(users) < k:
        raise ValueError(f"need >= {k} users with genuine data, have {len(users)}")
    if folds is None:
        folds = kfold_split(users, k, seed)
    by_user = {}
    for e in genuine:
        by_user.setdefault(e.user_id, []).append(e)

    work = [(ctx, fold, by_user, streams, train_config, seed) for fold in folds]
    if jobs > 1 and len(folds) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_worker, work))
    else:
        results = [_run_one_fold(*w) for w in work]

    report = EvalReport(experiment_id=experiment_id,
                        feature_config={"streams": list(streams)}, seed=seed)
    artifacts = []
    for art, n_gen, n_imp in results:
        report.per_fold.append({
            "fold": art.fold.fold_index, "eer": art.eer, "threshold": art.threshold,
            "n_genuine": n_gen, "n_impostor": n_imp,
            "selected_epoch": art.history["selected_epoch"],
        })
        artifacts.append(art)
    report.finalize()
    report.runtime = {"seconds": round(time.time() - t0, 2)}
    return report, artifacts


def run_ablation_eval(ctx: EvalContext, stream_combos, train_config: TrainConfig,
                      k: int, seed: int, jobs: int = 1) -> dict:
    """Re-run the authentication protocol per stream combination, with the
    same folds so results are directly comparable."""
    users = sorted({e.user_id for e in ctx.genuine()})
    folds = kfold_split(users, k, seed)
    out = {}
    for combo in stream_combos:
        name = "+".join(combo)
        report, arts = run_authentication_eval(
            ctx, combo, train_config, k, seed,
            experiment_id=f"ablation[{name}]", folds=folds, jobs=jobs)
        out[name] = (report, arts)
    return out


def _fold_of_user(artifacts, user_id):
    for art in artifacts:
        if user_id in art.fold.test_user_ids:
            return art
    raise ValueError(f"attack targets non-enrolled user {user_id!r}")


def run_attack_eval(ctx: EvalContext, attack_entries, artifacts,
                    seed: int = 0, substitution: bool = False,
                    liveness_threshold: float = DEFAULT_LIVENESS_THRESHOLD,
                    experiment_id: str = "attack",
                    trials=None) -> EvalReport:
    """Attack success rates at each fold's equal-error threshold.

    An attempt succeeds iff authenticate() accepts it against the target's
    template (liveness gate included). With substitution=True the air-mel
    stream of every attack bundle is first replaced by its genuine
    counterpart's. The global 0.62 operating point is reported alongside.
    """
    t0 = time.time()
    genuine_by_key = {}
    for e in ctx.genuine():
        genuine_by_key[_entry_key(e)] = e
    successes, attempts = {}, {}
    successes_global = {}
    for e in attack_entries:
        art = _fold_of_user(artifacts, e.user_id)
        bundle = ctx.cache.get(e)
        if substitution:
            src = genuine_by_key.get(_entry_key(e))
            if src is None:
                raise ValueError(f"no genuine source for attack {e.path}")
            bundle = substitute_ac_features(bundle, ctx.cache.get(src))
        name = e.attack_type if not substitution else "ac_substitution"
        decision = authenticate(art.params, art.templates[e.user_id], bundle,
                                threshold_sim=art.threshold,
                                threshold_live=liveness_threshold)
        attempts[name] = attempts.get(name, 0) + 1
        successes[name] = successes.get(name, 0) + int(decision.accepted)
        ok_global = (decision.similarity >= GLOBAL_SIM_THRESHOLD
                     and decision.liveness >= liveness_threshold)
        successes_global[name] = successes_global.get(name, 0) + int(ok_global)
        if trials is not None:
            trials.append((e.user_id, e.user_id, name,
                           round(decision.similarity, 6),
                           round(decision.liveness, 6)))

    report = EvalReport(experiment_id=experiment_id,
                        feature_config={"streams": []}, seed=seed)
    for name in sorted(attempts):
        report.asr[name] = successes[name] / attempts[name]
    replay = [n for n in attempts if n.startswith("replay_pos")]
    if replay:
        report.asr["replay_mean"] = float(np.mean(
            [successes[n] / attempts[n] for n in replay]))
    report.extra["attempts"] = attempts
    report.extra["asr_at_global_threshold"] = {
        n: successes_global[n] / attempts[n] for n in sorted(attempts)}
    report.runtime = {"seconds": round(time.time() - t0, 2)}
    return report


def run_channel_restriction_eval(entries, layouts: dict, cache_root,
                                 base_config: ExtractConfig,
                                 train_config: TrainConfig, k: int, seed: int,
                                 streams=("ac_mel", "bc_mel", "tdm", "edm"),
                                 jobs: int = 1) -> dict:
    """Re-extract bundles per air-channel layout and rerun the protocol."""
    out = {}
    for name, subset in layouts.items():
        config = dataclasses.replace(base_config, ac_channels=tuple(subset))
        cache = BundleCache(f"{cache_root}/{name}", config)
        done, skipped, errors = cache.extract_all(
            [e for e in entries if e.label == "genuine"], jobs=jobs)
        if errors:
            raise RuntimeError(f"extraction failures for layout {name}: {errors}")
        ctx = EvalContext(entries, cache)
        report, arts = run_authentication_eval(
            ctx, streams, train_config, k, seed,
            experiment_id=f"channels[{name}]", jobs=jobs)
        report.extra["layout"] = list(subset)
        out[name] = (report, arts)
    return out


def run_snr_sweep(ctx: EvalContext, noise: MultichannelRecording, snr_list_db,
                  artifacts, extract_config: ExtractConfig,
                  seed: int = 0) -> EvalReport:
    """Mix noise into the test utterances and rescore with the already
    trained fold models (training data stays clean)."""
    t0 = time.time()
    report = EvalReport(experiment_id="snr_sweep",
                        feature_config={"streams": []}, seed=seed)
    achieved_all = []
    for snr in snr_list_db:
        genuine, impostor = [], []
        for art in artifacts:
            probes = {}
            for e in ctx.genuine():
                if e.user_id not in art.fold.test_user_ids:
                    continue
                if _entry_key(e) in art.enroll_keys:
                    continue
                probes.setdefault(e.user_id, []).append(e)

            def noisy_bundle(entry):
                rec = load_recording(entry.path, ctx.cache.channel_map)
                mixed = mix_noise(rec, noise, snr)
                achieved = 10.0 * np.log10(
                    np.mean(rec.samples[6] ** 2)
                    / np.mean((mixed.samples[6] - rec.samples[6]) ** 2))
                achieved_all.append((entry.path, snr, round(float(achieved), 3)))
                return extract_bundle(mixed, extract_config, meta=entry)

            g, i = _score_fold(art.params, art.templates, probes, noisy_bundle)
            genuine += g
            impostor += i
        eer, thr = compute_eer(genuine, impostor)
        report.per_fold.append({"fold": f"snr{snr}", "eer": eer, "threshold": thr,
                                "snr_db": snr})
    report.extra["achieved_snr"] = achieved_all
    report.runtime = {"seconds": round(time.time() - t0, 2)}
    return report


def resample_dataset(entries, out_dir, target_rate: int = 16000,
                     channel_map=None) -> list[UtteranceEntry]:
    """Write a decimated copy of a dataset; returns the new entries."""
    from airbone.audio_io import default_channel_map
    from pathlib import Path
    out_dir = Path(out_dir)
    audio_dir = out_dir / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)
    channel_map = channel_map or default_channel_map()
    new_entries = []
    for e in entries:
        rec = load_recording(e.path, channel_map)
        low = resample(rec, target_rate)
        path = audio_dir / Path(e.path).name
        write_recording(low, path)
        new_entries.append(dataclasses.replace(e, path=str(path),
                                               sample_rate=target_rate))
    write_manifest(new_entries, out_dir / "manifest.jsonl")
    return new_entries


def run_downsample_eval(entries, workdir, extract_config: ExtractConfig,
                        train_config: TrainConfig, k: int, seed: int,
                        streams=("ac_mel", "bc_mel", "tdm", "edm"),
                        target_rate: int = 16000, jobs: int = 1,
                        baseline_report: EvalReport | None = None):
    """Decimate, re-extract, retrain, re-evaluate with the same protocol."""
    low_entries = resample_dataset(entries, workdir, target_rate)
    cache = BundleCache(f"{workdir}/bundles", extract_config)
    done, skipped, errors = cache.extract_all(
        [e for e in low_entries if e.label == "genuine"], jobs=jobs)
    if errors:
        raise RuntimeError(f"extraction failures: {errors}")
    ctx = EvalContext(low_entries, cache)
    report, arts = run_authentication_eval(
        ctx, streams, train_config, k, seed,
        experiment_id=f"downsample[{target_rate}]", jobs=jobs)
    if baseline_report is not None:
        report.extra["baseline_mean_eer"] = baseline_report.mean_eer
        report.extra["baseline_rate"] = 96000
    return report, arts


def run_cross_session_eval(ctx_session1: EvalContext, ctx_session2: EvalContext,
                           artifacts, seed: int = 0) -> EvalReport:
    """Enroll from session-1 data (already done in the artifacts), verify
    with session-2 recordings of the same users."""
    t0 = time.time()
    users1 = {e.user_id for e in ctx_session1.genuine()}
    users2 = {e.user_id for e in ctx_session2.genuine()}
    overlap = users1 & users2
    if not overlap:
        raise ValueError("no user overlap between sessions")
    genuine, impostor = [], []
    for art in artifacts:
        probes = {}
        for e in ctx_session2.genuine():
            if e.user_id in art.fold.test_user_ids and e.user_id in overlap:
                probes.setdefault(e.user_id, []).append(e)
        templates = {u: t for u, t in art.templates.items() if u in overlap}
        if not templates:
            continue
        g, i = _score_fold(art.params, templates, probes, ctx_session2.cache.get)
        genuine += g
        impostor += i
    eer, thr = compute_eer(genuine, impostor)
    report = EvalReport(experiment_id="cross_session",
                        feature_config={"streams": []}, seed=seed)
    report.per_fold.append({"fold": "all", "eer": eer, "threshold": thr,
                            "n_genuine": len(genuine), "n_impostor": len(impostor)})
    report.finalize()
    report.runtime = {"seconds": round(time.time() - t0, 2)}
    return report
