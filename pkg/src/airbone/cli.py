"""Command-line entry point wiring the whole pipeline.

One verb per stage: gen-data, extract, train, enroll, verify, evaluate,
attack-eval, report. Logs go to stderr; machine-readable results go to
files. Exit codes: 0 success/accept, 2 clean reject, 1 error.

Config precedence: flags > config file > built-in defaults; the merged
result is echoed into every output directory so runs are reproducible.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("airbone")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2


def _parse_csv(text, cast=str):
    return tuple(cast(t) for t in str(text).split(",") if t != "")


def _parse_channels(text):
    from airbone.audio_io import LAYOUTS
    if text in LAYOUTS:
        return LAYOUTS[text]
    return _parse_csv(text, int)


def _load_config_file(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _merged(args, keys):
    """flags > config file > defaults; returns the effective dict."""
    cfg = _load_config_file(getattr(args, "config", None))
    unknown = set(cfg) - set(keys)
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in cfg:
            out[key] = cfg[key]
    return out


def _echo_config(out_dir, effective: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.effective.json").write_text(
        json.dumps(effective, indent=1, sort_keys=True, default=str) + "\n",
        encoding="utf-8")


def _extract_config(ns) -> "ExtractConfig":
    from airbone.features.bundle import ExtractConfig
    kwargs = {}
    if getattr(ns, "channels", None) is not None:
        kwargs["ac_channels"] = _parse_channels(ns.channels)
    for flag, field in [("mels_ac", "n_mels_ac"), ("mels_bc", "n_mels_bc"),
                        ("frame_s", "frame_s"), ("hop_s", "hop_s"),
                        ("max_lag_s", "max_lag_s")]:
        v = getattr(ns, flag, None)
        if v is not None:
            kwargs[field] = v
    return ExtractConfig(**kwargs)


def _train_config(ns) -> "TrainConfig":
    from airbone.net.train import TrainConfig
    kwargs = {}
    mapping = [("epochs", "epochs"), ("eval_every", "eval_every"),
               ("batch_size", "batch_size"), ("lr", "learning_rate"),
               ("aug", "augmentation_count"), ("crop", "crop_frames"),
               ("proj", "matrix_proj"), ("embed_dim", "embed_dim"),
               ("dtype", "dtype"), ("seed", "rng_seed")]
    for flag, field in mapping:
        v = getattr(ns, flag, None)
        if v is not None:
            kwargs[field] = v
    if getattr(ns, "streams", None) is not None:
        kwargs["streams"] = _parse_csv(ns.streams)
    if getattr(ns, "conv_channels", None) is not None:
        kwargs["conv_channels"] = _parse_csv(ns.conv_channels, int)
    return TrainConfig(**kwargs)


# ---------------------------------------------------------------- commands

def cmd_gen_data(ns) -> int:
    from airbone.audio_io import VOLUMES, write_recording
    from airbone.synth.dataset import AttackPlan, generate_dataset, \
        generate_noise_recording

    volumes = _parse_csv(ns.volumes) if ns.volumes else VOLUMES
    scenarios = []
    for kind in _parse_csv(ns.attacks) if ns.attacks else ():
        plan = AttackPlan(kind)
        if ns.attack_volumes:
            plan.volumes = _parse_csv(ns.attack_volumes)
        if ns.attack_takes:
            plan.takes = _parse_csv(ns.attack_takes, int)
        if ns.attack_commands:
            plan.commands = _parse_csv(ns.attack_commands, int)
        scenarios.append(plan)
    duration = _parse_csv(ns.duration_range, float) if ns.duration_range \
        else (1.5, 3.0)
    counts = {"genuine": 0, "attack": 0}

    def tick(entry):
        counts[entry.label] += 1

    manifest = generate_dataset(
        ns.speakers, ns.commands, volumes, ns.takes, scenarios, ns.out,
        seed=ns.seed, rate=ns.rate, duration_range=duration,
        session=ns.session, mic_jitter_m=ns.mic_jitter_mm / 1000.0,
        progress=tick, jobs=ns.jobs)
    for i in range(ns.noise_files):
        noise = generate_noise_recording(ns.noise_duration, ns.rate,
                                         seed=ns.seed + i)
        write_recording(noise, Path(ns.out) / "noise" / f"noise{i}.wav")
    _echo_config(ns.out, {"command": "gen-data", **vars(ns)})
    log.info("wrote %d genuine + %d attack files; manifest %s",
             counts["genuine"], counts["attack"], manifest)
    print(manifest)
    return EXIT_OK


def cmd_extract(ns) -> int:
    from airbone.audio_io import load_manifest
    from airbone.cache import BundleCache

    entries = load_manifest(ns.manifest)
    cache = BundleCache(ns.cache, _extract_config(ns))
    done, skipped, errors = cache.extract_all(entries, jobs=ns.jobs,
                                              refresh=ns.refresh)
    log.info("extracted %d, skipped %d valid, %d errors", done, skipped,
             len(errors))
    for path, msg in errors:
        log.error("extract %s: %s", path, msg)
    return EXIT_ERROR if errors else EXIT_OK


def cmd_train(ns) -> int:
    from airbone.audio_io import load_manifest
    from airbone.cache import BundleCache
    from airbone.net.checkpoint import save_checkpoint
    from airbone.net.train import train

    entries = [e for e in load_manifest(ns.manifest) if e.label == "genuine"]
    extract_config = _extract_config(ns)
    cache = BundleCache(ns.cache, extract_config)
    bundles = [cache.get(e) for e in entries]
    labels = [e.user_id for e in entries]
    config = _train_config(ns)
    params, history = train(bundles, labels, config)
    save_checkpoint(params, ns.out,
                    train_fingerprint=extract_config.fingerprint(),
                    extra={"train_config": dataclasses.asdict(config),
                           "extract_config": dataclasses.asdict(extract_config),
                           "history": history})
    hist_path = Path(ns.out).with_suffix(".history.json")
    hist_path.write_text(json.dumps(history, indent=1) + "\n", encoding="utf-8")
    log.info("checkpoint %s (selected epoch %d, probe EER %s)", ns.out,
             history["selected_epoch"], history["best_probe_eer"])
    return EXIT_OK


def _load_model(path):
    from airbone.features.bundle import ExtractConfig
    from airbone.net.checkpoint import load_checkpoint
    params, header = load_checkpoint(path)
    extract_config = ExtractConfig(**header["extra"]["extract_config"])
    return params, extract_config


def cmd_enroll(ns) -> int:
    from airbone.audio_io import load_manifest
    from airbone.auth import enroll, save_template
    from airbone.cache import BundleCache
    from airbone.evalharness.protocol import _enroll_selection

    params, extract_config = _load_model(ns.checkpoint)
    entries = [e for e in load_manifest(ns.manifest) if e.label == "genuine"]
    cache = BundleCache(ns.cache, extract_config)
    users = [ns.user] if ns.user else sorted({e.user_id for e in entries})
    for user in users:
        own = [e for e in entries if e.user_id == user]
        if not own:
            log.error("no genuine entries for user %s", user)
            return EXIT_ERROR
        selection = _enroll_selection(own)
        template = enroll(params, [cache.get(e) for e in selection], user)
        save_template(template, ns.store)
        log.info("enrolled %s from %d samples", user, len(selection))
    return EXIT_OK


def cmd_verify(ns) -> int:
    from airbone.audio_io import default_channel_map, load_recording
    from airbone.auth import authenticate, load_template
    from airbone.features.bundle import extract_bundle

    params, extract_config = _load_model(ns.checkpoint)
    template = load_template(ns.store, ns.user)
    rec = load_recording(ns.wav, default_channel_map())
    bundle = extract_bundle(rec, extract_config)
    decision = authenticate(params, template, bundle,
                            threshold_sim=ns.threshold,
                            threshold_live=ns.liveness_threshold)
    print(json.dumps({
        "accepted": decision.accepted, "similarity": decision.similarity,
        "liveness": decision.liveness, "threshold_sim": decision.threshold_sim,
        "threshold_live": decision.threshold_live, "reason": decision.reason,
    }, indent=1))
    return EXIT_OK if decision.accepted else EXIT_REJECT


_EVAL_KEYS = ["experiment", "k", "seed", "streams", "layouts", "snr",
              "session2_manifest", "noise_wav", "epochs", "eval_every",
              "batch_size", "lr", "aug", "crop", "conv_channels", "proj",
              "embed_dim", "dtype", "jobs", "channels", "mels_ac", "mels_bc"]


def cmd_evaluate(ns) -> int:
    from airbone.audio_io import LAYOUTS, load_manifest, load_recording, \
        default_channel_map
    from airbone.cache import BundleCache
    from airbone.evalharness.protocol import (
        EvalContext, run_ablation_eval, run_authentication_eval,
        run_channel_restriction_eval, run_cross_session_eval,
        run_downsample_eval, run_snr_sweep)

    effective = _merged(ns, _EVAL_KEYS)
    _echo_config(ns.out, {"command": "evaluate", "manifest": ns.manifest,
                          **effective})
    entries = load_manifest(ns.manifest)
    extract_config = _extract_config(ns)
    train_config = _train_config(ns)
    streams = _parse_csv(ns.streams) if ns.streams else \
        ("ac_mel", "bc_mel", "tdm", "edm")
    cache = BundleCache(ns.cache, extract_config)
    ctx = EvalContext(entries, cache)
    k, seed = ns.k, ns.seed
    which = ns.experiment

    if which in ("auth", "all"):
        report, arts = run_authentication_eval(ctx, streams, train_config, k,
                                               seed, jobs=ns.jobs)
        report.save(ns.out)
        log.info("auth mean EER %.4f", report.mean_eer)
    if which in ("ablation", "all"):
        singles = [("ac_mel",), ("bc_mel",), ("tdm",), ("edm",)]
        combos = singles + [tuple(streams)]
        results = run_ablation_eval(ctx, combos, train_config, k, seed,
                                    jobs=ns.jobs)
        for name, (rep, _) in results.items():
            rep.save(ns.out, stem=f"ablation_{name.replace('+', '_')}")
            log.info("ablation %s EER %.4f", name, rep.mean_eer)
    if which in ("channels", "all"):
        layouts = {name: LAYOUTS[name] for name in
                   (_parse_csv(ns.layouts) if ns.layouts else ("3ch", "5ch"))}
        results = run_channel_restriction_eval(
            entries, layouts, Path(ns.cache) / "layouts", extract_config,
            train_config, k, seed, streams=streams, jobs=ns.jobs)
        for name, (rep, _) in results.items():
            rep.save(ns.out, stem=f"channels_{name}")
            log.info("layout %s EER %.4f", name, rep.mean_eer)
    if which in ("snr", "all"):
        if not ns.noise_wav:
            raise ValueError("--noise-wav required for the snr experiment")
        noise = load_recording(ns.noise_wav, default_channel_map())
        snrs = _parse_csv(ns.snr, float) if ns.snr else (20.0, 10.0, 0.0)
        _, arts = run_authentication_eval(ctx, streams, train_config, k, seed,
                                          jobs=ns.jobs)
        report = run_snr_sweep(ctx, noise, snrs, arts, extract_config, seed)
        report.save(ns.out)
    if which in ("downsample", "all"):
        base_report, _ = run_authentication_eval(ctx, streams, train_config,
                                                 k, seed, jobs=ns.jobs)
        report, _ = run_downsample_eval(
            [e for e in entries if e.label == "genuine"],
            Path(ns.out) / "rate16k", extract_config, train_config, k, seed,
            streams=streams, jobs=ns.jobs, baseline_report=base_report)
        report.save(ns.out)
        log.info("16 kHz EER %.4f (96 kHz baseline %.4f)", report.mean_eer,
                 base_report.mean_eer)
    if which == "cross-session":
        if not ns.session2_manifest:
            raise ValueError("--session2-manifest required")
        entries2 = load_manifest(ns.session2_manifest)
        cache2 = BundleCache(Path(ns.cache) / "session2", extract_config)
        done, skipped, errors = cache2.extract_all(
            [e for e in entries2 if e.label == "genuine"], jobs=ns.jobs)
        if errors:
            raise RuntimeError(f"extraction failures: {errors}")
        _, arts = run_authentication_eval(ctx, streams, train_config, k, seed,
                                          jobs=ns.jobs)
        report = run_cross_session_eval(ctx, EvalContext(entries2, cache2),
                                        arts, seed)
        report.save(ns.out)
    return EXIT_OK


def cmd_attack_eval(ns) -> int:
    from airbone.audio_io import load_manifest
    from airbone.cache import BundleCache
    from airbone.evalharness.protocol import (
        EvalContext, run_attack_eval, run_authentication_eval)
    from airbone.evalharness.report import dump_trials

    effective = _merged(ns, _EVAL_KEYS + ["substitution", "liveness_threshold"])
    _echo_config(ns.out, {"command": "attack-eval", "manifest": ns.manifest,
                          **effective})
    entries = load_manifest(ns.manifest)
    extract_config = _extract_config(ns)
    train_config = _train_config(ns)
    streams = _parse_csv(ns.streams) if ns.streams else \
        ("ac_mel", "bc_mel", "tdm", "edm")
    cache = BundleCache(ns.cache, extract_config)
    ctx = EvalContext(entries, cache)

    auth_report, arts = run_authentication_eval(ctx, streams, train_config,
                                                ns.k, ns.seed, jobs=ns.jobs)
    auth_report.save(ns.out, stem="attack_baseline_auth")
    attacks = ctx.attacks()
    trials = []
    report = run_attack_eval(ctx, attacks, arts, seed=ns.seed,
                             liveness_threshold=ns.liveness_threshold,
                             trials=trials)
    report.save(ns.out, stem="attack")
    if ns.substitution:
        sub = run_attack_eval(ctx, attacks, arts, seed=ns.seed,
                              substitution=True,
                              liveness_threshold=ns.liveness_threshold,
                              experiment_id="attack_substitution",
                              trials=trials)
        sub.save(ns.out, stem="attack_substitution")
    dump_trials(Path(ns.out) / "attack_trials.tsv", trials)
    for name, value in sorted(report.asr.items()):
        log.info("ASR[%s] = %.4f", name, value)
    return EXIT_OK


def cmd_report(ns) -> int:
    from airbone.evalharness.report import EvalReport
    blob = Path(ns.report).read_text(encoding="utf-8")
    print(EvalReport.from_json(blob).table())
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="airbone",
        description="air/bone-conduction voice authentication pipeline")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen-data", help="render a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--speakers", type=int, default=14)
    g.add_argument("--commands", type=int, default=15)
    g.add_argument("--volumes", default=None)
    g.add_argument("--takes", type=int, default=2)
    g.add_argument("--rate", type=int, default=96000, choices=(96000,))
    g.add_argument("--duration-range", dest="duration_range", default=None)
    g.add_argument("--session", type=int, default=1)
    g.add_argument("--mic-jitter-mm", dest="mic_jitter_mm", type=float,
                   default=0.0)
    g.add_argument("--attacks", default=None,
                   help="csv of wearer_sim,replay")
    g.add_argument("--attack-volumes", dest="attack_volumes", default=None)
    g.add_argument("--attack-takes", dest="attack_takes", default=None)
    g.add_argument("--attack-commands", dest="attack_commands", default=None)
    g.add_argument("--noise-files", dest="noise_files", type=int, default=0)
    g.add_argument("--noise-duration", dest="noise_duration", type=float,
                   default=10.0)
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_gen_data)

    def add_extract_flags(sp):
        sp.add_argument("--channels", default=None,
                        help="layout id (3ch/5ch/full) or csv of indices")
        sp.add_argument("--mels-ac", dest="mels_ac", type=int, default=None)
        sp.add_argument("--mels-bc", dest="mels_bc", type=int, default=None)
        sp.add_argument("--frame-s", dest="frame_s", type=float, default=None)
        sp.add_argument("--hop-s", dest="hop_s", type=float, default=None)
        sp.add_argument("--max-lag-s", dest="max_lag_s", type=float,
                        default=None)

    e = sub.add_parser("extract", help="extract feature bundles into a cache")
    e.add_argument("--manifest", required=True)
    e.add_argument("--cache", required=True)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--refresh", action="store_true")
    add_extract_flags(e)
    e.set_defaults(func=cmd_extract)

    def add_train_flags(sp):
        sp.add_argument("--streams", default=None,
                        help="csv of ac_mel,bc_mel,tdm,edm")
        sp.add_argument("--epochs", type=int, default=None)
        sp.add_argument("--eval-every", dest="eval_every", type=int,
                        default=None)
        sp.add_argument("--batch-size", dest="batch_size", type=int,
                        default=None)
        sp.add_argument("--lr", type=float, default=None)
        sp.add_argument("--aug", type=int, default=None)
        sp.add_argument("--crop", type=int, default=None)
        sp.add_argument("--conv-channels", dest="conv_channels", default=None)
        sp.add_argument("--proj", type=int, default=None)
        sp.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
        sp.add_argument("--dtype", default=None,
                        choices=(None, "float32", "float64"))
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train an embedding checkpoint")
    t.add_argument("--manifest", required=True)
    t.add_argument("--cache", required=True)
    t.add_argument("--out", required=True)
    add_extract_flags(t)
    add_train_flags(t)
    t.set_defaults(func=cmd_train)

    n = sub.add_parser("enroll", help="build user templates")
    n.add_argument("--manifest", required=True)
    n.add_argument("--cache", required=True)
    n.add_argument("--checkpoint", required=True)
    n.add_argument("--store", required=True)
    n.add_argument("--user", default=None, help="default: every user")
    n.set_defaults(func=cmd_enroll)

    v = sub.add_parser("verify", help="verify one recording against a template")
    v.add_argument("--wav", required=True)
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--store", required=True)
    v.add_argument("--user", required=True)
    v.add_argument("--threshold", type=float, default=0.62)
    v.add_argument("--liveness-threshold", dest="liveness_threshold",
                   type=float, default=0.5)
    v.set_defaults(func=cmd_verify)

    ev = sub.add_parser("evaluate", help="run evaluation protocols")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--cache", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--config", default=None)
    ev.add_argument("--experiment", default="auth",
                    choices=("auth", "ablation", "channels", "snr",
                             "downsample", "cross-session", "all"))
    ev.add_argument("--k", type=int, default=7)
    ev.add_argument("--layouts", default=None)
    ev.add_argument("--snr", default=None, help="csv of dB targets")
    ev.add_argument("--noise-wav", dest="noise_wav", default=None)
    ev.add_argument("--session2-manifest", dest="session2_manifest",
                    default=None)
    ev.add_argument("--jobs", type=int, default=1)
    add_extract_flags(ev)
    add_train_flags(ev)
    ev.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("attack-eval", help="attack success rates")
    a.add_argument("--manifest", required=True)
    a.add_argument("--cache", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--config", default=None)
    a.add_argument("--k", type=int, default=7)
    a.add_argument("--substitution", action="store_true")
    a.add_argument("--liveness-threshold", dest="liveness_threshold",
                   type=float, default=0.5)
    a.add_argument("--jobs", type=int, default=1)
    add_extract_flags(a)
    add_train_flags(a)
    a.set_defaults(func=cmd_attack_eval)

    r = sub.add_parser("report", help="pretty-print a report file")
    r.add_argument("--report", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.error("%s", exc)
        if args.verbose:
            raise
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
