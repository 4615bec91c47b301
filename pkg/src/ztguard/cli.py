"""Command-line entry point: ``ztguard <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from collections import Counter
from pathlib import Path

from . import detectors
from .evalmetrics import report as build_report
from .flowdata import (
    SynthConfig,
    clean,
    generate_synthetic,
    ingest_csv,
    split,
    to_dataset,
    write_csv,
)
from .pipeline import PipelineConfig, run_pipeline, synthetic_manifest
from .ztengine import PolicyConfig, Registry, onboard, read_manifest, write_manifest

log = logging.getLogger("ztguard")


def _load_dataset(path):
    with open(path, encoding="utf-8", newline="") as fh:
        records, rejects = ingest_csv(fh)
    for r in rejects:
        log.warning("%s: row %d rejected: %s", path, r.row, r.error)
    kept = clean(records)
    if len(kept) < len(records):
        log.warning("%s: %d incomplete or corrupt record(s) dropped", path, len(records) - len(kept))
    if not kept:
        raise ValueError(f"{path}: no usable labeled flows")
    return to_dataset(kept)


def _params(kind: str, args):
    if kind == "gbt":
        return detectors.GbtParams(rounds=args.rounds, eta=args.eta, gamma=args.gamma, lam=args.lam, max_depth=args.depth or 6)
    if kind == "forest":
        return detectors.ForestParams(n_trees=args.trees, max_depth=args.depth or 8, seed=args.seed)
    if kind == "knn":
        return detectors.KnnParams(k=args.k)
    if kind == "sgd":
        return detectors.SgdParams(eta=args.learning_rate, epochs=args.epochs, l2=args.l2, seed=args.seed)
    return None


def _entries(models, raw):
    entries = []
    for model in models:
        scores = detectors.score_raw(model, raw)
        entries.append((model.display_name, scores, detectors.labels_from_scores(model, scores), raw.labels))
    return entries


def _write_report(rep, models, out_dir) -> None:
    rep.write(out_dir, slugs={m.display_name: m.kind for m in models})
    print(rep.to_text(), end="")


# ---- subcommands


def cmd_generate(args) -> int:
    cfg = SynthConfig.standard(seed=args.seed, n_flows=args.flows, attack_fraction=args.attack_fraction)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "flows.csv", "w", encoding="utf-8", newline="") as fh:
        write_csv(generate_synthetic(cfg), fh)
    (out / "devices.csv").write_text(write_manifest(synthetic_manifest(cfg)), encoding="utf-8")
    print(f"wrote {cfg.total} flows to {out / 'flows.csv'} and device manifest to {out / 'devices.csv'}")
    return 0


def cmd_train(args) -> int:
    raw = _load_dataset(args.input)
    model = detectors.fit_model(args.model, raw, _params(args.model, args), threshold=args.feature_threshold)
    target = Path(args.output) if args.output else Path(args.out_dir) / f"model_{args.model}.json"
    target.parent.mkdir(parents=True, exist_ok=True)
    detectors.save_model(model, target)
    print(f"trained {model.display_name} on {len(raw)} flows ({', '.join(model.feature_names)}) -> {target}")
    return 0


def cmd_evaluate(args) -> int:
    model = detectors.load_model(args.model)
    raw = _load_dataset(args.input)
    _write_report(build_report(_entries([model], raw)), [model], args.out_dir)
    return 0


def cmd_bench(args) -> int:
    if args.input:
        raw = _load_dataset(args.input)
    else:
        raw = to_dataset(generate_synthetic(SynthConfig.standard(seed=args.seed, n_flows=args.flows)))
    train_ds, test_ds = split(raw, args.test_fraction, args.seed)
    models = []
    for kind in detectors.MODEL_ORDER:
        start = time.perf_counter()
        models.append(detectors.fit_model(kind, train_ds, _params(kind, args), threshold=args.feature_threshold))
        log.info("trained %s in %.2fs", kind, time.perf_counter() - start)
    _write_report(build_report(_entries(models, test_ds)), models, args.out_dir)
    return 0


def cmd_simulate(args) -> int:
    policy = PolicyConfig(block_threshold=args.block_threshold, challenge_threshold=args.challenge_threshold)
    cfg = PipelineConfig(
        model_path=args.model,
        signatures_path=args.signatures,
        registry_path=args.registry,
        input_path=args.input,
        synth=None if args.input else SynthConfig.standard(seed=args.seed, n_flows=args.flows),
        seed=args.seed,
        policy=policy,
        auth_ttl_ms=int(args.auth_ttl * 1000),
        out_dir=args.out_dir,
    )
    run = run_pipeline(cfg)
    print(run.report.to_text(), end="")
    return 0


def cmd_onboard(args) -> int:
    entries = read_manifest(Path(args.registry).read_text(encoding="utf-8"))
    registry = Registry(int(args.auth_ttl * 1000))
    records = onboard(registry, entries, now=args.now)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "registry.json").write_text(json.dumps(registry.to_dict(), indent=1) + "\n", encoding="utf-8")
    by_grade = Counter(r.attestation.value for r in records)
    by_segment = Counter(r.segment for r in records)
    print(f"onboarded {len(records)} device(s) -> {out / 'registry.json'}")
    for grade, n in sorted(by_grade.items()):
        print(f"  attestation {grade}: {n}")
    for seg, n in sorted(by_segment.items()):
        print(f"  segment {seg}: {n}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ztguard", description="Zero-trust / zero-touch IoT DDoS detection simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True, out_dir=True):
        if seed:
            p.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
        if out_dir:
            p.add_argument("--out-dir", default=".", help="directory for output files (default .)")

    def hyper(p):
        p.add_argument("--feature-threshold", type=float, default=0.05, help="min |Pearson r| to keep a feature")
        p.add_argument("--k", type=int, default=5, help="KNN neighbours")
        p.add_argument("--trees", type=int, default=100, help="forest size")
        p.add_argument("--depth", type=int, default=None, help="tree depth (gbt 6, forest 8)")
        p.add_argument("--rounds", type=int, default=50, help="boosting rounds")
        p.add_argument("--eta", type=float, default=0.3, help="boosting shrinkage")
        p.add_argument("--lam", type=float, default=1.0, help="boosting L2 leaf penalty")
        p.add_argument("--gamma", type=float, default=0.0, help="boosting per-leaf penalty")
        p.add_argument("--learning-rate", type=float, default=0.01, help="SGD step size")
        p.add_argument("--epochs", type=int, default=20, help="SGD epochs")
        p.add_argument("--l2", type=float, default=1e-4, help="SGD L2 strength")

    p = sub.add_parser("generate", help="write a seeded synthetic flow dataset and device manifest")
    common(p)
    p.add_argument("--flows", type=int, default=10_000)
    p.add_argument("--attack-fraction", type=float, default=0.3)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit one model on a labeled flow CSV")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True, choices=detectors.MODEL_ORDER)
    p.add_argument("--output", help="model file (default <out-dir>/model_<kind>.json)")
    hyper(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on a labeled flow CSV")
    common(p, seed=False)
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True, help="model file written by train")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="train and evaluate all five models on one split")
    common(p)
    p.add_argument("--input", help="labeled flow CSV (default: standard synthetic dataset)")
    p.add_argument("--flows", type=int, default=10_000, help="synthetic dataset size when --input is absent")
    p.add_argument("--test-fraction", type=float, default=0.2)
    hyper(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="run the zero-trust / zero-touch pipeline over a flow stream")
    common(p)
    p.add_argument("--input", help="flow CSV (default: synthetic stream)")
    p.add_argument("--flows", type=int, default=1000, help="synthetic stream size when --input is absent")
    p.add_argument("--model", required=True, help="model file written by train")
    p.add_argument("--signatures", help="signature DB file (default: built-in set)")
    p.add_argument("--registry", help="device manifest CSV")
    p.add_argument("--block-threshold", type=float, default=0.9)
    p.add_argument("--challenge-threshold", type=float, default=0.5)
    p.add_argument("--auth-ttl", type=float, default=300.0, help="session lifetime in seconds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("onboard", help="register devices from a manifest and write registry.json")
    common(p, seed=False)
    p.add_argument("--registry", required=True, help="device manifest CSV")
    p.add_argument("--now", type=int, default=0, help="onboarding timestamp (ms)")
    p.add_argument("--auth-ttl", type=float, default=300.0)
    p.set_defaults(func=cmd_onboard)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"ztguard {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
