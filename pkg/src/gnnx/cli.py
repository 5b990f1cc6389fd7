"""Command-line driver.

    gnnx train  --dataset DIR --out DIR [--seeds 0,1,2,3,4] [--force]
    gnnx attack --dataset DIR --attack-id N --victim CKPT --out DIR
                [--shadow DIR] [--attacker-fraction F] [--alpha A] [--seeds ...]
    gnnx split  --dataset DIR --out DIR [--target-fraction F] [--seed N]
    gnnx sweep  --dataset DIR --attack-id N --sweep-axis AXIS --sweep-values V1,V2,...
                --out DIR [...]

Exit codes: 0 ok, 2 usage, 3 taxonomy violation, 4 I/O, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .attacks import EnsembleModel, TaxonomyError, extract
from .datasets import (
    BundleFormatError,
    DatasetBundle,
    SplitSpec,
    default_split_spec,
    load_bundle,
    make_full_split,
    make_shadow_split,
    sample_attacker_nodes,
    write_bundle,
)
from .gcn import TrainConfig, forward, load_checkpoint, save_checkpoint, train
from .graph import NodeSetView, normalize_adjacency
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    _RunContext,
    _aggregate,
    accuracy,
    build_knowledge,
    config_dict,
    fidelity,
    predict_surrogate,
    run_sweep,
    sweep_csv_rows,
    train_dnn_baseline,
    write_report,
)
from .oracle import VictimOracle
from .rng import derive_seed

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TAXONOMY = 3
EXIT_IO = 4
EXIT_NUMERIC = 5


class UsageError(ValueError):
    pass


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip() != "")
    except ValueError:
        raise UsageError(f"bad --seeds value {text!r}") from None
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    return seeds


def _parse_attack_id(text: str):
    if text == "dnn":
        return "dnn"
    try:
        attack_id = int(text)
    except ValueError:
        raise UsageError(f"bad --attack-id {text!r}") from None
    if attack_id not in range(7):
        raise UsageError("--attack-id must be 0..6 or 'dnn'")
    return attack_id


def _check_out(path: str, force: bool) -> None:
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def _split_spec_for(bundle: DatasetBundle, args, seed: int,
                    required: bool = True) -> SplitSpec | None:
    counts = (args.train_count, args.val_count, args.test_count)
    if any(c is not None for c in counts):
        if any(c is None for c in counts):
            raise UsageError("--train-count/--val-count/--test-count must be given together")
        return SplitSpec(*counts, seed=seed)
    try:
        return default_split_spec(bundle.name, seed=seed)
    except KeyError:
        if not required:
            return None
        raise UsageError(
            f"dataset {bundle.name!r} has no default split; pass --train-count/--val-count/--test-count"
        ) from None


def _experiment_config(args, bundle: DatasetBundle, spec_required: bool = True) -> ExperimentConfig:
    spec = _split_spec_for(bundle, args, 0, required=spec_required)
    return ExperimentConfig(
        attack_id=_parse_attack_id(args.attack_id),
        attacker_fraction=args.attacker_fraction,
        alpha=args.alpha,
        seeds=_parse_seeds(args.seeds),
        synthesis_mode=args.synthesis_mode,
        k_neighbors=args.k_neighbors,
        target_avg_degree=args.target_avg_degree,
        target_fraction=args.target_fraction,
        split_spec=spec,
        train_cfg=TrainConfig(learning_rate=args.learning_rate, epochs=args.epochs),
    )


def cmd_train(args) -> int:
    bundle = load_bundle(args.dataset)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "victim.ckpt")
    metrics_path = os.path.join(args.out, "victim_metrics.json")
    _check_out(ckpt_path, args.force)

    seeds = _parse_seeds(args.seeds)
    accs = []
    first_payload = None
    for seed in seeds:
        if bundle.splits and args.train_count is None:
            splits = bundle.splits  # persisted split (e.g. a community-split side)
        else:
            spec = _split_spec_for(bundle, args, derive_seed(seed, "split"))
            splits = make_full_split(bundle, spec)
        cfg = TrainConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                          seed=derive_seed(seed, "victim"))
        adj = normalize_adjacency(bundle.graph)
        model = train(bundle.graph, splits["train"], splits["val"], cfg,
                      num_classes=bundle.num_classes, adj=adj)
        preds = forward(model, adj, bundle.graph.attributes)
        acc = accuracy(preds, bundle.graph.labels, splits["test"])
        accs.append(acc)
        if first_payload is None:
            extra = {
                "dataset": bundle.name,
                "seed": seed,
                "num_classes": bundle.num_classes,
                "splits": {k: list(v.ids) for k, v in splits.items()},
            }
            first_payload = (model, cfg, extra)

    model, cfg, extra = first_payload
    save_checkpoint(ckpt_path, model, cfg, extra)
    metrics = {
        "dataset": bundle.name,
        "seeds": list(seeds),
        "test_accuracy_per_seed": accs,
        "test_accuracy_mean": float(np.mean(accs)),
        "test_accuracy_std": float(np.std(accs, ddof=1)) if len(accs) >= 2 else 0.0,
    }
    with open(metrics_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(metrics, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {ckpt_path}")
    print(f"test accuracy mean {metrics['test_accuracy_mean']:.4f} over {len(seeds)} seed(s)")
    return EXIT_OK


def _context_from_checkpoint(args, bundle: DatasetBundle) -> _RunContext:
    model, _, extra = load_checkpoint(args.victim)
    adj = normalize_adjacency(bundle.graph)
    preds = forward(model, adj, bundle.graph.attributes)
    splits = {k: NodeSetView(tuple(v), role="other") for k, v in extra["splits"].items()}
    victim_bundle = DatasetBundle(bundle.graph, bundle.name, bundle.num_classes, splits)
    eval_ids = np.asarray(splits["test"].ids, dtype=np.int64)
    victim_acc = accuracy(preds, bundle.graph.labels, eval_ids)
    oracle = VictimOracle(model, adj, bundle.graph.attributes)
    shadow_bundle = None
    if args.shadow:
        shadow_raw = load_bundle(args.shadow)
        if shadow_raw.splits:
            shadow_bundle = shadow_raw  # persisted split from `gnnx split`
        else:
            spec = _split_spec_for(bundle, args, 0)
            ratio = shadow_raw.graph.num_nodes / max(1, bundle.graph.num_nodes)
            shadow_spec = replace(
                spec,
                train_count=max(bundle.num_classes, int(spec.train_count * ratio)),
                val_count=max(1, int(spec.val_count * ratio)),
                test_count=max(1, int(spec.test_count * ratio)),
                seed=derive_seed(0, "shadow-split"),
            )
            shadow_splits = make_full_split(shadow_raw, shadow_spec)
            shadow_bundle = DatasetBundle(shadow_raw.graph, shadow_raw.name,
                                          shadow_raw.num_classes, shadow_splits)
    return _RunContext(victim_bundle, shadow_bundle, model, adj, preds, oracle,
                       eval_ids, victim_acc)


def cmd_attack(args) -> int:
    bundle = load_bundle(args.dataset)
    cfg = _experiment_config(args, bundle, spec_required=False)
    os.makedirs(args.out, exist_ok=True)
    tag = f"attack{cfg.attack_id}"
    report_path = os.path.join(args.out, f"report_{tag}.json")
    surrogate_path = os.path.join(args.out, f"surrogate_{tag}.ckpt")
    _check_out(report_path, args.force)

    if cfg.attack_id in (3, 4, 5, 6) and not args.shadow:
        raise TaxonomyError(cfg.attack_id, "a shadow graph (--shadow)")

    ctx = _context_from_checkpoint(args, bundle)
    per_seed = []
    last_surrogate = None
    for seed in cfg.seeds:
        started = time.perf_counter()
        attacker = sample_attacker_nodes(ctx.victim_bundle, cfg.attacker_fraction,
                                         derive_seed(seed, "attacker"))
        knowledge = build_knowledge(cfg.attack_id, ctx, cfg, attacker)
        queries_before = ctx.oracle.queries
        train_cfg = replace(cfg.train_cfg, seed=derive_seed(seed, "surrogate"))
        if cfg.attack_id == "dnn":
            surrogate = train_dnn_baseline(knowledge, train_cfg)
        else:
            surrogate = extract(cfg.attack_id, knowledge, train_cfg,
                                hidden_dim=cfg.hidden_dim, dropout_rate=cfg.dropout_rate,
                                synthesis_mode=cfg.synthesis_mode)
        preds = predict_surrogate(cfg.attack_id, surrogate, ctx)
        per_seed.append({
            "seed": seed,
            "accuracy": accuracy(preds, bundle.graph.labels, ctx.eval_ids),
            "fidelity": fidelity(preds, ctx.victim_preds, ctx.eval_ids),
            "queries": ctx.oracle.queries - queries_before,
            "seconds": time.perf_counter() - started,
        })
        last_surrogate = surrogate
    report = ExperimentReport(
        dataset=bundle.name, attack_id=cfg.attack_id,
        attacker_fraction=cfg.attacker_fraction, alpha=cfg.alpha, seeds=cfg.seeds,
        per_seed=per_seed, aggregate=_aggregate(per_seed),
        config={**_config_summary(cfg, bundle), "victim": args.victim},
    )
    write_report(report, report_path)
    csv_path = os.path.join(args.out, f"report_{tag}.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(sweep_csv_rows(
            "attacker_fraction", [cfg.attacker_fraction], [report])) + "\n")
    surrogate_cfg = replace(cfg.train_cfg, seed=derive_seed(cfg.seeds[-1], "surrogate"))
    surrogate_extra = {"attack_id": str(cfg.attack_id), "dataset": bundle.name}
    if isinstance(last_surrogate, EnsembleModel):
        # the ensemble's three trained parts; rerunning with the same seed
        # reconstructs the full predictor (shadow posteriors are recomputable)
        stem = os.path.splitext(surrogate_path)[0]
        save_checkpoint(f"{stem}_structural.ckpt", last_surrogate.model_structural,
                        surrogate_cfg, surrogate_extra)
        save_checkpoint(f"{stem}_shadow.ckpt", last_surrogate.model_shadow,
                        surrogate_cfg, surrogate_extra)
        save_checkpoint(f"{stem}_mlp.ckpt", last_surrogate.attack_mlp,
                        surrogate_cfg, surrogate_extra)
    else:
        save_checkpoint(surrogate_path, last_surrogate, surrogate_cfg, surrogate_extra)
    print(f"wrote {report_path}")
    print(f"fidelity mean {report.aggregate['fidelity_mean']:.4f}, "
          f"accuracy mean {report.aggregate['accuracy_mean']:.4f}")
    return EXIT_OK


def _config_summary(cfg: ExperimentConfig, bundle: DatasetBundle) -> dict:
    return config_dict(bundle, cfg)


def cmd_split(args) -> int:
    bundle = load_bundle(args.dataset)
    base = _split_spec_for(bundle, args, args.seed)
    target, shadow = make_shadow_split(bundle, args.target_fraction, args.seed, base_spec=base)
    target_dir = os.path.join(args.out, "target")
    shadow_dir = os.path.join(args.out, "shadow")
    for path in (target_dir, shadow_dir):
        _check_out(os.path.join(path, "meta.json"), args.force)
    write_bundle(target, target_dir)
    write_bundle(shadow, shadow_dir)
    print(f"target: {target.graph.num_nodes} nodes -> {target_dir}")
    print(f"shadow: {shadow.graph.num_nodes} nodes -> {shadow_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle = load_bundle(args.dataset)
    cfg = _experiment_config(args, bundle)
    values = [v for v in args.sweep_values.split(",") if v != ""]
    if args.sweep_axis != "synthesis_mode":
        try:
            values = [float(v) for v in values]
        except ValueError:
            raise UsageError(f"bad --sweep-values {args.sweep_values!r}") from None
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"sweep_{args.sweep_axis}.csv")
    _check_out(csv_path, args.force)
    try:
        reports = run_sweep(bundle, cfg, args.sweep_axis, values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for value, report in zip(values, reports):
        point_path = os.path.join(args.out, f"report_{args.sweep_axis}_{value}.json")
        write_report(report, point_path)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(sweep_csv_rows(args.sweep_axis, values, reports)) + "\n")
    print(f"wrote {csv_path} ({len(reports)} points)")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, *, seeds: bool = True) -> None:
    parser.add_argument("--dataset", required=True, help="bundle directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")
    parser.add_argument("--learning-rate", type=float, default=0.02)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--train-count", type=int, default=None)
    parser.add_argument("--val-count", type=int, default=None)
    parser.add_argument("--test-count", type=int, default=None)
    if seeds:
        parser.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")


def _add_attack_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--attack-id", required=True, help="0..6 or 'dnn'")
    parser.add_argument("--attacker-fraction", type=float, default=0.25)
    parser.add_argument("--alpha", type=float, default=0.8)
    parser.add_argument("--synthesis-mode", default="first-order",
                        choices=["none", "first-order", "second-order"])
    parser.add_argument("--k-neighbors", type=int, default=3)
    parser.add_argument("--target-avg-degree", type=float, default=None)
    parser.add_argument("--target-fraction", type=float, default=0.5)
    parser.add_argument("--shadow", default=None, help="shadow bundle directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gnnx")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the victim model")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_attack = sub.add_parser("attack", help="run an extraction attack against a checkpoint")
    _add_common(p_attack)
    _add_attack_options(p_attack)
    p_attack.add_argument("--victim", required=True, help="victim checkpoint path")
    p_attack.set_defaults(func=cmd_attack)

    p_split = sub.add_parser("split", help="community-split a bundle into target/shadow")
    _add_common(p_split, seeds=False)
    p_split.add_argument("--target-fraction", type=float, default=0.5)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.set_defaults(func=cmd_split)

    p_sweep = sub.add_parser("sweep", help="run an ablation sweep")
    _add_common(p_sweep)
    _add_attack_options(p_sweep)
    p_sweep.add_argument("--sweep-axis", required=True,
                         choices=["attacker_fraction", "alpha", "shadow_fraction",
                                  "synthesis_mode"])
    p_sweep.add_argument("--sweep-values", required=True, help="comma-separated values")
    p_sweep.add_argument("--victim", default=None, help="unused; sweeps train per seed")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TaxonomyError as exc:
        print(f"taxonomy violation: {exc}", file=sys.stderr)
        return EXIT_TAXONOMY
    except (OSError, BundleFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
