"""Metrics, multi-seed experiment runner, sweeps, and report emission.

For every seed the runner trains a fresh victim, hands the attacker its
knowledge slice, extracts a surrogate, and scores accuracy (vs ground truth)
and fidelity (vs the victim's hard labels) on the victim's test nodes. For
shadow-setting attacks (3-6) the victim lives on the target side of a
community split and evaluation uses that side's test nodes.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import attacks
from .attacks import AttackKnowledge, EnsembleModel, extract, train_on_attack_graph
from .datasets import DatasetBundle, SplitSpec, default_split_spec, make_full_split, \
    make_shadow_split, sample_attacker_nodes
from .gcn import GcnModel, PredictionSet, TrainConfig, forward, train
from .graph import Graph, MISSING_LABEL, NodeSetView, NormalizedAdjacency, \
    identity_adjacency, k_hop_closure, normalize_adjacency
from .oracle import VictimOracle
from .rng import derive_seed

SHADOW_ATTACKS = (3, 4, 5, 6)

VALID_SWEEP_AXES = {
    "attacker_fraction": {0, 1, 2, 4, 5, 6, "dnn"},
    "alpha": {0, 4},
    "shadow_fraction": {3, 4, 5, 6},
    "synthesis_mode": {0, 4},
}


def _hard_labels(preds) -> np.ndarray:
    return preds.hard_labels if isinstance(preds, PredictionSet) else np.asarray(preds)


def _eval_ids(eval_nodes) -> np.ndarray:
    ids = np.asarray(getattr(eval_nodes, "ids", eval_nodes), dtype=np.int64)
    if ids.size == 0:
        raise ValueError("evaluation node set must be nonempty")
    return ids


def fidelity(surrogate_preds, victim_preds, eval_nodes) -> float:
    """Fraction of evaluation nodes where the two models emit the same label."""
    ids = _eval_ids(eval_nodes)
    return float(np.mean(_hard_labels(surrogate_preds)[ids] == _hard_labels(victim_preds)[ids]))


def accuracy(preds, labels, eval_nodes) -> float:
    """Fraction of evaluation nodes whose hard label matches ground truth."""
    ids = _eval_ids(eval_nodes)
    labels = np.asarray(labels)
    if (labels[ids] == MISSING_LABEL).any():
        raise ValueError("evaluation nodes must be labeled")
    return float(np.mean(_hard_labels(preds)[ids] == labels[ids]))


def degree_distribution(g: Graph) -> dict[int, int]:
    """Map degree -> node count."""
    values, counts = np.unique(g.degrees, return_counts=True)
    return {int(d): int(c) for d, c in zip(values, counts)}


def degree_distribution_rows(g: Graph) -> list[str]:
    """The same histogram as plot-ready `degree,count` rows."""
    dist = degree_distribution(g)
    return ["degree,count"] + [f"{d},{dist[d]}" for d in sorted(dist)]


@dataclass(frozen=True)
class ExperimentConfig:
    attack_id: object                 # 0..6 or "dnn"
    attacker_fraction: float = 0.25
    alpha: float = 0.8
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    synthesis_mode: str = "first-order"
    k_neighbors: int = 3
    target_avg_degree: float | None = None
    target_fraction: float = 0.5      # community split: share of nodes on the victim side
    split_spec: SplitSpec | None = None
    train_cfg: TrainConfig = TrainConfig()
    hidden_dim: int = 16
    dropout_rate: float = 0.5
    eval_on: str = "test"             # "test" or "all"


@dataclass(eq=False)
class ExperimentReport:
    dataset: str
    attack_id: object
    attacker_fraction: float
    alpha: float
    seeds: tuple[int, ...]
    per_seed: list[dict]
    aggregate: dict
    config: dict
    victim_accuracies: list[float] = field(default_factory=list)


@dataclass(eq=False)
class _RunContext:
    victim_bundle: DatasetBundle
    shadow_bundle: DatasetBundle | None
    victim_model: GcnModel
    victim_adj: NormalizedAdjacency
    victim_preds: PredictionSet
    oracle: VictimOracle
    eval_ids: np.ndarray
    victim_accuracy: float


def _base_spec(bundle: DatasetBundle, cfg: ExperimentConfig, seed: int) -> SplitSpec:
    spec = cfg.split_spec if cfg.split_spec is not None else default_split_spec(bundle.name)
    return replace(spec, seed=seed, attacker_fraction=cfg.attacker_fraction)


def _setup_victim(bundle: DatasetBundle, cfg: ExperimentConfig, seed: int) -> _RunContext:
    shadow_bundle = None
    if cfg.attack_id in SHADOW_ATTACKS:
        spec = _base_spec(bundle, cfg, derive_seed(seed, "split"))
        victim_bundle, shadow_bundle = make_shadow_split(
            bundle, cfg.target_fraction, derive_seed(seed, "community"), base_spec=spec)
    else:
        spec = _base_spec(bundle, cfg, derive_seed(seed, "split"))
        splits = make_full_split(bundle, spec)
        victim_bundle = DatasetBundle(bundle.graph, bundle.name, bundle.num_classes, splits)

    train_cfg = replace(cfg.train_cfg, seed=derive_seed(seed, "victim"))
    adj = normalize_adjacency(victim_bundle.graph)
    model = train(victim_bundle.graph, victim_bundle.splits["train"], victim_bundle.splits["val"],
                  train_cfg, num_classes=bundle.num_classes, hidden_dim=cfg.hidden_dim,
                  dropout_rate=cfg.dropout_rate, adj=adj)
    preds = forward(model, adj, victim_bundle.graph.attributes)
    eval_view = victim_bundle.splits["test"] if cfg.eval_on == "test" \
        else NodeSetView(tuple(range(victim_bundle.graph.num_nodes)), role="other")
    eval_ids = _eval_ids(eval_view)
    victim_acc = accuracy(preds, victim_bundle.graph.labels, eval_ids)
    oracle = VictimOracle(model, adj, victim_bundle.graph.attributes)
    return _RunContext(victim_bundle, shadow_bundle, model, adj, preds, oracle,
                       eval_ids, victim_acc)


def _masked_shadow(shadow_bundle: DatasetBundle) -> Graph:
    """The shadow graph as the attacker sees it: labels only on its train nodes."""
    g = shadow_bundle.graph
    known = np.full(g.num_nodes, MISSING_LABEL, dtype=np.int64)
    train_ids = np.asarray(shadow_bundle.splits["train"].ids, dtype=np.int64)
    known[train_ids] = g.labels[train_ids]
    return Graph(g.num_nodes, g.edges, g.attributes, known, g.node_ids)


def build_knowledge(attack_id, ctx: _RunContext, cfg: ExperimentConfig,
                    attacker: NodeSetView) -> AttackKnowledge:
    """Assemble exactly the knowledge slice the attack's taxonomy row grants."""
    g = ctx.victim_bundle.graph
    dims = attacks.TAXONOMY[1 if attack_id == "dnn" else attack_id]
    attrs_dim, struct_dim, shadow_dim = dims

    known_attrs = None
    if attrs_dim == "partial":
        rows = np.asarray(attacker.ids, dtype=np.int64)
        known_attrs = np.asarray(g.attributes[rows])
    neighborhood = known_edges = None
    if struct_dim == "partial":
        neighborhood, edges = k_hop_closure(g, attacker, 2)
        known_edges = tuple(edges)
    full_structure = None
    if struct_dim == "full":
        full_structure = Graph(g.num_nodes, g.edges)
    shadow = _masked_shadow(ctx.shadow_bundle) if shadow_dim else None

    return AttackKnowledge(
        attacker_nodes=attacker,
        oracle=ctx.oracle,
        num_classes=ctx.victim_bundle.num_classes,
        known_attrs=known_attrs,
        neighborhood=neighborhood,
        known_edges=known_edges,
        full_structure=full_structure,
        shadow=shadow,
        alpha=cfg.alpha,
        k_neighbors=cfg.k_neighbors,
        target_avg_degree=cfg.target_avg_degree,
    )


def predict_surrogate(attack_id, surrogate, ctx: _RunContext) -> PredictionSet:
    """Surrogate predictions over the victim's own graph."""
    if isinstance(surrogate, EnsembleModel):
        return surrogate.predict(ctx.victim_adj)
    if attack_id == 2:
        n = ctx.victim_adj.num_nodes
        return forward(surrogate, ctx.victim_adj, sp.identity(n, dtype=np.float64, format="csr"))
    if attack_id == "dnn":
        n = ctx.victim_adj.num_nodes
        return forward(surrogate, identity_adjacency(n), ctx.victim_bundle.graph.attributes)
    return forward(surrogate, ctx.victim_adj, ctx.victim_bundle.graph.attributes)


def train_dnn_baseline(knowledge: AttackKnowledge, cfg: TrainConfig,
                       hidden_dim: int = 16, dropout_rate: float = 0.5) -> GcnModel:
    """Structure-free baseline: an MLP on attacker attributes and oracle labels."""
    attacker = list(knowledge.attacker_nodes.ids)
    if len(attacker) < 2:
        raise ValueError("baseline needs at least two attacker nodes")
    if knowledge.known_attrs is None:
        raise attacks.TaxonomyError("dnn", "attacker-node attributes")
    labels = knowledge.oracle.query(attacker)
    graph = Graph(len(attacker), (), knowledge.known_attrs, labels, node_ids=tuple(attacker))
    ag = attacks.AttackGraph(graph, NodeSetView(tuple(range(len(attacker))), role="attacker"),
                             ("attacker",) * len(attacker))
    return train_on_attack_graph(ag, cfg, knowledge.num_classes, hidden_dim, dropout_rate)


def dnn_baseline(knowledge: AttackKnowledge, cfg: TrainConfig,
                 ctx: _RunContext) -> tuple[float, float]:
    """(accuracy, fidelity) of the structure-free baseline, scored like a surrogate."""
    model = train_dnn_baseline(knowledge, cfg)
    preds = predict_surrogate("dnn", model, ctx)
    return (accuracy(preds, ctx.victim_bundle.graph.labels, ctx.eval_ids),
            fidelity(preds, ctx.victim_preds, ctx.eval_ids))


def run_single(bundle: DatasetBundle, cfg: ExperimentConfig, seed: int):
    """One seeded run; returns (per-seed record, victim accuracy, surrogate)."""
    started = time.perf_counter()
    ctx = _setup_victim(bundle, cfg, seed)
    attacker = sample_attacker_nodes(ctx.victim_bundle, cfg.attacker_fraction,
                                     derive_seed(seed, "attacker"))
    knowledge = build_knowledge(cfg.attack_id, ctx, cfg, attacker)
    train_cfg = replace(cfg.train_cfg, seed=derive_seed(seed, "surrogate"))
    if cfg.attack_id == "dnn":
        surrogate = train_dnn_baseline(knowledge, train_cfg, cfg.hidden_dim, cfg.dropout_rate)
    else:
        surrogate = extract(cfg.attack_id, knowledge, train_cfg, hidden_dim=cfg.hidden_dim,
                            dropout_rate=cfg.dropout_rate, synthesis_mode=cfg.synthesis_mode)
    preds = predict_surrogate(cfg.attack_id, surrogate, ctx)
    record = {
        "seed": seed,
        "accuracy": accuracy(preds, ctx.victim_bundle.graph.labels, ctx.eval_ids),
        "fidelity": fidelity(preds, ctx.victim_preds, ctx.eval_ids),
        "queries": ctx.oracle.queries,
        "seconds": time.perf_counter() - started,
    }
    return record, ctx.victim_accuracy, surrogate


def _aggregate(per_seed: list[dict]) -> dict:
    agg = {}
    for metric in ("accuracy", "fidelity"):
        values = np.asarray([r[metric] for r in per_seed])
        agg[f"{metric}_mean"] = float(values.mean())
        agg[f"{metric}_std"] = float(values.std(ddof=1)) if values.size >= 2 else 0.0
    if len(per_seed) < 2:
        agg["single_seed"] = True
    return agg


def run_experiment(bundle: DatasetBundle, cfg: ExperimentConfig) -> ExperimentReport:
    per_seed = []
    victim_accs = []
    for seed in cfg.seeds:
        try:
            record, victim_acc, _ = run_single(bundle, cfg, seed)
        except Exception as exc:
            raise RuntimeError(
                f"run failed (dataset={bundle.name}, attack={cfg.attack_id}, seed={seed})") from exc
        per_seed.append(record)
        victim_accs.append(victim_acc)
    return ExperimentReport(
        dataset=bundle.name,
        attack_id=cfg.attack_id,
        attacker_fraction=cfg.attacker_fraction,
        alpha=cfg.alpha,
        seeds=tuple(cfg.seeds),
        per_seed=per_seed,
        aggregate=_aggregate(per_seed),
        config=config_dict(bundle, cfg),
        victim_accuracies=victim_accs,
    )


def config_dict(bundle: DatasetBundle, cfg: ExperimentConfig) -> dict:
    return {
        "dataset": bundle.name,
        "attack_id": cfg.attack_id,
        "attacker_fraction": cfg.attacker_fraction,
        "alpha": cfg.alpha,
        "seeds": list(cfg.seeds),
        "synthesis_mode": cfg.synthesis_mode,
        "k_neighbors": cfg.k_neighbors,
        "target_avg_degree": cfg.target_avg_degree,
        "target_fraction": cfg.target_fraction,
        "hidden_dim": cfg.hidden_dim,
        "dropout_rate": cfg.dropout_rate,
        "learning_rate": cfg.train_cfg.learning_rate,
        "epochs": cfg.train_cfg.epochs,
        "eval_on": cfg.eval_on,
    }


def _apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "attacker_fraction":
        return replace(cfg, attacker_fraction=float(value))
    if axis == "alpha":
        return replace(cfg, alpha=float(value))
    if axis == "shadow_fraction":
        return replace(cfg, target_fraction=1.0 - float(value))
    if axis == "synthesis_mode":
        return replace(cfg, synthesis_mode=str(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def run_sweep(bundle: DatasetBundle, cfg: ExperimentConfig, axis: str,
              values) -> list[ExperimentReport]:
    """One report per axis value, with seeds shared across values."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    allowed = VALID_SWEEP_AXES.get(axis)
    if allowed is None:
        raise ValueError(f"unknown sweep axis {axis!r}")
    if cfg.attack_id not in allowed:
        raise ValueError(f"axis {axis!r} is not valid for attack {cfg.attack_id}")
    configs = [_apply_axis(cfg, axis, v) for v in values]
    workers = max(1, int(os.environ.get("GNNX_THREADS", "1")))
    if workers == 1:
        return [run_experiment(bundle, c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: run_experiment(bundle, c), configs))


def sweep_csv_rows(axis: str, values, reports: list[ExperimentReport]) -> list[str]:
    """Plot-ready rows: header `axis_value,metric,mean,std`."""
    rows = ["axis_value,metric,mean,std"]
    for value, report in zip(values, reports):
        for metric in ("accuracy", "fidelity"):
            rows.append(f"{value},{metric},{report.aggregate[f'{metric}_mean']!r},"
                        f"{report.aggregate[f'{metric}_std']!r}")
    return rows


def report_to_dict(report: ExperimentReport, include_seconds: bool = False) -> dict:
    per_seed = []
    for rec in report.per_seed:
        row = {"seed": rec["seed"], "accuracy": rec["accuracy"],
               "fidelity": rec["fidelity"], "queries": rec["queries"]}
        if include_seconds:
            row["seconds"] = rec["seconds"]
        per_seed.append(row)
    return {"config": report.config, "per_seed": per_seed, "aggregate": report.aggregate}


def write_report(report: ExperimentReport, path) -> None:
    """Canonical report JSON (timing goes to a sidecar so bytes are reproducible)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    sidecar = {str(rec["seed"]): rec["seconds"] for rec in report.per_seed}
    with open(f"{os.path.splitext(str(path))[0]}.timings.json", "w",
              encoding="utf-8", newline="") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
