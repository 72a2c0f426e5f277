"""Command-line driver: synthetic data, metapath generation, training,
evaluation, retrieval and export as one reproducible pipeline.

Conventions shared by every subcommand:

* ``--graph DIR`` points at a directory holding nodes.tsv + edges.tsv
  (+ schema.json unless ``--schema`` overrides).
* ``--seed`` makes the invocation fully deterministic; rerunning with the
  same flags yields byte-identical artifacts, and ``--workers`` never
  changes results.
* Exit codes: 0 success, 1 usage/input error, 2 empty result,
  3 numeric failure.
* Commands with an ``--out-dir`` write a ``manifest.json`` (resolved
  config, input digests, artifact list, timings) atomically at the end.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import evalkit, report, synth, training
from .diffgrad import NonFiniteError
from .hetgraph import (GraphFormatError, load_edge_list, load_graph_dir,
                       load_labels, validate)
from .metapath import (derive_rng, generate_metapaths, load_metapaths,
                       sample_neighborhood, write_metapaths)
from .model import (MHNModel, ModelConfig, UnreachableNodeError,
                    load_checkpoint, save_checkpoint, write_embeddings_tsv)
from .training import TrainConfig, fit, split_labeled_nodes

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_EMPTY = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    """Usage or input problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep codes per contract
        raise CliError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj: dict, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out_dir: Path, command: str, resolved: dict,
                    inputs: list[Path], artifacts: list[str], t0: float) -> None:
    manifest = {
        "command": command,
        "config": resolved,
        "seed": resolved.get("seed"),
        "inputs": {str(p): _sha256(Path(p)) for p in inputs if Path(p).is_file()},
        "artifacts": sorted(artifacts),
        "timings": {"total_seconds": time.perf_counter() - t0},
    }
    tmp = out_dir / "manifest.json.tmp"
    _write_json(manifest, tmp)
    os.replace(tmp, out_dir / "manifest.json")


def _resolved(args: argparse.Namespace, **extra) -> dict:
    out = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    out.update(extra)
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in out.items()}


def _graph_inputs(args) -> list[Path]:
    d = Path(args.graph)
    schema = Path(args.schema) if args.schema else d / "schema.json"
    return [d / "nodes.tsv", d / "edges.tsv", schema]


def _load_graph(args):
    return load_graph_dir(args.graph, args.schema)


def _add_graph_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", required=True,
                   help="directory containing nodes.tsv and edges.tsv")
    p.add_argument("--schema", default=None,
                   help="schema.json path (default: <graph>/schema.json)")


def _load_model(args, graph):
    try:
        model, meta = load_checkpoint(args.checkpoint, graph)
    except (ValueError, KeyError) as exc:
        raise CliError(f"cannot load checkpoint: {exc}") from exc
    return model, meta


# ---------------------------------------------------------------------------
# make-synthetic


def cmd_make_synthetic(args) -> int:
    t0 = time.perf_counter()
    kwargs = {}
    for name in ("n_per_type", "blocks", "edges_per_user", "intra_p", "noise",
                 "mean_degree", "test_fraction"):
        val = getattr(args, name)
        if val is not None:
            kwargs[name] = val
    try:
        ds = synth.make(args.kind, seed=args.seed, **kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    out_dir = Path(args.out_dir)
    synth.write_dataset(ds, out_dir)
    rep = validate(ds.graph)
    print(rep.summary())
    artifacts = [p.name for p in out_dir.iterdir() if p.name != "manifest.json"]
    _write_manifest(out_dir, "make-synthetic", _resolved(args), [], artifacts, t0)
    print(f"wrote {args.kind} dataset to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen-metapaths


def cmd_gen_metapaths(args) -> int:
    if args.top_k < 1:
        raise CliError("--top-k must be >= 1")
    if args.walk_len < 2:
        raise CliError("--walk-len must be >= 2")
    graph = _load_graph(args)
    rules = [r.strip() for r in args.rules.split(",") if r.strip()] if args.rules else []
    try:
        ranked = generate_metapaths(graph, args.walk_len, args.walks_per_node,
                                    rules, args.score_num_type, args.score_den_type,
                                    args.top_k, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not ranked:
        print("no metapath survived filtering", file=sys.stderr)
        return EXIT_EMPTY
    write_metapaths(ranked, args.out)
    print(f"{'rank':<5}{'id':<24}{'score':>12}{'instances':>11}")
    for i, s in enumerate(ranked, start=1):
        print(f"{i:<5}{s.metapath.id:<24}{s.score:>12.4f}{s.instance_count:>11}")
    print(f"wrote {len(ranked)} metapath(s) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sample (debug dump)


def cmd_sample(args) -> int:
    graph = _load_graph(args)
    metapaths = load_metapaths(args.metapaths, graph.schema)
    by_id = {mp.id: mp for mp in metapaths}
    if args.metapath not in by_id:
        raise CliError(f"metapath {args.metapath!r} not in {args.metapaths}")
    mp = by_id[args.metapath]
    try:
        gid = graph.index(args.node)
    except KeyError as exc:
        raise CliError(str(exc)) from exc
    rng = derive_rng(args.seed, "sample", "eval", gid, mp.id)
    ns = sample_neighborhood(graph, gid, mp, args.n_instances,
                             4 * args.n_instances + 16, rng)
    names = graph.node_id
    print(f"node {args.node} / metapath {mp.id}")
    print(f"instances ({len(ns.instances)}):")
    for seq in ns.instances:
        print("  " + " -> ".join(names(v) for v in seq))
    print("BFS: {" + ", ".join(names(v) for v in ns.bfs) + "}")
    print("DFS: {" + ", ".join(names(v) for v in ns.dfs) + "}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _merge_configs(args) -> tuple[ModelConfig, TrainConfig]:
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config: {exc}") from exc
        known = set(ModelConfig.__dataclass_fields__) | set(TrainConfig.__dataclass_fields__)
        unknown = set(file_cfg) - known
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")

    overrides = {
        "embedding_dim": args.dim, "encoder": args.encoder,
        "nonlinearity": args.nonlinearity, "fusion": args.fusion,
        "heads": args.heads, "n_instances": args.n_instances,
        "mode": args.mode, "lr": args.lr, "epochs": args.epochs,
        "patience": args.patience, "negatives": args.negatives,
        "walk_length": args.walk_length, "walks_per_node": args.walks_per_node,
        "window": args.window, "batch_size": args.batch_size,
        "pair_source": args.pair_source, "seed": args.seed,
        "val_fraction": args.val_fraction,
        "target_edge_types": args.target_edge_type or None,
    }
    merged = dict(file_cfg)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        model_cfg = ModelConfig.from_dict(merged)
        train_cfg = TrainConfig.from_dict(merged)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    model_cfg, train_cfg = _merge_configs(args)
    graph = _load_graph(args)
    metapaths = load_metapaths(args.metapaths, graph.schema)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    labels = None
    train_nodes = val_nodes = None
    meta = {"mode": train_cfg.mode, "train_config": train_cfg.to_dict()}
    if train_cfg.mode == "supervised":
        if not args.labels:
            raise CliError("supervised mode requires --labels")
        labels = load_labels(args.labels, graph)
        train_nodes, val_nodes, _ = split_labeled_nodes(
            labels, args.train_fraction, train_cfg.val_fraction, train_cfg.seed)
        meta["train_nodes"] = [graph.node_id(g) for g in train_nodes]
        meta["val_nodes"] = [graph.node_id(g) for g in val_nodes]

    model = MHNModel(graph, metapaths, model_cfg)
    result = fit(graph, metapaths, model, train_cfg, labels=labels,
                 train_nodes=train_nodes, val_nodes=val_nodes,
                 workers=args.workers)

    ckpt_path = out_dir / "checkpoint.mhn"
    save_checkpoint(model, ckpt_path, meta=meta)
    hist_path = out_dir / "history.csv"
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, tr, vl in result.history:
            fh.write(f"{epoch},{tr!r},{vl!r}\n")
    artifacts = ["checkpoint.mhn", "history.csv"]
    if args.figures and result.history:
        report.save_history_figure(result.history, out_dir / "loss_curves.png")
        artifacts.append("loss_curves.png")

    inputs = _graph_inputs(args) + [Path(args.metapaths)]
    if args.config:
        inputs.append(Path(args.config))
    if args.labels:
        inputs.append(Path(args.labels))
    _write_manifest(out_dir, "train",
                    _resolved(args, model_config=model_cfg.to_dict(),
                              train_config=train_cfg.to_dict()),
                    inputs, artifacts, t0)

    if result.history:
        last = result.history[-1]
        print(f"trained {len(result.history)} epoch(s); best val loss "
              f"{result.best_val:.6f} at epoch {result.best_epoch}; "
              f"final train loss {last[1]:.6f}")
    else:
        print("no epochs run; checkpoint holds the initialization")
    if result.stopped_early:
        print("stopped early (validation patience exhausted)")
    if result.diverged:
        print("training diverged; checkpoint holds the last finite parameters",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-nodeclass


def cmd_eval_nodeclass(args) -> int:
    t0 = time.perf_counter()
    graph = _load_graph(args)
    model, meta = _load_model(args, graph)
    labels = load_labels(args.labels, graph)
    seen = set()
    for node_id in meta.get("train_nodes", []) + meta.get("val_nodes", []):
        try:
            seen.add(graph.index(node_id))
        except KeyError:
            pass
    pool = [g for g in labels.nodes if g not in seen]
    if not pool:
        raise CliError("no labeled nodes outside the training/validation split")
    if not seen:
        logger.warning("checkpoint carries no split info; probing all labeled nodes")

    try:
        embeddings = model.embed_nodes(pool, phase="eval", seed=args.seed,
                                       workers=args.workers, base_fallback=False)
    except UnreachableNodeError as exc:
        raise CliError(str(exc)) from exc
    missing = [g for g in pool if g not in embeddings]
    if missing:
        raise CliError(f"{len(missing)} probe node(s) have no embedding")

    split = evalkit.make_probe_split(pool, labels, args.train_proportion, args.seed)
    try:
        micro, macro = evalkit.logistic_probe(embeddings, labels, split)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = {"micro_f1": micro, "macro_f1": macro}
    _write_json(metrics, out_dir / "metrics.json")
    artifacts = ["metrics.json"]
    if args.figures:
        report.save_probe_figure(micro, macro, out_dir / "probe_f1.png")
        artifacts.append("probe_f1.png")
    _write_manifest(out_dir, "eval-nodeclass", _resolved(args),
                    _graph_inputs(args) + [Path(args.checkpoint), Path(args.labels)],
                    artifacts, t0)

    print(f"{'metric':<12}{'value':>10}")
    print(f"{'micro-F1':<12}{micro:>10.4f}")
    print(f"{'macro-F1':<12}{macro:>10.4f}")
    print(f"(probe: {len(split.train_nodes)} train / {len(split.test_nodes)} test, "
          f"proportion {args.train_proportion})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval-linkpred


def cmd_eval_linkpred(args) -> int:
    t0 = time.perf_counter()
    graph = _load_graph(args)
    model, _ = _load_model(args, graph)
    try:
        test_rows = load_edge_list(args.test_edges, graph)
    except GraphFormatError as exc:
        raise CliError(str(exc)) from exc
    if not test_rows:
        raise CliError("empty test edge set")

    by_type: dict[str, list[tuple[int, int]]] = {}
    for u, v, et in test_rows:
        by_type.setdefault(et, []).append((u, v))
    forbidden = {(u, v) for u, v, _ in test_rows}
    positives: list[tuple[int, int]] = []
    negatives: list[tuple[int, int]] = []
    for et in sorted(by_type):
        pos = by_type[et]
        positives.extend(pos)
        negatives.extend(evalkit.sample_nonedges(
            graph, et, len(pos), args.seed, forbidden=forbidden))

    involved = sorted({n for pair in positives + negatives for n in pair})
    try:
        embeddings = model.embed_nodes(involved, phase="eval", seed=args.seed,
                                       workers=args.workers, base_fallback=False)
    except UnreachableNodeError as exc:
        raise CliError(str(exc)) from exc
    try:
        metrics = evalkit.eval_linkpred(embeddings, positives, negatives,
                                        threshold=args.threshold)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(metrics, out_dir / "metrics.json")
    artifacts = ["metrics.json"]
    if args.figures:
        scores = np.array([evalkit.link_probability(embeddings[u], embeddings[v])
                           for u, v in positives + negatives])
        lab = np.array([1] * len(positives) + [0] * len(negatives))
        preds = evalkit.RankedPredictions(scores=scores, labels=lab)
        for p in report.save_linkpred_figures(preds, out_dir):
            artifacts.append(p.name)
    _write_manifest(out_dir, "eval-linkpred", _resolved(args),
                    _graph_inputs(args) + [Path(args.checkpoint), Path(args.test_edges)],
                    artifacts, t0)

    print(f"{'metric':<10}{'value':>10}")
    for key in ("roc_auc", "pr_auc", "f1", "ap"):
        print(f"{key:<10}{metrics[key]:>10.4f}")
    print(f"({len(positives)} positives, {len(negatives)} sampled non-edges)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# knn


def cmd_knn(args) -> int:
    t0 = time.perf_counter()
    if not args.query and not args.truth:
        raise CliError("need --query and/or --truth")
    graph = _load_graph(args)
    model, _ = _load_model(args, graph)
    try:
        by_gid = model.embed_nodes(phase="eval", seed=args.seed,
                                   workers=args.workers, base_fallback=True)
    except UnreachableNodeError as exc:
        raise CliError(str(exc)) from exc
    embeddings = {graph.node_id(g): vec for g, vec in by_gid.items()}

    artifacts = []
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    if args.query:
        if args.query not in embeddings:
            raise CliError(f"unknown query node {args.query!r}")
        ranked = evalkit.knn_topk(embeddings, args.query, args.k)
        q = embeddings[args.query]
        print(f"top-{args.k} neighbors of {args.query} (euclidean):")
        rows = []
        for rank, key in enumerate(ranked, start=1):
            dist = float(np.linalg.norm(embeddings[key] - q))
            print(f"  {rank:>3}  {key:<16} {dist:.6f}")
            rows.append((rank, key, dist))
        if out_dir:
            with open(out_dir / "neighbors.tsv", "w", encoding="utf-8") as fh:
                fh.write("rank\tnode_id\tdistance\n")
                for rank, key, dist in rows:
                    fh.write(f"{rank}\t{key}\t{dist!r}\n")
            artifacts.append("neighbors.tsv")

    if args.truth:
        truth = {}
        for line in Path(args.truth).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            q, _, target = line.partition("\t")
            truth[q] = target
        unknown = [q for q in truth if q not in embeddings]
        if unknown:
            raise CliError(f"{len(unknown)} truth queries have no embedding")
        recs = {q: evalkit.knn_topk(embeddings, q, args.k) for q in sorted(truth)}
        rate = evalkit.hit_rate(recs, truth, args.k)
        print(f"hit-rate@{args.k}: {rate:.4f} over {len(truth)} queries")
        if out_dir:
            _write_json({"hit_rate": rate, "k": args.k, "n_queries": len(truth)},
                        out_dir / "metrics.json")
            artifacts.append("metrics.json")

    if out_dir:
        inputs = _graph_inputs(args) + [Path(args.checkpoint)]
        if args.truth:
            inputs.append(Path(args.truth))
        _write_manifest(out_dir, "knn", _resolved(args), inputs, artifacts, t0)
    return EXIT_OK


# ---------------------------------------------------------------------------
# export


def cmd_export(args) -> int:
    graph = _load_graph(args)
    model, _ = _load_model(args, graph)
    try:
        embeddings = model.embed_nodes(phase="eval", seed=args.seed,
                                       workers=args.workers, base_fallback=True)
    except UnreachableNodeError as exc:
        raise CliError(str(exc)) from exc
    write_embeddings_tsv(embeddings, graph, args.out)
    print(f"wrote {len(embeddings)} embeddings to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="mhn", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a planted-structure dataset")
    p.add_argument("--kind", required=True, choices=synth.KINDS)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-type", type=int, default=None, dest="n_per_type")
    p.add_argument("--blocks", type=int, default=None)
    p.add_argument("--edges-per-user", type=int, default=None, dest="edges_per_user")
    p.add_argument("--intra-p", type=float, default=None, dest="intra_p")
    p.add_argument("--noise", type=float, default=None,
                   help="attribute noise sigma (nodeclass)")
    p.add_argument("--mean-degree", type=int, default=None, dest="mean_degree")
    p.add_argument("--test-fraction", type=float, default=None, dest="test_fraction")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("gen-metapaths", help="random-walk metapath generation")
    _add_graph_flags(p)
    p.add_argument("--walk-len", type=int, default=4, dest="walk_len")
    p.add_argument("--walks-per-node", type=int, default=5, dest="walks_per_node")
    p.add_argument("--rules", default="",
                   help="comma-separated: all-types-present, starts-with=T, "
                        "ends-with=T, max-length=N, palindrome")
    p.add_argument("--top-k", type=int, default=10, dest="top_k")
    p.add_argument("--score-num-type", required=True, dest="score_num_type")
    p.add_argument("--score-den-type", required=True, dest="score_den_type")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_metapaths)

    p = sub.add_parser("sample", help="dump sampled neighborhoods for one node")
    _add_graph_flags(p)
    p.add_argument("--metapaths", required=True)
    p.add_argument("--node", required=True)
    p.add_argument("--metapath", required=True)
    p.add_argument("--n-instances", type=int, default=10, dest="n_instances")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train a model")
    _add_graph_flags(p)
    p.add_argument("--metapaths", required=True)
    p.add_argument("--config", default=None, help="JSON file of config fields")
    p.add_argument("--mode", choices=training.MODES, default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-fraction", type=float, default=0.8, dest="train_fraction",
                   help="fraction of labeled nodes used for supervised training")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--encoder", choices=("mean", "weighted", "nonlinear"), default=None)
    p.add_argument("--nonlinearity", choices=("sigmoid", "relu"), default=None)
    p.add_argument("--fusion", choices=("metapath-attention",
                                        "multi-head-self-attention"), default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--n-instances", type=int, default=None, dest="n_instances")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--negatives", type=int, default=None)
    p.add_argument("--walk-length", type=int, default=None, dest="walk_length")
    p.add_argument("--walks-per-node", type=int, default=None, dest="walks_per_node")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--pair-source", choices=training.PAIR_SOURCES, default=None,
                   dest="pair_source")
    p.add_argument("--target-edge-type", action="append", default=None,
                   dest="target_edge_type",
                   help="restrict unsupervised positives to this edge type (repeatable)")
    p.add_argument("--val-fraction", type=float, default=None, dest="val_fraction")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-nodeclass", help="logistic-probe node classification")
    _add_graph_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--train-proportion", type=float, default=0.8,
                   dest="train_proportion")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_eval_nodeclass)

    p = sub.add_parser("eval-linkpred", help="held-out link prediction metrics")
    _add_graph_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test-edges", required=True, dest="test_edges")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_eval_linkpred)

    p = sub.add_parser("knn", help="nearest-neighbor retrieval / hit-rate")
    _add_graph_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--query", default=None)
    p.add_argument("--truth", default=None,
                   help="TSV of query_id<TAB>target_id for hit-rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_knn)

    p = sub.add_parser("export", help="write embeddings.tsv")
    _add_graph_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GraphFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NonFiniteError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
