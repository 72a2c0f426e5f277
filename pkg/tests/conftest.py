import numpy as np
import pytest

from mhn import synth
from mhn.hetgraph import HeteroGraph, LabelTable, Schema, build_graph
from mhn.metapath import Metapath, derive_rng


@pytest.fixture
def toy():
    return synth.toy_graph()


@pytest.fixture
def toy_labels(toy):
    g = toy.graph
    return LabelTable(labels={g.index(k): v for k, v in toy.labels.items()},
                      num_classes=2)


# Item-side metapath for the toy graph (IIU); the dataset itself ships UIIU.
@pytest.fixture
def toy_iiu():
    return Metapath(id="IIU", node_types=("I", "I", "U"), edge_types=("ii", "ui"))


def enumerate_instances(graph: HeteroGraph, u: int, mp: Metapath) -> set:
    """Brute-force enumeration of all type/edge-conforming paths from u."""
    if graph.node_type(u) != mp.node_types[0]:
        return set()
    paths = [(u,)]
    for i, et in enumerate(mp.edge_types):
        want = mp.node_types[i + 1]
        nxt = []
        for p in paths:
            for v in graph.neighbors(p[-1], et):
                if graph.node_type(v) == want:
                    nxt.append(p + (v,))
        paths = nxt
    return set(paths)


def random_typed_graph(seed: int, max_nodes: int = 20) -> HeteroGraph:
    """Small random heterogeneous graph for oracle comparisons."""
    rng = derive_rng(seed, "testgraph")
    n_types = int(rng.integers(2, 4))
    type_names = [chr(ord("A") + t) for t in range(n_types)]
    edge_specs = []
    n_edge_types = int(rng.integers(2, 5))
    for e in range(n_edge_types):
        src = type_names[int(rng.integers(n_types))]
        dst = type_names[int(rng.integers(n_types))]
        edge_specs.append({"name": f"e{e}", "src": src, "dst": dst,
                           "undirected": bool(rng.integers(2))})
    schema = Schema.from_dict({
        "node_types": [{"name": t, "feature_dim": None} for t in type_names],
        "edge_types": edge_specs,
    })
    n = int(rng.integers(n_types, max_nodes + 1))
    nodes = [(f"n{j}", type_names[int(rng.integers(n_types))], None) for j in range(n)]
    by_type = {}
    for name, tname, _ in nodes:
        by_type.setdefault(tname, []).append(name)
    edges = []
    for spec in edge_specs:
        src_pool = by_type.get(spec["src"], [])
        dst_pool = by_type.get(spec["dst"], [])
        if not src_pool or not dst_pool:
            continue
        for _ in range(int(rng.integers(0, 2 * n))):
            edges.append((src_pool[int(rng.integers(len(src_pool)))],
                          dst_pool[int(rng.integers(len(dst_pool)))],
                          spec["name"]))
    return build_graph(schema, nodes, edges, warn_homogeneous=False)


def random_metapath(graph: HeteroGraph, seed: int, max_len: int = 4) -> Metapath | None:
    """A schema-valid random metapath for the graph, or None if stuck."""
    rng = derive_rng(seed, "testmp")
    ets = list(graph.schema.edge_types)
    if not ets:
        return None
    start = ets[int(rng.integers(len(ets)))]
    node_types = [start.src]
    edge_types = []
    length = int(rng.integers(2, max_len + 1))
    while len(node_types) < length:
        options = []
        for et in ets:
            if et.src == node_types[-1]:
                options.append((et.name, et.dst))
            if et.undirected and et.dst == node_types[-1]:
                options.append((et.name, et.src))
        if not options:
            break
        name, nxt = options[int(rng.integers(len(options)))]
        edge_types.append(name)
        node_types.append(nxt)
    if len(node_types) < 2:
        return None
    mp = Metapath(id="test-" + "".join(node_types), node_types=tuple(node_types),
                  edge_types=tuple(edge_types))
    mp.validate_against(graph.schema)
    return mp


# --- independent metric references (loop-based, straight from definitions)


def roc_auc_pairs(scores, labels) -> float:
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def pr_points_ref(scores, labels):
    thresholds = sorted(set(scores), reverse=True)
    points = []
    npos = sum(labels)
    for t in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if s >= t and l == 1)
        fp = sum(1 for s, l in zip(scores, labels) if s >= t and l == 0)
        points.append((tp / npos, tp / (tp + fp)))
    return points


def average_precision_ref(scores, labels) -> float:
    points = pr_points_ref(scores, labels)
    total, prev_r = 0.0, 0.0
    for r, p in points:
        total += (r - prev_r) * p
        prev_r = r
    return total


def pr_auc_ref(scores, labels) -> float:
    points = pr_points_ref(scores, labels)
    rs = [0.0] + [r for r, _ in points]
    ps = [points[0][1]] + [p for _, p in points]
    return sum((rs[i] - rs[i - 1]) * (ps[i] + ps[i - 1]) / 2 for i in range(1, len(rs)))


def f1_ref(scores, labels, threshold=0.5) -> float:
    tp = sum(1 for s, l in zip(scores, labels) if s >= threshold and l == 1)
    fp = sum(1 for s, l in zip(scores, labels) if s >= threshold and l == 0)
    fn = sum(1 for s, l in zip(scores, labels) if s < threshold and l == 1)
    return 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0


def micro_macro_ref(pred, true, c) -> tuple[float, float]:
    tg = fg = ng = 0
    per = []
    for k in range(c):
        tp = sum(1 for p, t in zip(pred, true) if p == k and t == k)
        fp = sum(1 for p, t in zip(pred, true) if p == k and t != k)
        fn = sum(1 for p, t in zip(pred, true) if p != k and t == k)
        tg, fg, ng = tg + tp, fg + fp, ng + fn
        per.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
    micro = 2 * tg / (2 * tg + fg + ng) if (2 * tg + fg + ng) else 0.0
    return micro, sum(per) / c
