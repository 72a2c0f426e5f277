"""Synthetic heterogeneous graphs with recoverable planted structure.

Four kinds:

* ``toy``      -- the 7-node user/item toy graph with two UIIU instances.
* ``nodeclass`` -- blocks of users and items with block-informative
  attributes and mostly intra-block edges; labels are the user blocks.
* ``linkpred``  -- a 2-block bipartite user/item graph with heterogeneous
  (lognormal) degrees and a held-out edge set.
* ``multisem``  -- users and items carry two independent latent factors
  (exposed via genre and brand hub nodes); user-item edges require both
  factors to match, so genre-only or brand-only metapaths each see half
  the signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hetgraph import (HeteroGraph, Schema, build_graph, write_graph,
                       write_labels, write_schema)
from .metapath import Metapath, derive_rng, write_metapaths

KINDS = ("toy", "nodeclass", "linkpred", "multisem")


@dataclass
class SyntheticDataset:
    graph: HeteroGraph
    metapaths: list[Metapath]
    labels: dict[str, int] | None = None
    test_edges: list[tuple[str, str, str]] | None = None
    notes: dict = field(default_factory=dict)


def write_dataset(ds: SyntheticDataset, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_graph(ds.graph, out_dir / "nodes.tsv", out_dir / "edges.tsv")
    write_schema(ds.graph.schema, out_dir / "schema.json")
    write_metapaths(ds.metapaths, out_dir / "metapaths.json")
    if ds.labels is not None:
        write_labels(ds.labels, out_dir / "labels.tsv")
    if ds.test_edges is not None:
        with open(out_dir / "test_edges.tsv", "w", encoding="utf-8") as fh:
            for src, dst, et in ds.test_edges:
                fh.write(f"{src}\t{dst}\t{et}\n")


# ---------------------------------------------------------------------------
# Seven-node toy graph


def toy_graph() -> SyntheticDataset:
    """Three users, four items, u-i and i-i relations.

    From user1 the UIIU metapath has exactly two instances
    (user1-item1-item2-user2 and user1-item3-item4-user3), so its BFS set is
    {item1, item3}. Small fixed attributes are attached to both types.
    """
    schema = Schema.from_dict({
        "node_types": [{"name": "U", "feature_dim": 2},
                       {"name": "I", "feature_dim": 3}],
        "edge_types": [{"name": "ui", "src": "U", "dst": "I", "undirected": True},
                       {"name": "ii", "src": "I", "dst": "I", "undirected": True}],
    })
    nodes = []
    for j in range(3):
        nodes.append((f"user{j + 1}", "U", np.array([0.1 * (j + 1), -0.2 * (j + 1)])))
    for j in range(4):
        nodes.append((f"item{j + 1}", "I",
                      np.array([0.05 * (j + 1), 0.1 * (4 - j), -0.15 * (j + 1)])))
    edges = [
        ("user1", "item1", "ui"),
        ("user1", "item3", "ui"),
        ("user2", "item2", "ui"),
        ("user3", "item4", "ui"),
        ("item1", "item2", "ii"),
        ("item3", "item4", "ii"),
    ]
    graph = build_graph(schema, nodes, edges)
    metapaths = [Metapath(id="UIIU", node_types=("U", "I", "I", "U"),
                          edge_types=("ui", "ii", "ui"))]
    labels = {"user1": 0, "user2": 0, "user3": 1}
    return SyntheticDataset(graph=graph, metapaths=metapaths, labels=labels)


# ---------------------------------------------------------------------------
# Planted node-classification graph


def nodeclass_graph(seed: int = 0, n_per_type: int = 200, blocks: int = 4,
                    user_dim: int = 8, item_dim: int = 6,
                    edges_per_user: int = 6, intra_p: float = 0.9,
                    noise: float = 0.1) -> SyntheticDataset:
    """Block-structured user/item graph; user labels are their blocks.

    Attributes are the block mean plus Gaussian noise, so blocks are
    recoverable from neighbor attributes alone.
    """
    if blocks > item_dim or 2 * blocks > user_dim:
        raise ValueError("feature dims too small for the block count")
    rng = derive_rng(seed, "synth-nodeclass")
    schema = Schema.from_dict({
        "node_types": [{"name": "U", "feature_dim": user_dim},
                       {"name": "I", "feature_dim": item_dim}],
        "edge_types": [{"name": "ui", "src": "U", "dst": "I", "undirected": True}],
    })

    def block_of(idx: int) -> int:
        return idx * blocks // n_per_type

    u_means = np.zeros((blocks, user_dim))
    i_means = np.zeros((blocks, item_dim))
    for b in range(blocks):
        u_means[b, 2 * b] = 1.0
        u_means[b, 2 * b + 1] = 0.5
        i_means[b, b] = 1.0

    nodes = []
    labels = {}
    for j in range(n_per_type):
        b = block_of(j)
        nodes.append((f"u{j}", "U", u_means[b] + noise * rng.standard_normal(user_dim)))
        labels[f"u{j}"] = b
    for j in range(n_per_type):
        b = block_of(j)
        nodes.append((f"i{j}", "I", i_means[b] + noise * rng.standard_normal(item_dim)))

    items_by_block = [[j for j in range(n_per_type) if block_of(j) == b]
                      for b in range(blocks)]
    edges = []
    item_degree = np.zeros(n_per_type, dtype=int)
    for j in range(n_per_type):
        b = block_of(j)
        chosen: set[int] = set()
        for _ in range(edges_per_user * 4):
            if len(chosen) == edges_per_user:
                break
            if rng.random() < intra_p:
                pool = items_by_block[b]
                cand = int(pool[int(rng.integers(len(pool)))])
            else:
                cand = int(rng.integers(n_per_type))
            chosen.add(cand)
        for cand in sorted(chosen):
            edges.append((f"u{j}", f"i{cand}", "ui"))
            item_degree[cand] += 1
    for j in range(n_per_type):
        if item_degree[j] == 0:
            b = block_of(j)
            users = [k for k in range(n_per_type) if block_of(k) == b]
            u = users[int(rng.integers(len(users)))]
            edges.append((f"u{u}", f"i{j}", "ui"))

    graph = build_graph(schema, nodes, edges)
    metapaths = [
        Metapath(id="UIU", node_types=("U", "I", "U"), edge_types=("ui", "ui")),
        Metapath(id="IUI", node_types=("I", "U", "I"), edge_types=("ui", "ui")),
    ]
    return SyntheticDataset(graph=graph, metapaths=metapaths, labels=labels,
                            notes={"blocks": blocks})


# ---------------------------------------------------------------------------
# Planted link-prediction graph


def linkpred_graph(seed: int = 0, n_per_type: int = 300, blocks: int = 2,
                   micro_per_block: int = 12, p_micro: float = 0.88,
                   p_block: float = 0.10, mean_degree: int = 6,
                   ii_degree: int = 5, weight_sigma: float = 0.5,
                   test_fraction: float = 0.15, noise: float = 0.3,
                   attr_scale: float = 4.0) -> SyntheticDataset:
    """Bipartite user/item blocks with micro-communities and an item
    similarity relation.

    The two macro blocks are nearly disconnected; inside each one, users and
    items cluster into micro-communities (most u-i and i-i edges stay within
    one). Items carry a noisy scaled one-hot of their micro-community, users
    carry no attributes. Degrees follow lognormal weights. A test_fraction
    of u-i edges is held out, never orphaning an endpoint; metapaths land
    user and item embeddings in the same item-derived space.
    """
    rng = derive_rng(seed, "synth-linkpred")
    total_micro = blocks * micro_per_block
    schema = Schema.from_dict({
        "node_types": [{"name": "U", "feature_dim": None},
                       {"name": "I", "feature_dim": total_micro}],
        "edge_types": [{"name": "ui", "src": "U", "dst": "I", "undirected": True},
                       {"name": "ii", "src": "I", "dst": "I", "undirected": True}],
    })

    def micro_of(idx: int) -> int:
        return idx * total_micro // n_per_type

    def block_of(idx: int) -> int:
        return micro_of(idx) // micro_per_block

    u_w = rng.lognormal(0.0, weight_sigma, size=n_per_type)
    i_w = rng.lognormal(0.0, weight_sigma, size=n_per_type)
    items_by_micro = [np.array([j for j in range(n_per_type) if micro_of(j) == m])
                      for m in range(total_micro)]
    items_by_block = [np.array([j for j in range(n_per_type) if block_of(j) == b])
                      for b in range(blocks)]
    pm = [i_w[ix] / i_w[ix].sum() for ix in items_by_micro]
    pb = [i_w[ix] / i_w[ix].sum() for ix in items_by_block]

    def draw_item(j: int) -> int:
        r = rng.random()
        if r < p_micro:
            pool, pr = items_by_micro[micro_of(j)], pm[micro_of(j)]
        elif r < p_micro + p_block:
            pool, pr = items_by_block[block_of(j)], pb[block_of(j)]
        else:
            other = (block_of(j) + 1) % blocks
            pool, pr = items_by_block[other], pb[other]
        return int(pool[rng.choice(pool.size, p=pr)])

    ui_set: set[tuple[int, int]] = set()
    for j in range(n_per_type):
        want = int(np.clip(round(mean_degree * u_w[j] / u_w.mean()), 2, 4 * mean_degree))
        got = 0
        for _ in range(want * 8):
            if got >= want:
                break
            cand = draw_item(j)
            if (j, cand) not in ui_set:
                ui_set.add((j, cand))
                got += 1
    item_deg: dict[int, int] = {}
    for _, i in ui_set:
        item_deg[i] = item_deg.get(i, 0) + 1
    for j in range(n_per_type):
        if item_deg.get(j, 0) == 0:
            pool = items_by_micro[micro_of(j)]
            ui_set.add((int(pool[int(rng.integers(pool.size))]), j))

    ii_set: set[tuple[int, int]] = set()
    for j in range(n_per_type):
        got = 0
        for _ in range(ii_degree * 8):
            if got >= ii_degree:
                break
            cand = draw_item(j)
            if cand != j and (j, cand) not in ii_set and (cand, j) not in ii_set:
                ii_set.add((j, cand))
                got += 1

    all_ui = sorted(ui_set)
    order = np.arange(len(all_ui))
    rng.shuffle(order)
    u_deg: dict[int, int] = {}
    i_deg: dict[int, int] = {}
    for u, i in all_ui:
        u_deg[u] = u_deg.get(u, 0) + 1
        i_deg[i] = i_deg.get(i, 0) + 1
    n_test = int(round(test_fraction * len(all_ui)))
    test_idx = set()
    for pos in order:
        if len(test_idx) == n_test:
            break
        u, i = all_ui[pos]
        if u_deg[u] > 1 and i_deg[i] > 1:
            test_idx.add(int(pos))
            u_deg[u] -= 1
            i_deg[i] -= 1

    def item_feat(j: int) -> np.ndarray:
        v = np.zeros(total_micro)
        v[micro_of(j)] = attr_scale
        return v + noise * rng.standard_normal(total_micro)

    nodes = [(f"u{j}", "U", None) for j in range(n_per_type)]
    nodes += [(f"i{j}", "I", item_feat(j)) for j in range(n_per_type)]
    train_edges = [(f"u{u}", f"i{i}", "ui")
                   for pos, (u, i) in enumerate(all_ui) if pos not in test_idx]
    train_edges += [(f"i{a}", f"i{b}", "ii") for a, b in sorted(ii_set)]
    test_edges = [(f"u{u}", f"i{i}", "ui")
                  for pos, (u, i) in enumerate(all_ui) if pos in test_idx]
    graph = build_graph(schema, nodes, train_edges)
    metapaths = [
        Metapath(id="UII", node_types=("U", "I", "I"), edge_types=("ui", "ii")),
        Metapath(id="III", node_types=("I", "I", "I"), edge_types=("ii", "ii")),
    ]
    return SyntheticDataset(graph=graph, metapaths=metapaths,
                            test_edges=test_edges,
                            notes={"blocks": blocks, "micro_per_block": micro_per_block,
                                   "target_edge_type": "ui"})


# ---------------------------------------------------------------------------
# Complementary two-factor graph


def multisem_graph(seed: int = 0, n_per_type: int = 135, levels: int = 3,
                   edges_per_user: int = 4, test_fraction: float = 0.25,
                   noise_p: float = 0.05,
                   attr_scale: float = 4.0) -> SyntheticDataset:
    """Users/items with independent genre and brand factors behind hub nodes.

    A u-i edge is planted only between nodes agreeing on BOTH factors (plus
    a little noise). Genre metapaths (via G hubs) reveal one factor, brand
    metapaths (via B hubs) the other, so either family alone sees half the
    signal. Only the hub nodes carry attributes (a scaled one-hot of their
    own level), keeping each factor's evidence inside its own relation.
    """
    rng = derive_rng(seed, "synth-multisem")
    schema = Schema.from_dict({
        "node_types": [{"name": "U", "feature_dim": None},
                       {"name": "I", "feature_dim": None},
                       {"name": "G", "feature_dim": levels},
                       {"name": "B", "feature_dim": levels}],
        "edge_types": [{"name": "ug", "src": "U", "dst": "G", "undirected": True},
                       {"name": "ig", "src": "I", "dst": "G", "undirected": True},
                       {"name": "ub", "src": "U", "dst": "B", "undirected": True},
                       {"name": "ib", "src": "I", "dst": "B", "undirected": True},
                       {"name": "ui", "src": "U", "dst": "I", "undirected": True}],
    })

    def factors(idx: int) -> tuple[int, int]:
        return idx % levels, (idx // levels) % levels

    def hub_feat(level: int) -> np.ndarray:
        v = np.zeros(levels)
        v[level] = attr_scale
        return v

    nodes = [(f"u{j}", "U", None) for j in range(n_per_type)]
    nodes += [(f"i{j}", "I", None) for j in range(n_per_type)]
    nodes += [(f"g{k}", "G", hub_feat(k)) for k in range(levels)]
    nodes += [(f"b{k}", "B", hub_feat(k)) for k in range(levels)]

    edges = []
    for j in range(n_per_type):
        g, b = factors(j)
        edges.append((f"u{j}", f"g{g}", "ug"))
        edges.append((f"u{j}", f"b{b}", "ub"))
        edges.append((f"i{j}", f"g{g}", "ig"))
        edges.append((f"i{j}", f"b{b}", "ib"))

    pools: dict[tuple[int, int], list[int]] = {}
    for k in range(n_per_type):
        pools.setdefault(factors(k), []).append(k)
    ui_edges: set[tuple[int, int]] = set()
    for j in range(n_per_type):
        pool = pools[factors(j)]
        want = min(edges_per_user, len(pool))
        got = 0
        while got < want:
            cand = (j, int(pool[int(rng.integers(len(pool)))]))
            if cand not in ui_edges:
                ui_edges.add(cand)
                got += 1
        if rng.random() < noise_p:
            ui_edges.add((j, int(rng.integers(n_per_type))))

    ui_sorted = sorted(ui_edges)
    order = np.arange(len(ui_sorted))
    rng.shuffle(order)
    n_test = int(round(test_fraction * len(ui_sorted)))
    test_idx = set(order[:n_test].tolist())
    edges += [(f"u{u}", f"i{i}", "ui")
              for pos, (u, i) in enumerate(ui_sorted) if pos not in test_idx]
    test_edges = [(f"u{u}", f"i{i}", "ui")
                  for pos, (u, i) in enumerate(ui_sorted) if pos in test_idx]

    graph = build_graph(schema, nodes, edges)
    metapaths = [
        Metapath(id="UGI", node_types=("U", "G", "I"), edge_types=("ug", "ig")),
        Metapath(id="IGU", node_types=("I", "G", "U"), edge_types=("ig", "ug")),
        Metapath(id="UBI", node_types=("U", "B", "I"), edge_types=("ub", "ib")),
        Metapath(id="IBU", node_types=("I", "B", "U"), edge_types=("ib", "ub")),
    ]
    return SyntheticDataset(graph=graph, metapaths=metapaths,
                            test_edges=test_edges,
                            notes={"target_edge_type": "ui",
                                   "channels": {"genre": ["UGI", "IGU"],
                                                "brand": ["UBI", "IBU"]}})


def make(kind: str, seed: int = 0, **kwargs) -> SyntheticDataset:
    if kind == "toy":
        return toy_graph()
    if kind == "nodeclass":
        return nodeclass_graph(seed=seed, **kwargs)
    if kind == "linkpred":
        return linkpred_graph(seed=seed, **kwargs)
    if kind == "multisem":
        return multisem_graph(seed=seed, **kwargs)
    raise ValueError(f"unknown synthetic kind {kind!r}; known: {', '.join(KINDS)}")
