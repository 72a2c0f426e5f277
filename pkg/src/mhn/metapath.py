"""Metapaths: definitions, instance sampling, BFS/DFS neighbor extraction,
and automatic generation with scoring.

An instance is sampled step by step: from the current node, the walk picks
uniformly among neighbors reachable via the required edge type that carry
the required next node type. Dead-end walks are discarded and retried, never
backtracked. All randomness flows through numpy Generators so that a fixed
seed reproduces every sample bit for bit.
"""

from __future__ import annotations

import json
import logging
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hetgraph import HeteroGraph, Schema

logger = logging.getLogger(__name__)

Instance = tuple[int, ...]


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent RNG stream keyed by (seed, *keys); strings are hashed.

    Streams depend only on their key, so work split across any number of
    workers reproduces the single-worker result.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for k in keys:
        entropy.append(int(k) & 0xFFFFFFFF if isinstance(k, (int, np.integer))
                       else zlib.crc32(str(k).encode("utf-8")))
    return np.random.default_rng(entropy)


@dataclass(frozen=True)
class Metapath:
    """Alternating node/edge type pattern: A_1 -R_1-> A_2 ... -R_l-> A_{l+1}."""

    id: str
    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]

    def __post_init__(self):
        if len(self.node_types) < 2:
            raise ValueError(f"metapath {self.id!r}: needs at least 2 node types")
        if len(self.edge_types) != len(self.node_types) - 1:
            raise ValueError(f"metapath {self.id!r}: "
                             f"{len(self.node_types)} node types need "
                             f"{len(self.node_types) - 1} edge types")

    @property
    def length(self) -> int:
        return len(self.node_types)

    def validate_against(self, schema: Schema) -> None:
        for i, et_name in enumerate(self.edge_types):
            try:
                et = schema.edge_type(et_name)
            except KeyError:
                raise ValueError(f"metapath {self.id!r}: unknown edge type "
                                 f"{et_name!r}") from None
            a, b = self.node_types[i], self.node_types[i + 1]
            if not schema.has_node_type(a) or not schema.has_node_type(b):
                raise ValueError(f"metapath {self.id!r}: unknown node type")
            if not et.matches(a, b):
                raise ValueError(
                    f"metapath {self.id!r}: step ({a}, {et_name}, {b}) does not "
                    f"match signature ({et.src}, {et.dst})")


def check_instance(graph: HeteroGraph, mp: Metapath, seq: Instance) -> None:
    """Raise if seq is not a valid instance of mp in graph."""
    if len(seq) != mp.length:
        raise ValueError(f"instance length {len(seq)} != metapath length {mp.length}")
    for pos, node in enumerate(seq):
        if graph.node_type(node) != mp.node_types[pos]:
            raise ValueError(f"instance node {graph.node_id(node)!r} at position "
                             f"{pos} has type {graph.node_type(node)!r}, "
                             f"expected {mp.node_types[pos]!r}")
    for i, et in enumerate(mp.edge_types):
        if seq[i + 1] not in graph.neighbors(seq[i], et):
            raise ValueError(f"no {et!r} edge between positions {i} and {i + 1}")


@dataclass(frozen=True)
class NeighborSample:
    """BFS and DFS neighbor sets of one node under one metapath."""

    node: int
    metapath_id: str
    bfs: tuple[int, ...]
    dfs: tuple[int, ...]
    instances: tuple[Instance, ...]

    @property
    def active(self) -> bool:
        return bool(self.instances)


# ---------------------------------------------------------------------------
# Sampling


def _step_candidates(graph: HeteroGraph, node: int, edge_type: str,
                     want_type: str) -> list[int]:
    return [v for v in graph.neighbors(node, edge_type)
            if graph.node_type_names[v] == want_type]


def sample_instances(graph: HeteroGraph, u: int | str, mp: Metapath,
                     n_instances: int, max_retries: int,
                     rng: np.random.Generator) -> list[Instance]:
    """Draw up to n_instances walk instances of mp starting at u.

    Each step picks uniformly among type-compatible neighbors; walks that
    dead-end are dropped. At most max_retries walks are attempted in total,
    so fewer (possibly zero) instances may come back. Duplicates are kept.
    """
    u = graph.resolve(u)
    if graph.node_type(u) != mp.node_types[0]:
        raise ValueError(f"node {graph.node_id(u)!r} has type "
                         f"{graph.node_type(u)!r}; metapath {mp.id!r} starts at "
                         f"{mp.node_types[0]!r}")
    out: list[Instance] = []
    attempts = 0
    while len(out) < n_instances and attempts < max_retries:
        attempts += 1
        seq = [u]
        for i, et in enumerate(mp.edge_types):
            cands = _step_candidates(graph, seq[-1], et, mp.node_types[i + 1])
            if not cands:
                break
            seq.append(cands[int(rng.integers(len(cands)))])
        else:
            out.append(tuple(seq))
    return out


def bfs_neighbors(instances: list[Instance], u: int) -> tuple[int, ...]:
    """Nodes adjacent to u within its instances: the set of second nodes.

    Excludes u itself; empty when there are no instances.
    """
    return tuple(sorted({seq[1] for seq in instances if seq[1] != u}))


def dfs_neighbors(instances: list[Instance], u: int, rng: np.random.Generator,
                  draws: int = 1) -> tuple[int, ...]:
    """Nodes of one randomly chosen instance, with its first two dropped.

    ``draws > 1`` unions several independent choices. Empty instance list
    (or length-2 metapaths) yields the empty set.
    """
    if not instances:
        return ()
    nodes: set[int] = set()
    for _ in range(max(1, draws)):
        seq = instances[int(rng.integers(len(instances)))]
        nodes.update(seq[2:])
    return tuple(sorted(nodes))


def sample_neighborhood(graph: HeteroGraph, u: int | str, mp: Metapath,
                        n_instances: int, max_retries: int,
                        rng: np.random.Generator,
                        dfs_draws: int = 1) -> NeighborSample:
    """One (node, metapath) sampling round: instances plus BFS/DFS sets."""
    u = graph.resolve(u)
    instances = sample_instances(graph, u, mp, n_instances, max_retries, rng)
    return NeighborSample(
        node=u,
        metapath_id=mp.id,
        bfs=bfs_neighbors(instances, u),
        dfs=dfs_neighbors(instances, u, rng, draws=dfs_draws),
        instances=tuple(instances),
    )


# ---------------------------------------------------------------------------
# Automatic generation


RULE_NAMES = ("all-types-present", "starts-with", "ends-with", "max-length", "palindrome")


def parse_rules(specs: list[str]) -> list[tuple[str, str | None]]:
    """Parse rule strings such as 'starts-with=U' or 'all-types-present'."""
    rules = []
    for spec in specs:
        name, _, arg = spec.partition("=")
        name = name.strip()
        if name not in RULE_NAMES:
            raise ValueError(f"unknown rule {name!r}; known: {', '.join(RULE_NAMES)}")
        rules.append((name, arg.strip() if arg else None))
    return rules


def _rule_accepts(rule: tuple[str, str | None], node_types: tuple[str, ...],
                  all_type_names: tuple[str, ...]) -> bool:
    name, arg = rule
    if name == "all-types-present":
        return set(all_type_names) <= set(node_types)
    if name == "starts-with":
        return node_types[0] == arg
    if name == "ends-with":
        return node_types[-1] == arg
    if name == "max-length":
        return len(node_types) <= int(arg)
    if name == "palindrome":
        return node_types == node_types[::-1]
    raise ValueError(f"unknown rule {name!r}")


def score_metapath(c: int, count_u: int, count_v: int) -> float:
    """ln(instance count) divided by the occurrence-count ratio count_u/count_v."""
    if c < 1:
        raise ValueError(f"instance count must be >= 1, got {c}")
    if count_u < 1 or count_v < 1:
        raise ValueError("occurrence counts must be >= 1")
    return float(np.log(c) / (count_u / count_v))


@dataclass
class MetapathScore:
    metapath: Metapath
    instance_count: int
    type_counts: dict[str, int] = field(default_factory=dict)
    score: float = 0.0


def _assign_ids(candidates: list[tuple[tuple[str, ...], tuple[str, ...]]]) -> list[str]:
    """Readable ids from node-type sequences; edge-type variants get #k suffixes."""
    by_base: dict[str, list[int]] = {}
    bases = []
    for i, (node_types, _) in enumerate(candidates):
        sep = "" if all(len(t) == 1 for t in node_types) else "-"
        base = sep.join(node_types)
        bases.append(base)
        by_base.setdefault(base, []).append(i)
    ids = [""] * len(candidates)
    for base, idxs in by_base.items():
        idxs = sorted(idxs, key=lambda i: candidates[i][1])
        for rank, i in enumerate(idxs):
            ids[i] = base if rank == 0 else f"{base}#{rank + 1}"
    return ids


def generate_metapaths(graph: HeteroGraph, walk_len: int, walks_per_node: int,
                       rules: list[str], num_type: str, den_type: str,
                       top_k: int, seed: int = 0) -> list[MetapathScore]:
    """Three-stage metapath generation: walk, filter, score.

    Stage 1 runs unconstrained random walks (walk_len nodes, walks_per_node
    per start node) and records the type sequence of every walk prefix of
    two or more nodes, so patterns shorter than the walk length are
    candidates too. Stage 2 collapses duplicates and applies the named rule
    filters. Stage 3 scores survivors by ln(instances) /
    (count(num_type)/count(den_type)) and returns the top_k, ties broken
    lexicographically by metapath id.
    """
    if walk_len < 2:
        raise ValueError(f"walk_len must be >= 2, got {walk_len}")
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    for tname in (num_type, den_type):
        if not graph.schema.has_node_type(tname):
            raise ValueError(f"scoring type {tname!r} not in schema")
    parsed_rules = parse_rules(rules)
    type_names = tuple(t.name for t in graph.schema.node_types)

    counts: Counter[tuple[tuple[str, ...], tuple[str, ...]]] = Counter()
    for gid in range(graph.num_nodes):
        for w in range(walks_per_node):
            rng = derive_rng(seed, "genwalk", gid, w)
            node = gid
            ntypes = [graph.node_type_names[node]]
            etypes: list[str] = []
            while len(ntypes) < walk_len:
                options = [(et.name, v) for et in graph.schema.edge_types
                           for v in graph.neighbors(node, et.name)]
                if not options:
                    break
                et_name, node = options[int(rng.integers(len(options)))]
                etypes.append(et_name)
                ntypes.append(graph.node_type_names[node])
            for k in range(2, len(ntypes) + 1):
                counts[(tuple(ntypes[:k]), tuple(etypes[:k - 1]))] += 1

    survivors = [(key, c) for key, c in counts.items()
                 if all(_rule_accepts(r, key[0], type_names) for r in parsed_rules)]
    ids = _assign_ids([key for key, _ in survivors])
    scored: list[MetapathScore] = []
    for ((node_types, edge_types), c), mp_id in zip(survivors, ids):
        cu = node_types.count(num_type)
        cv = node_types.count(den_type)
        if cu == 0 or cv == 0:
            logger.debug("skipping %s: scoring types absent", mp_id)
            continue
        mp = Metapath(id=mp_id, node_types=node_types, edge_types=edge_types)
        mp.validate_against(graph.schema)
        scored.append(MetapathScore(metapath=mp, instance_count=c,
                                    type_counts={num_type: cu, den_type: cv},
                                    score=score_metapath(c, cu, cv)))

    if not scored:
        logger.warning("no metapath survived rule filtering")
        return []
    scored.sort(key=lambda s: (-s.score, s.metapath.id))
    return scored[:top_k]


# ---------------------------------------------------------------------------
# File I/O


def load_metapaths(path: str | Path, schema: Schema | None = None) -> list[Metapath]:
    path = Path(path)
    try:
        entries = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    out = []
    for entry in entries:
        mp = Metapath(id=entry["id"], node_types=tuple(entry["node_types"]),
                      edge_types=tuple(entry["edge_types"]))
        if schema is not None:
            mp.validate_against(schema)
        out.append(mp)
    ids = [mp.id for mp in out]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate metapath ids")
    return out


def write_metapaths(items: list[Metapath] | list[MetapathScore], path: str | Path) -> None:
    entries = []
    for item in items:
        if isinstance(item, MetapathScore):
            mp, score = item.metapath, item.score
        else:
            mp, score = item, None
        entry = {"id": mp.id, "node_types": list(mp.node_types),
                 "edge_types": list(mp.edge_types)}
        if score is not None:
            entry["score"] = score
            entry["instances"] = item.instance_count
        entries.append(entry)
    Path(path).write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
