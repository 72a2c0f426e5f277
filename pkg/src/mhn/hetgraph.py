"""Typed-graph data model plus TSV/JSON ingestion and validation.

File formats (UTF-8, ``#`` comment lines and blank lines ignored):

* ``nodes.tsv``  -- ``node_id<TAB>node_type[<TAB>f1,f2,...,fk]``
* ``edges.tsv``  -- ``src_id<TAB>dst_id<TAB>edge_type``
* ``schema.json`` -- node types (with optional ``feature_dim``) and edge
  types carrying a ``{src, dst, undirected}`` signature
* ``labels.tsv`` -- ``node_id<TAB>class_id``

Node ids are opaque strings; dense integer indices are assigned globally in
order of first appearance (and per type, in the same order). Graphs are
immutable once loaded and safe to share across workers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """A graph/schema/label file violates its format or referential rules."""


@dataclass(frozen=True)
class NodeType:
    name: str
    index: int
    feature_dim: int | None = None


@dataclass(frozen=True)
class EdgeType:
    name: str
    index: int
    src: str
    dst: str
    undirected: bool = True

    def matches(self, src_type: str, dst_type: str) -> bool:
        if (src_type, dst_type) == (self.src, self.dst):
            return True
        return self.undirected and (src_type, dst_type) == (self.dst, self.src)


@dataclass(frozen=True)
class Schema:
    node_types: tuple[NodeType, ...]
    edge_types: tuple[EdgeType, ...]

    def __post_init__(self):
        names = [t.name for t in self.node_types]
        if len(set(names)) != len(names):
            raise GraphFormatError("duplicate node type names in schema")
        enames = [t.name for t in self.edge_types]
        if len(set(enames)) != len(enames):
            raise GraphFormatError("duplicate edge type names in schema")
        known = set(names)
        for et in self.edge_types:
            if et.src not in known or et.dst not in known:
                raise GraphFormatError(
                    f"edge type {et.name!r} references unknown node type")

    def node_type(self, name: str) -> NodeType:
        for t in self.node_types:
            if t.name == name:
                return t
        raise KeyError(f"unknown node type {name!r}")

    def edge_type(self, name: str) -> EdgeType:
        for t in self.edge_types:
            if t.name == name:
                return t
        raise KeyError(f"unknown edge type {name!r}")

    def has_node_type(self, name: str) -> bool:
        return any(t.name == name for t in self.node_types)

    def to_dict(self) -> dict:
        return {
            "node_types": [
                {"name": t.name, "feature_dim": t.feature_dim} for t in self.node_types
            ],
            "edge_types": [
                {"name": t.name, "src": t.src, "dst": t.dst, "undirected": t.undirected}
                for t in self.edge_types
            ],
        }

    @staticmethod
    def from_dict(obj: dict) -> "Schema":
        try:
            node_types = tuple(
                NodeType(name=nt["name"], index=i, feature_dim=nt.get("feature_dim"))
                for i, nt in enumerate(obj["node_types"])
            )
            edge_types = tuple(
                EdgeType(name=et["name"], index=i, src=et["src"], dst=et["dst"],
                         undirected=bool(et.get("undirected", True)))
                for i, et in enumerate(obj["edge_types"])
            )
        except (KeyError, TypeError) as exc:
            raise GraphFormatError(f"malformed schema: {exc}") from exc
        return Schema(node_types=node_types, edge_types=edge_types)


@dataclass(frozen=True)
class HeteroGraph:
    """Immutable typed graph with per-type attribute matrices.

    ``features[type]`` rows align with that type's per-type node order;
    types without attributes are absent from the mapping.
    """

    schema: Schema
    node_ids: tuple[str, ...]
    node_type_names: tuple[str, ...]
    type_members: dict[str, tuple[int, ...]]
    type_index_of: tuple[int, ...]
    features: dict[str, np.ndarray]
    edges: dict[str, tuple[tuple[int, int], ...]]
    _index: dict[str, int] = field(repr=False)
    _adj: dict[str, dict[int, tuple[int, ...]]] = field(repr=False)

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    def num_nodes_of(self, type_name: str) -> int:
        return len(self.type_members.get(type_name, ()))

    def index(self, node_id: str) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def node_id(self, idx: int) -> str:
        return self.node_ids[idx]

    def node_type(self, node: int | str) -> str:
        idx = node if isinstance(node, int) else self.index(node)
        return self.node_type_names[idx]

    def resolve(self, node: int | str) -> int:
        if isinstance(node, int):
            if not 0 <= node < self.num_nodes:
                raise KeyError(f"node index {node} out of range")
            return node
        return self.index(node)

    def neighbors(self, node: int | str, edge_type: str) -> list[int]:
        """Adjacent node indices via one edge type, sorted ascending.

        Parallel edges are kept, so a neighbor may repeat. Undirected edge
        types contribute both directions; directed ones only src->dst.
        """
        idx = self.resolve(node)
        if edge_type not in self._adj:
            raise KeyError(f"unknown edge type {edge_type!r}")
        return list(self._adj[edge_type].get(idx, ()))

    def features_of(self, node: int | str) -> np.ndarray | None:
        idx = self.resolve(node)
        mat = self.features.get(self.node_type_names[idx])
        if mat is None:
            return None
        return mat[self.type_index_of[idx]]

    def degree(self, node: int | str) -> int:
        idx = self.resolve(node)
        return sum(len(adj.get(idx, ())) for adj in self._adj.values())

    def has_edge(self, u: int, v: int) -> bool:
        """True if any edge type links u and v (either direction)."""
        for name, adj in self._adj.items():
            if v in adj.get(u, ()) or u in adj.get(v, ()):
                return True
        return False


def build_graph(schema: Schema,
                nodes: list[tuple[str, str, np.ndarray | None]],
                edges: list[tuple[str, str, str]],
                warn_homogeneous: bool = True) -> HeteroGraph:
    """Assemble and validate a graph from in-memory node/edge records.

    ``nodes`` holds (node_id, type_name, features-or-None) in file order;
    ``edges`` holds (src_id, dst_id, edge_type_name).
    """
    index: dict[str, int] = {}
    node_type_names: list[str] = []
    type_members: dict[str, list[int]] = {t.name: [] for t in schema.node_types}
    type_index_of: list[int] = []
    raw_feats: dict[str, list[np.ndarray]] = {}

    for node_id, type_name, feats in nodes:
        if node_id in index:
            raise GraphFormatError(f"duplicate node id {node_id!r}")
        if not schema.has_node_type(type_name):
            raise GraphFormatError(f"node {node_id!r} has unknown type {type_name!r}")
        nt = schema.node_type(type_name)
        if nt.feature_dim is None:
            if feats is not None:
                raise GraphFormatError(
                    f"node {node_id!r}: type {type_name!r} declares no features")
        else:
            if feats is None:
                raise GraphFormatError(
                    f"node {node_id!r}: type {type_name!r} requires "
                    f"{nt.feature_dim} features, none given")
            feats = np.asarray(feats, dtype=np.float64)
            if feats.shape != (nt.feature_dim,):
                raise GraphFormatError(
                    f"node {node_id!r}: expected {nt.feature_dim} features, "
                    f"got {feats.size}")
        gid = len(node_type_names)
        index[node_id] = gid
        node_type_names.append(type_name)
        type_index_of.append(len(type_members[type_name]))
        type_members[type_name].append(gid)
        if feats is not None:
            raw_feats.setdefault(type_name, []).append(feats)

    features = {name: np.stack(rows) for name, rows in raw_feats.items()}

    edge_lists: dict[str, list[tuple[int, int]]] = {t.name: [] for t in schema.edge_types}
    adj: dict[str, dict[int, list[int]]] = {t.name: {} for t in schema.edge_types}
    for src_id, dst_id, et_name in edges:
        try:
            et = schema.edge_type(et_name)
        except KeyError:
            raise GraphFormatError(f"edge ({src_id!r}, {dst_id!r}): "
                                   f"unknown edge type {et_name!r}") from None
        for endpoint in (src_id, dst_id):
            if endpoint not in index:
                raise GraphFormatError(
                    f"edge ({src_id!r}, {dst_id!r}, {et_name!r}): "
                    f"dangling endpoint {endpoint!r}")
        s, d = index[src_id], index[dst_id]
        st, dt = node_type_names[s], node_type_names[d]
        if not et.matches(st, dt):
            raise GraphFormatError(
                f"edge ({src_id!r}, {dst_id!r}): types ({st}, {dt}) do not match "
                f"signature ({et.src}, {et.dst}) of edge type {et_name!r}")
        edge_lists[et_name].append((s, d))
        adj[et_name].setdefault(s, []).append(d)
        if et.undirected:
            adj[et_name].setdefault(d, []).append(s)

    graph = HeteroGraph(
        schema=schema,
        node_ids=tuple(n[0] for n in nodes),
        node_type_names=tuple(node_type_names),
        type_members={k: tuple(v) for k, v in type_members.items()},
        type_index_of=tuple(type_index_of),
        features=features,
        edges={k: tuple(v) for k, v in edge_lists.items()},
        _index=index,
        _adj={name: {n: tuple(sorted(vs)) for n, vs in by_node.items()}
              for name, by_node in adj.items()},
    )
    if warn_homogeneous and len(schema.node_types) + len(schema.edge_types) <= 2:
        logger.warning(
            "graph has %d node type(s) and %d edge type(s); not heterogeneous",
            len(schema.node_types), len(schema.edge_types))
    return graph


# ---------------------------------------------------------------------------
# File I/O


def _data_lines(path: Path) -> list[tuple[int, str]]:
    out = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        out.append((lineno, line))
    return out


def load_schema(path: str | Path) -> Schema:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON: {exc}") from exc
    return Schema.from_dict(obj)


def load_graph(nodes_path: str | Path, edges_path: str | Path,
               schema: Schema) -> HeteroGraph:
    """Load and validate a graph from nodes.tsv / edges.tsv."""
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)

    nodes: list[tuple[str, str, np.ndarray | None]] = []
    for lineno, line in _data_lines(nodes_path):
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise GraphFormatError(
                f"{nodes_path}:{lineno}: expected 2 or 3 tab-separated fields")
        feats = None
        if len(parts) == 3 and parts[2]:
            try:
                feats = np.array([float(x) for x in parts[2].split(",")])
            except ValueError:
                raise GraphFormatError(
                    f"{nodes_path}:{lineno}: malformed feature list") from None
        nodes.append((parts[0], parts[1], feats))

    edges: list[tuple[str, str, str]] = []
    for lineno, line in _data_lines(edges_path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphFormatError(
                f"{edges_path}:{lineno}: expected 3 tab-separated fields")
        edges.append((parts[0], parts[1], parts[2]))

    try:
        return build_graph(schema, nodes, edges)
    except GraphFormatError as exc:
        raise GraphFormatError(f"{nodes_path.parent}: {exc}") from None


def load_graph_dir(graph_dir: str | Path, schema_path: str | Path | None = None) -> HeteroGraph:
    """Load nodes.tsv + edges.tsv + schema.json from one directory."""
    graph_dir = Path(graph_dir)
    schema = load_schema(schema_path if schema_path else graph_dir / "schema.json")
    return load_graph(graph_dir / "nodes.tsv", graph_dir / "edges.tsv", schema)


def write_graph(graph: HeteroGraph, nodes_path: str | Path, edges_path: str | Path) -> None:
    """Write the canonical in-memory form back to TSV (round-trips load_graph)."""
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for gid, node_id in enumerate(graph.node_ids):
            tname = graph.node_type_names[gid]
            feats = graph.features_of(gid)
            if feats is None:
                fh.write(f"{node_id}\t{tname}\n")
            else:
                fh.write(f"{node_id}\t{tname}\t{','.join(repr(float(x)) for x in feats)}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for et in graph.schema.edge_types:
            for s, d in graph.edges[et.name]:
                fh.write(f"{graph.node_ids[s]}\t{graph.node_ids[d]}\t{et.name}\n")


def write_schema(schema: Schema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_edge_list(path: str | Path, graph: HeteroGraph) -> list[tuple[int, int, str]]:
    """Read an edges.tsv-format file into (src_idx, dst_idx, edge_type) rows.

    Endpoints must exist in the graph; used for held-out edge sets.
    """
    path = Path(path)
    out = []
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        src, dst, et = parts
        try:
            graph.schema.edge_type(et)
        except KeyError:
            raise GraphFormatError(f"{path}:{lineno}: unknown edge type {et!r}") from None
        try:
            out.append((graph.index(src), graph.index(dst), et))
        except KeyError as exc:
            raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# Labels


@dataclass(frozen=True)
class LabelTable:
    """Node index -> dense class id in 0..num_classes-1."""

    labels: dict[int, int]
    num_classes: int

    def __post_init__(self):
        seen = set(self.labels.values())
        if seen and (min(seen) < 0 or max(seen) >= self.num_classes):
            raise GraphFormatError("class ids out of range")

    @property
    def nodes(self) -> list[int]:
        return sorted(self.labels)


def load_labels(path: str | Path, graph: HeteroGraph) -> LabelTable:
    path = Path(path)
    labels: dict[int, int] = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 2 tab-separated fields")
        node_id, cls_str = parts
        try:
            idx = graph.index(node_id)
        except KeyError:
            raise GraphFormatError(
                f"{path}:{lineno}: label for unknown node {node_id!r}") from None
        try:
            cls = int(cls_str)
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: class id must be an integer") from None
        if idx in labels:
            raise GraphFormatError(f"{path}:{lineno}: duplicate label for {node_id!r}")
        labels[idx] = cls
    classes = sorted(set(labels.values()))
    if classes != list(range(len(classes))):
        raise GraphFormatError(f"{path}: class ids must be dense 0..C-1, got {classes}")
    return LabelTable(labels=labels, num_classes=len(classes))


def write_labels(labels: dict[str, int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node_id, cls in labels.items():
            fh.write(f"{node_id}\t{cls}\n")


# ---------------------------------------------------------------------------
# Validation report


@dataclass
class ValidationReport:
    node_counts: dict[str, int]
    edge_counts: dict[str, int]
    heterogeneous: bool
    isolated_nodes: int
    warnings: list[str]

    def summary(self) -> str:
        lines = ["nodes:"]
        lines += [f"  {name}: {n}" for name, n in self.node_counts.items()]
        lines.append("edges:")
        lines += [f"  {name}: {n}" for name, n in self.edge_counts.items()]
        lines.append(f"heterogeneous: {'yes' if self.heterogeneous else 'NO'}")
        lines.append(f"isolated nodes: {self.isolated_nodes}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


def validate(graph: HeteroGraph) -> ValidationReport:
    """Structural summary: counts, heterogeneity check, isolated nodes."""
    node_counts = {t.name: graph.num_nodes_of(t.name) for t in graph.schema.node_types}
    edge_counts = {t.name: len(graph.edges[t.name]) for t in graph.schema.edge_types}
    hetero = len(graph.schema.node_types) + len(graph.schema.edge_types) > 2
    isolated = sum(1 for gid in range(graph.num_nodes) if graph.degree(gid) == 0)
    warnings = []
    if not hetero:
        warnings.append("fewer than three node+edge types; graph is not heterogeneous")
    if isolated:
        warnings.append(f"{isolated} isolated node(s)")
    return ValidationReport(node_counts=node_counts, edge_counts=edge_counts,
                            heterogeneous=hetero, isolated_nodes=isolated,
                            warnings=warnings)
