"""The metapath-guided embedding model.

A node's embedding is assembled in four stages: (1) a base embedding mixing
an id-lookup row with a type-specific linear projection of attributes;
(2) per metapath, BFS and DFS neighbor sets are encoded (mean, weighted or
nonlinear encoder) and fused by a two-way attention over the target's base
embedding; (3) the per-metapath vectors are merged, either by query-vector
attention or by multi-head self-attention with row-mean collapse; (4) a
nonlinear output layer produces the final vector.

Only stages that touch sampled neighborhoods are stochastic; passing a
precomputed sample map makes the whole forward pass deterministic, which is
what the training loop (fresh samples each epoch) and the gradient checker
(frozen samples) both rely on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffgrad as dg
from .diffgrad import Tensor
from .hetgraph import HeteroGraph
from .metapath import Metapath, NeighborSample, derive_rng, sample_neighborhood

ENCODERS = ("mean", "weighted", "nonlinear")
NONLINEARITIES = ("sigmoid", "relu")
FUSION_MODES = ("metapath-attention", "multi-head-self-attention")


class UnreachableNodeError(RuntimeError):
    """No metapath produced any instance for the node."""


@dataclass
class ModelConfig:
    embedding_dim: int = 200
    encoder: str = "mean"
    nonlinearity: str = "sigmoid"
    fusion: str = "metapath-attention"
    heads: int = 8
    n_instances: int = 10
    max_retries: int = 50
    dfs_draws: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.embedding_dim <= 0:
            raise ValueError(f"embedding_dim must be positive, got {self.embedding_dim}")
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {NONLINEARITIES}")
        if self.fusion not in FUSION_MODES:
            raise ValueError(f"fusion must be one of {FUSION_MODES}")
        if self.fusion == "multi-head-self-attention":
            if self.heads < 1 or self.embedding_dim % self.heads != 0:
                raise ValueError(
                    f"head count {self.heads} must divide embedding_dim "
                    f"{self.embedding_dim}")
        if self.n_instances < 1:
            raise ValueError("n_instances must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(obj: dict) -> "ModelConfig":
        known = {k: v for k, v in obj.items() if k in ModelConfig.__dataclass_fields__}
        cfg = ModelConfig(**known)
        cfg.validate()
        return cfg


def glorot(rng: np.random.Generator, shape: tuple[int, ...],
           fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class ModelParams:
    """Named trainable tensors; creation order is fixed for determinism."""

    def __init__(self, tensors: dict[str, Tensor]):
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def add(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, name=name)
        self.tensors[name] = t
        return t

    def names(self) -> list[str]:
        return list(self.tensors)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, arr in snap.items():
            self.tensors[k].data = arr.copy()

    @staticmethod
    def init(graph: HeteroGraph, metapaths: Sequence[Metapath],
             config: ModelConfig) -> "ModelParams":
        d = config.embedding_dim
        rng = derive_rng(config.seed, "init")
        params = ModelParams({})
        n = graph.num_nodes
        params.add("embed.table", glorot(rng, (n, d), n, d))
        for nt in graph.schema.node_types:
            if nt.feature_dim is not None:
                params.add(f"attr.{nt.name}",
                           glorot(rng, (d, nt.feature_dim), nt.feature_dim, d))
        if config.encoder == "nonlinear":
            for mp in metapaths:
                params.add(f"enc.{mp.id}", glorot(rng, (d, d), d, d))
        if config.fusion == "metapath-attention":
            params.add("fusion.q", glorot(rng, (d,), d, 1))
        else:
            dk = d // config.heads
            for k in range(config.heads):
                params.add(f"fusion.h{k}.q", glorot(rng, (d, dk), d, dk))
                params.add(f"fusion.h{k}.k", glorot(rng, (d, dk), d, dk))
                params.add(f"fusion.h{k}.v", glorot(rng, (d, dk), d, dk))
        params.add("out.w", glorot(rng, (d, d), d, d))
        return params


@dataclass
class MetapathTrace:
    vector: np.ndarray | None
    alpha: tuple[float, float] | None
    bfs: tuple[int, ...]
    dfs: tuple[int, ...]
    active: bool


@dataclass
class ForwardTrace:
    node: int
    per_metapath: dict[str, MetapathTrace] = field(default_factory=dict)
    beta: dict[str, float] | None = None
    head_attention: list[np.ndarray] | None = None
    z: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Stage functions


def _nonlin(t: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        return dg.sigmoid(t)
    if kind == "relu":
        return dg.relu(t)
    raise ValueError(f"unknown nonlinearity {kind!r}")


def encode_neighbors(neighbor_vecs: Sequence[Tensor], h_u: Tensor, kind: str,
                     weight: Tensor | None = None,
                     nonlinearity: str = "sigmoid") -> Tensor:
    """Summarize a neighbor set into one vector.

    mean: plain average. weighted: softmax over target/neighbor dot products,
    then the weighted sum. nonlinear: mean pool, linear map, nonlinearity.
    An empty set encodes to the zero vector.
    """
    if not neighbor_vecs:
        return Tensor(np.zeros(h_u.shape[0]))
    stacked = dg.stack_rows(neighbor_vecs)
    if kind == "mean":
        return dg.mean_rows(stacked)
    if kind == "weighted":
        scores = dg.matmul(stacked, h_u)
        w = dg.softmax(scores)
        return dg.matmul(dg.transpose(stacked), w)
    if kind == "nonlinear":
        if weight is None:
            raise ValueError("nonlinear encoder needs its weight matrix")
        return _nonlin(dg.matmul(weight, dg.mean_rows(stacked)), nonlinearity)
    raise ValueError(f"unknown encoder {kind!r}")


def fuse_bfs_dfs(h_u: Tensor, h_bfs: Tensor, h_dfs: Tensor) -> tuple[Tensor, Tensor]:
    """Attention over the (BFS, DFS) pair conditioned on the target node."""
    logits = dg.concat([dg.dot(h_u, h_bfs), dg.dot(h_u, h_dfs)])
    alpha = dg.softmax(logits)
    pair = dg.stack_rows([h_bfs, h_dfs])
    return dg.matmul(dg.transpose(pair), alpha), alpha


def aggregate_metapaths(vectors: Sequence[Tensor], q: Tensor) -> tuple[Tensor, Tensor]:
    """Query-attention merge of per-metapath vectors; returns (h, beta)."""
    if not vectors:
        raise UnreachableNodeError("no active metapath vectors to aggregate")
    logits = dg.concat([dg.dot(q, v) for v in vectors])
    beta = dg.softmax(logits)
    stacked = dg.stack_rows(vectors)
    return dg.matmul(dg.transpose(stacked), beta), beta


def multihead_self_attention(stacked: Tensor,
                             head_params: Sequence[tuple[Tensor, Tensor, Tensor]]
                             ) -> tuple[Tensor, list[np.ndarray]]:
    """Scaled dot-product self-attention over metapath vectors.

    Per head: Q, K, V projections of the (M, d) matrix, softmax(Q K^T /
    sqrt(d_head)) V. Head outputs concatenate back to (M, d) and the rows are
    mean-collapsed into a single d-vector. Returns the vector and each head's
    attention matrix.
    """
    outputs = []
    attn_mats = []
    for wq, wk, wv in head_params:
        dk = wq.shape[1]
        q = dg.matmul(stacked, wq)
        k = dg.matmul(stacked, wk)
        v = dg.matmul(stacked, wv)
        scores = dg.scalar_mul(1.0 / np.sqrt(dk), dg.matmul(q, dg.transpose(k)))
        attn = dg.softmax_rows(scores)
        attn_mats.append(attn.data.copy())
        outputs.append(dg.matmul(attn, v))
    return dg.mean_rows(dg.concat_cols(outputs)), attn_mats


def output_layer(h: Tensor, w_out: Tensor, nonlinearity: str) -> Tensor:
    return _nonlin(dg.matmul(w_out, h), nonlinearity)


# ---------------------------------------------------------------------------
# Model


class MHNModel:
    """Binds a graph, a metapath set, a config and the trainable tensors."""

    def __init__(self, graph: HeteroGraph, metapaths: Sequence[Metapath],
                 config: ModelConfig, params: ModelParams | None = None):
        config.validate()
        ids = [mp.id for mp in metapaths]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate metapath ids")
        for mp in metapaths:
            mp.validate_against(graph.schema)
        self.graph = graph
        self.metapaths = list(metapaths)
        self.config = config
        self.params = params if params is not None else ModelParams.init(
            graph, metapaths, config)
        self._by_start: dict[str, list[Metapath]] = {}
        for mp in self.metapaths:
            self._by_start.setdefault(mp.node_types[0], []).append(mp)

    def metapaths_for(self, node: int | str) -> list[Metapath]:
        return self._by_start.get(self.graph.node_type(node), [])

    # -- base embeddings

    def new_cache(self) -> dict:
        """Per-pass cache so each node's base embedding is built once."""
        return {"base": {}, "att": {}}

    def base_embedding(self, node: int | str, cache: dict | None = None) -> Tensor:
        """Mean of the id-lookup row and the projected attribute vector.

        Types without attributes use the id row alone.
        """
        gid = self.graph.resolve(node)
        if cache is None:
            cache = self.new_cache()
        if gid in cache["base"]:
            return cache["base"][gid]
        h_id = dg.row(self.params["embed.table"], gid)
        tname = self.graph.node_type_names[gid]
        if tname in self.graph.features:
            if tname not in cache["att"]:
                feats = Tensor(self.graph.features[tname])
                cache["att"][tname] = dg.matmul(
                    feats, dg.transpose(self.params[f"attr.{tname}"]))
            h_att = dg.row(cache["att"][tname], self.graph.type_index_of[gid])
            h = dg.scalar_mul(0.5, dg.add(h_id, h_att))
        else:
            h = h_id
        cache["base"][gid] = h
        return h

    # -- sampling

    def sample_node(self, node: int | str, phase: int | str = "eval",
                    seed: int | None = None) -> dict[str, NeighborSample]:
        """Draw one NeighborSample per metapath of the node's type.

        The RNG stream is keyed by (seed, phase, node, metapath id), so the
        result is independent of iteration and worker order.
        """
        gid = self.graph.resolve(node)
        seed = self.config.seed if seed is None else seed
        out = {}
        for mp in self.metapaths_for(gid):
            rng = derive_rng(seed, "sample", phase, gid, mp.id)
            out[mp.id] = sample_neighborhood(
                self.graph, gid, mp, self.config.n_instances,
                self.config.max_retries, rng, dfs_draws=self.config.dfs_draws)
        return out

    # -- forward

    def forward(self, node: int | str, samples: dict[str, NeighborSample] | None = None,
                phase: int | str = "eval", cache: dict | None = None,
                seed: int | None = None) -> tuple[Tensor, ForwardTrace]:
        """Embed one node; raises UnreachableNodeError if every metapath of
        its type sampled zero instances (or its type starts none)."""
        gid = self.graph.resolve(node)
        cfg = self.config
        if cache is None:
            cache = self.new_cache()
        mps = self.metapaths_for(gid)
        if not mps:
            raise UnreachableNodeError(
                f"node {self.graph.node_id(gid)!r}: no metapath starts at type "
                f"{self.graph.node_type(gid)!r}")
        if samples is None:
            samples = self.sample_node(gid, phase=phase, seed=seed)

        trace = ForwardTrace(node=gid)
        h_u = self.base_embedding(gid, cache)
        active_vecs: list[Tensor] = []
        active_ids: list[str] = []
        for mp in mps:
            sample = samples[mp.id]
            if not sample.active:
                trace.per_metapath[mp.id] = MetapathTrace(
                    vector=None, alpha=None, bfs=(), dfs=(), active=False)
                continue
            enc_w = self.params[f"enc.{mp.id}"] if cfg.encoder == "nonlinear" else None
            h_bfs = encode_neighbors(
                [self.base_embedding(v, cache) for v in sample.bfs], h_u,
                cfg.encoder, enc_w, cfg.nonlinearity)
            h_dfs = encode_neighbors(
                [self.base_embedding(v, cache) for v in sample.dfs], h_u,
                cfg.encoder, enc_w, cfg.nonlinearity)
            h_p, alpha = fuse_bfs_dfs(h_u, h_bfs, h_dfs)
            active_vecs.append(h_p)
            active_ids.append(mp.id)
            trace.per_metapath[mp.id] = MetapathTrace(
                vector=h_p.data.copy(), alpha=(float(alpha.data[0]), float(alpha.data[1])),
                bfs=sample.bfs, dfs=sample.dfs, active=True)

        if not active_vecs:
            raise UnreachableNodeError(
                f"node {self.graph.node_id(gid)!r} unreachable by any metapath")

        if cfg.fusion == "metapath-attention":
            h, beta = aggregate_metapaths(active_vecs, self.params["fusion.q"])
            trace.beta = {mp_id: float(b) for mp_id, b in zip(active_ids, beta.data)}
        else:
            head_params = [(self.params[f"fusion.h{k}.q"],
                            self.params[f"fusion.h{k}.k"],
                            self.params[f"fusion.h{k}.v"])
                           for k in range(cfg.heads)]
            h, attn = multihead_self_attention(dg.stack_rows(active_vecs), head_params)
            trace.head_attention = attn

        z = output_layer(h, self.params["out.w"], cfg.nonlinearity)
        trace.z = z.data.copy()
        return z, trace

    def embed_nodes(self, nodes: Sequence[int] | None = None,
                    phase: int | str = "eval", seed: int | None = None,
                    workers: int = 1,
                    base_fallback: bool = True) -> dict[int, np.ndarray]:
        """Final embeddings for the given nodes (default: all).

        Nodes whose type starts no metapath fall back to their base embedding
        when base_fallback is set, and are skipped otherwise. Sampling is
        keyed per node, so the result does not depend on workers.
        """
        if nodes is None:
            nodes = list(range(self.graph.num_nodes))
        nodes = [self.graph.resolve(n) for n in nodes]

        def one(gid: int) -> tuple[int, np.ndarray | None]:
            if not self.metapaths_for(gid):
                if base_fallback:
                    return gid, self.base_embedding(gid).data.copy()
                return gid, None
            z, _ = self.forward(gid, phase=phase, seed=seed)
            return gid, z.data.copy()

        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(one, nodes))
        else:
            results = [one(gid) for gid in nodes]
        return {gid: vec for gid, vec in results if vec is not None}


# ---------------------------------------------------------------------------
# Persistence


def graph_digest(graph: HeteroGraph) -> str:
    payload = json.dumps(graph.schema.to_dict(), sort_keys=True)
    payload += "\n" + "\n".join(f"{i}\t{t}" for i, t in
                                zip(graph.node_ids, graph.node_type_names))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


CHECKPOINT_VERSION = 1


def save_checkpoint(model: MHNModel, path: str | Path,
                    meta: dict | None = None) -> None:
    """Write config, metapaths, graph digest and all tensors as JSON.

    Values serialize through repr and round-trip bit-exactly.
    """
    obj = {
        "format": "mhn-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "metapaths": [{"id": mp.id, "node_types": list(mp.node_types),
                       "edge_types": list(mp.edge_types)} for mp in model.metapaths],
        "graph": {"num_nodes": model.graph.num_nodes,
                  "digest": graph_digest(model.graph)},
        "meta": meta or {},
        "tensors": {name: {"shape": list(t.data.shape),
                           "data": t.data.reshape(-1).tolist()}
                    for name, t in model.params.tensors.items()},
    }
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path, graph: HeteroGraph) -> tuple[MHNModel, dict]:
    """Rebuild a model from a checkpoint; verifies it matches the graph."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != "mhn-checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('version')}")
    if obj["graph"]["num_nodes"] != graph.num_nodes:
        raise ValueError(f"{path}: checkpoint was trained on {obj['graph']['num_nodes']} "
                         f"nodes, graph has {graph.num_nodes}")
    if obj["graph"]["digest"] != graph_digest(graph):
        raise ValueError(f"{path}: graph schema/node digest mismatch")
    config = ModelConfig.from_dict(obj["config"])
    metapaths = [Metapath(id=m["id"], node_types=tuple(m["node_types"]),
                          edge_types=tuple(m["edge_types"]))
                 for m in obj["metapaths"]]
    params = ModelParams({})
    for name, spec in obj["tensors"].items():
        params.add(name, np.array(spec["data"], dtype=np.float64).reshape(spec["shape"]))
    model = MHNModel(graph, metapaths, config, params=params)
    return model, obj.get("meta", {})


def write_embeddings_tsv(embeddings: dict[int, np.ndarray], graph: HeteroGraph,
                         path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for gid in sorted(embeddings):
            vec = ",".join(repr(float(x)) for x in embeddings[gid])
            fh.write(f"{graph.node_id(gid)}\t{vec}\n")


def read_embeddings_tsv(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        node_id, _, vec = line.partition("\t")
        out[node_id] = np.array([float(x) for x in vec.split(",")])
    return out
