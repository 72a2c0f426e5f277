"""Training: cross-entropy and NCE losses, positive/negative pair
construction, and the epoch loop with early stopping.

Supervised mode classifies labeled nodes through a trainable linear head
over the embeddings. Unsupervised mode contrasts positive pairs (edges, or
co-window nodes on metapath-guided walks) against negatives drawn from a
unigram^0.75 distribution over same-type nodes. Both run full-batch Adam
steps; neighbor samples are redrawn each epoch unless frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import diffgrad as dg
from .diffgrad import Adam, NonFiniteError, Tensor
from .hetgraph import HeteroGraph, LabelTable
from .metapath import Metapath, derive_rng
from .model import MHNModel, ModelParams, UnreachableNodeError, glorot

logger = logging.getLogger(__name__)

MODES = ("supervised", "unsupervised")
PAIR_SOURCES = ("edges", "walks")


@dataclass
class TrainConfig:
    mode: str = "supervised"
    lr: float = 0.01
    epochs: int = 100
    patience: int = 5
    negatives: int = 5
    walk_length: int = 10
    walks_per_node: int = 20
    window: int = 5
    batch_size: int = 0
    pair_source: str = "edges"
    target_edge_types: list[str] | None = None
    val_fraction: float = 0.1
    freeze_sampling: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pair_source not in PAIR_SOURCES:
            raise ValueError(f"pair_source must be one of {PAIR_SOURCES}")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 0 or self.patience < 1:
            raise ValueError("epochs must be >= 0 and patience >= 1")
        for name in ("negatives", "walk_length", "walks_per_node", "window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @staticmethod
    def from_dict(obj: dict) -> "TrainConfig":
        known = {k: v for k, v in obj.items() if k in TrainConfig.__dataclass_fields__}
        cfg = TrainConfig(**known)
        cfg.validate()
        return cfg


@dataclass
class PairSet:
    positives: list[tuple[int, int]]
    negatives: list[tuple[int, int]]

    def nodes(self) -> list[int]:
        seen = {n for pair in self.positives for n in pair}
        seen.update(n for pair in self.negatives for n in pair)
        return sorted(seen)


# ---------------------------------------------------------------------------
# Losses


def cross_entropy_loss(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over rows of -log p[true class]; probabilities floored at 1e-12."""
    n, c = probs.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} rows")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = dg.mul(Tensor(onehot), dg.log(dg.clip(probs, 1e-12, 1.0)))
    return dg.neg(dg.scalar_mul(1.0 / n, dg.sum_all(picked)))


def nce_loss(pairs: PairSet, embeddings: dict[int, Tensor]) -> Tensor:
    """Negative-sampling contrastive loss over embedding dot products.

    Sum of -log sigmoid(z_u . z_v) over positives and -log sigmoid(-dot)
    over negatives; dots are clamped to +-30 so the log never sees 0.
    """
    if not pairs.positives and not pairs.negatives:
        raise ValueError("empty pair set")
    terms = []
    if pairs.positives:
        dots = dg.concat([dg.dot(embeddings[u], embeddings[v])
                          for u, v in pairs.positives])
        terms.append(dg.neg(dg.sum_all(dg.log(dg.sigmoid(dg.clip(dots, -30.0, 30.0))))))
    if pairs.negatives:
        dots = dg.concat([dg.dot(embeddings[u], embeddings[v])
                          for u, v in pairs.negatives])
        terms.append(dg.neg(dg.sum_all(dg.log(dg.sigmoid(dg.neg(dg.clip(dots, -30.0, 30.0)))))))
    loss = terms[0]
    for t in terms[1:]:
        loss = dg.add(loss, t)
    return loss


# ---------------------------------------------------------------------------
# Pair construction


def _graph_edges(graph: HeteroGraph, target_edge_types: list[str] | None) -> list[tuple[int, int]]:
    names = target_edge_types or [t.name for t in graph.schema.edge_types]
    out: list[tuple[int, int]] = []
    for name in names:
        out.extend(graph.edges[name])
    return out


def metapath_walks(graph: HeteroGraph, metapaths: list[Metapath], walk_length: int,
                   walks_per_node: int, seed: int, phase: int | str = 0) -> list[list[int]]:
    """Metapath-guided walks; the pattern repeats while its end type matches
    its start type, otherwise the walk stops after one traversal."""
    walks = []
    for mp in metapaths:
        cyclic = mp.node_types[-1] == mp.node_types[0]
        starts = graph.type_members.get(mp.node_types[0], ())
        for gid in starts:
            for w in range(walks_per_node):
                rng = derive_rng(seed, "walk", phase, mp.id, gid, w)
                walk = [gid]
                pos = 0
                while len(walk) < walk_length:
                    et = mp.edge_types[pos]
                    want = mp.node_types[pos + 1]
                    cands = [v for v in graph.neighbors(walk[-1], et)
                             if graph.node_type_names[v] == want]
                    if not cands:
                        break
                    walk.append(cands[int(rng.integers(len(cands)))])
                    pos += 1
                    if pos == len(mp.edge_types):
                        if not cyclic:
                            break
                        pos = 0
                if len(walk) >= 2:
                    walks.append(walk)
    return walks


def window_pairs(walks: list[list[int]], window: int) -> list[tuple[int, int]]:
    """All (earlier, later) pairs within the window on each walk; multiset."""
    pairs = []
    for walk in walks:
        for i, u in enumerate(walk):
            for j in range(i + 1, min(i + window + 1, len(walk))):
                pairs.append((u, walk[j]))
    return pairs


def _unigram_weights(graph: HeteroGraph, positives: list[tuple[int, int]]
                     ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per node type: (candidate node ids, unigram^0.75 probabilities)."""
    counts: dict[int, int] = {}
    for u, v in positives:
        counts[u] = counts.get(u, 0) + 1
        counts[v] = counts.get(v, 0) + 1
    out = {}
    for tname, members in graph.type_members.items():
        ids = np.array([g for g in members if counts.get(g, 0) > 0], dtype=np.int64)
        if ids.size == 0:
            continue
        w = np.array([counts[g] for g in ids], dtype=np.float64) ** 0.75
        out[tname] = (ids, w / w.sum())
    return out


def build_pairs(graph: HeteroGraph, metapaths: list[Metapath], cfg: TrainConfig,
                phase: int | str = 0,
                edges: list[tuple[int, int]] | None = None) -> PairSet:
    """Positive pairs plus type-matched negatives.

    Positives come from explicit edges (pair_source='edges'; defaults to the
    graph's edge lists) or from co-window nodes on metapath-guided walks.
    Each positive (u, v) contributes up to cfg.negatives pairs (u, v') with
    v' redrawn from the unigram^0.75 distribution over v's type, rejecting
    self pairs, observed edges and members of the positive set.
    """
    if cfg.pair_source == "edges":
        positives = list(edges) if edges is not None else _graph_edges(
            graph, cfg.target_edge_types)
    else:
        walks = metapath_walks(graph, metapaths, cfg.walk_length,
                               cfg.walks_per_node, cfg.seed, phase=phase)
        positives = window_pairs(walks, cfg.window)
    if not positives:
        raise ValueError("no positive pairs (graph has no usable edges or walks)")

    weights = _unigram_weights(graph, positives)
    pos_set = set(positives) | {(v, u) for u, v in positives}
    rng = derive_rng(cfg.seed, "negatives", phase)
    negatives: list[tuple[int, int]] = []
    shortfall = 0
    for u, v in positives:
        tname = graph.node_type_names[v]
        if tname not in weights:
            shortfall += cfg.negatives
            continue
        ids, probs = weights[tname]
        got = 0
        for _ in range(cfg.negatives * 20):
            if got == cfg.negatives:
                break
            cand = int(ids[rng.choice(ids.size, p=probs)])
            if cand == u or (u, cand) in pos_set or graph.has_edge(u, cand):
                continue
            negatives.append((u, cand))
            got += 1
        shortfall += cfg.negatives - got
    if shortfall:
        logger.warning("negative sampling fell short by %d pair(s)", shortfall)
    return PairSet(positives=positives, negatives=negatives)


# ---------------------------------------------------------------------------
# Splits


def split_labeled_nodes(labels: LabelTable, train_fraction: float,
                        val_fraction: float, seed: int
                        ) -> tuple[list[int], list[int], list[int]]:
    """Stratified (train, val, rest) split of labeled nodes."""
    if train_fraction + val_fraction >= 1.0:
        raise ValueError("train_fraction + val_fraction must be < 1")
    by_class: dict[int, list[int]] = {}
    for node in sorted(labels.labels):
        by_class.setdefault(labels.labels[node], []).append(node)
    train, val, rest = [], [], []
    for cls in sorted(by_class):
        members = np.array(by_class[cls])
        derive_rng(seed, "split", cls).shuffle(members)
        n_train = max(1, int(round(train_fraction * members.size)))
        n_val = max(1, int(round(val_fraction * members.size)))
        train.extend(members[:n_train].tolist())
        val.extend(members[n_train:n_train + n_val].tolist())
        rest.extend(members[n_train + n_val:].tolist())
    return sorted(train), sorted(val), sorted(rest)


def split_edges(edges: list[tuple[int, int]], val_fraction: float,
                seed: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    order = np.arange(len(edges))
    derive_rng(seed, "edge-split").shuffle(order)
    n_val = max(1, int(round(val_fraction * len(edges))))
    val_idx = set(order[:n_val].tolist())
    train = [e for i, e in enumerate(edges) if i not in val_idx]
    val = [e for i, e in enumerate(edges) if i in val_idx]
    return train, val


# ---------------------------------------------------------------------------
# Fit loop


class EarlyStopper:
    """Signals a stop after `patience` consecutive non-improving values."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class FitResult:
    params: ModelParams
    history: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")
    stopped_early: bool = False
    diverged: bool = False
    meta: dict = field(default_factory=dict)


def _ensure_classifier(model: MHNModel, num_classes: int, seed: int) -> Tensor:
    if "cls.w" not in model.params:
        d = model.config.embedding_dim
        rng = derive_rng(seed, "cls")
        model.params.add("cls.w", glorot(rng, (num_classes, d), d, num_classes))
    return model.params["cls.w"]


def _presample(model: MHNModel, nodes: list[int], phase: int | str,
               workers: int) -> dict[int, dict]:
    """Neighbor samples for many nodes; streams are per-node, so the worker
    count never changes the result."""
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            drawn = list(pool.map(lambda g: model.sample_node(g, phase=phase), nodes))
        return dict(zip(nodes, drawn))
    return {g: model.sample_node(g, phase=phase) for g in nodes}


def _embed_for(model: MHNModel, nodes: list[int], phase: int | str,
               cache: dict, workers: int = 1) -> tuple[dict[int, Tensor], list[int]]:
    """Forward every node; unreachable ones are reported, not embedded."""
    samples = _presample(model, nodes, phase, workers)
    out: dict[int, Tensor] = {}
    skipped = []
    for gid in nodes:
        try:
            z, _ = model.forward(gid, samples=samples[gid], cache=cache)
        except UnreachableNodeError:
            skipped.append(gid)
            continue
        out[gid] = z
    return out, skipped


def _class_probs(model: MHNModel, zs: dict[int, Tensor], nodes: list[int]) -> Tensor:
    cls_w = model.params["cls.w"]
    logits = dg.stack_rows([dg.matmul(cls_w, zs[g]) for g in nodes])
    return dg.softmax_rows(logits)


def _supervised_loss(model: MHNModel, labels: LabelTable, nodes: list[int],
                     phase: int | str, workers: int = 1) -> Tensor:
    cache = model.new_cache()
    zs, skipped = _embed_for(model, nodes, phase, cache, workers)
    used = [g for g in nodes if g in zs]
    if not used:
        raise UnreachableNodeError("every training node was unreachable")
    if skipped:
        logger.warning("%d node(s) unreachable this epoch; excluded from loss",
                       len(skipped))
    probs = _class_probs(model, zs, used)
    return cross_entropy_loss(probs, np.array([labels.labels[g] for g in used]))


def _pair_losses(model: MHNModel, pairs: PairSet, phase: int | str,
                 batch_size: int, workers: int = 1) -> list[Tensor]:
    cache = model.new_cache()
    zs, skipped = _embed_for(model, pairs.nodes(), phase, cache, workers)
    if skipped:
        logger.warning("%d node(s) unreachable this epoch; their pairs dropped",
                       len(skipped))
    pos = [(u, v) for u, v in pairs.positives if u in zs and v in zs]
    neg = [(u, v) for u, v in pairs.negatives if u in zs and v in zs]
    if not pos and not neg:
        raise UnreachableNodeError("no usable pairs this epoch")
    if batch_size <= 0:
        return [nce_loss(PairSet(pos, neg), zs)]
    losses = []
    for start in range(0, max(len(pos), 1), batch_size):
        chunk_pos = pos[start:start + batch_size]
        lo = start * len(neg) // max(len(pos), 1)
        hi = (start + batch_size) * len(neg) // max(len(pos), 1)
        chunk = PairSet(chunk_pos, neg[lo:hi])
        if chunk.positives or chunk.negatives:
            losses.append(nce_loss(chunk, zs))
    return losses


def fit(graph: HeteroGraph, metapaths: list[Metapath], model: MHNModel,
        cfg: TrainConfig, labels: LabelTable | None = None,
        train_nodes: list[int] | None = None, val_nodes: list[int] | None = None,
        train_edges: list[tuple[int, int]] | None = None,
        val_edges: list[tuple[int, int]] | None = None,
        workers: int = 1) -> FitResult:
    """Train the model, returning the best-validation parameters and history.

    Supervised mode needs labels (and optionally explicit train/val node
    lists; otherwise a stratified 80/10 split of the labeled nodes is made).
    Unsupervised mode draws its pairs per cfg.pair_source; explicit
    train/val edges override the internal split. Stops early after
    cfg.patience epochs without validation improvement. If the loss goes
    non-finite the last finite epoch's parameters are restored.
    """
    cfg.validate()
    result = FitResult(params=model.params)

    if cfg.mode == "supervised":
        if labels is None:
            raise ValueError("supervised mode requires labels")
        if train_nodes is None or val_nodes is None:
            train_nodes, val_nodes, _ = split_labeled_nodes(
                labels, 0.8, cfg.val_fraction, cfg.seed)
        if set(train_nodes) & set(val_nodes):
            raise ValueError("train and validation nodes overlap")
        _ensure_classifier(model, labels.num_classes, cfg.seed)
        result.meta = {"mode": cfg.mode, "train_nodes": list(train_nodes),
                       "val_nodes": list(val_nodes)}
    else:
        if cfg.pair_source == "edges":
            if train_edges is None:
                train_edges, val_edges = split_edges(
                    _graph_edges(graph, cfg.target_edge_types), cfg.val_fraction,
                    cfg.seed)
            elif val_edges is None:
                train_edges, val_edges = split_edges(train_edges, cfg.val_fraction,
                                                     cfg.seed)
            if set(train_edges) & set(val_edges):
                raise ValueError("train and validation edges overlap")
        # walk mode draws fresh pairs each epoch; validation monitors a pair
        # set drawn once at a fixed phase
        val_pairs = build_pairs(graph, metapaths, cfg, phase="val", edges=val_edges)
        result.meta = {"mode": cfg.mode, "pair_source": cfg.pair_source}

    optimizer = Adam(model.params.tensors, lr=cfg.lr) if cfg.lr > 0 else None
    best_snapshot = model.params.snapshot()
    last_good = model.params.snapshot()
    stopper = EarlyStopper(cfg.patience)

    for epoch in range(cfg.epochs):
        phase = 0 if cfg.freeze_sampling else epoch
        dg.zero_grad(model.params.tensors)
        try:
            if cfg.mode == "supervised":
                loss = _supervised_loss(model, labels, train_nodes, phase, workers)
                train_loss = loss.item()
                dg.backward(loss)
            else:
                pairs = build_pairs(graph, metapaths, cfg, phase=phase, edges=train_edges)
                chunks = _pair_losses(model, pairs, phase, cfg.batch_size, workers)
                train_loss = 0.0
                for chunk in chunks:
                    train_loss += chunk.item()
                    dg.backward(chunk)
            if optimizer is not None:
                optimizer.step()
            if cfg.mode == "supervised":
                val_loss = _supervised_loss(model, labels, val_nodes, phase, workers).item()
            else:
                cache = model.new_cache()
                zs, _ = _embed_for(model, val_pairs.nodes(), phase, cache, workers)
                usable = PairSet([p for p in val_pairs.positives
                                  if p[0] in zs and p[1] in zs],
                                 [p for p in val_pairs.negatives
                                  if p[0] in zs and p[1] in zs])
                val_loss = nce_loss(usable, zs).item()
        except NonFiniteError as exc:
            logger.error("epoch %d diverged (%s); restoring last finite params",
                         epoch, exc)
            model.params.restore(last_good)
            result.diverged = True
            break

        result.history.append((epoch, train_loss, val_loss))
        last_good = model.params.snapshot()
        improved = val_loss < stopper.best
        should_stop = stopper.update(epoch, val_loss)
        if improved:
            result.best_val = val_loss
            result.best_epoch = epoch
            best_snapshot = model.params.snapshot()
        if should_stop:
            result.stopped_early = True
            break

    if result.history and not result.diverged:
        model.params.restore(best_snapshot)
    return result
