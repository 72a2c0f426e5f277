"""Downstream evaluation: link-prediction metrics, classification probe,
and k-nearest-neighbor retrieval.

All metrics are computed in-house so their exact conventions are pinned:
ROC-AUC is the concordant-pair probability with half credit for ties; the
PR curve is traced at distinct descending score thresholds with precision
extended flat to recall 0; AP is the step-sum over the same points; F1
thresholds probabilities at 0.5 unless told otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .hetgraph import HeteroGraph, LabelTable
from .metapath import derive_rng

logger = logging.getLogger(__name__)


def _sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def link_probability(z_u: np.ndarray, z_v: np.ndarray) -> float:
    """sigmoid(z_u . z_v): probability that the two nodes are linked."""
    if z_u.shape != z_v.shape:
        raise ValueError(f"dimension mismatch: {z_u.shape} vs {z_v.shape}")
    return float(_sigmoid(float(np.dot(z_u, z_v))))


@dataclass
class RankedPredictions:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be equal-length vectors")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")

    def require_both_classes(self) -> None:
        if self.labels.min() == self.labels.max():
            raise ValueError("need at least one positive and one negative label")


def _midranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(preds: RankedPredictions) -> float:
    """Probability a positive outranks a negative, ties counting half."""
    preds.require_both_classes()
    ranks = _midranks(preds.scores)
    npos = int(preds.labels.sum())
    nneg = preds.labels.size - npos
    return float((ranks[preds.labels == 1].sum() - npos * (npos + 1) / 2.0)
                 / (npos * nneg))


def _pr_points(preds: RankedPredictions) -> tuple[np.ndarray, np.ndarray]:
    """(recall, precision) at each distinct threshold, descending scores."""
    preds.require_both_classes()
    order = np.argsort(-preds.scores, kind="mergesort")
    scores = preds.scores[order]
    labels = preds.labels[order]
    tp = np.cumsum(labels)
    fp = np.cumsum(1 - labels)
    last = np.nonzero(np.diff(scores, append=np.nan))[0]  # end of each tie group
    precision = tp[last] / (tp[last] + fp[last])
    recall = tp[last] / preds.labels.sum()
    return recall, precision


def pr_auc(preds: RankedPredictions) -> float:
    """Trapezoidal area under the PR curve, precision flat-extended to R=0."""
    recall, precision = _pr_points(preds)
    r = np.concatenate(([0.0], recall))
    p = np.concatenate(([precision[0]], precision))
    return float(np.sum((r[1:] - r[:-1]) * (p[1:] + p[:-1]) / 2.0))


def average_precision(preds: RankedPredictions) -> float:
    """Sum of (R_k - R_{k-1}) * P_k over distinct thresholds."""
    recall, precision = _pr_points(preds)
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * precision))


def f1_at_threshold(preds: RankedPredictions, threshold: float = 0.5) -> float:
    pred_pos = preds.scores >= threshold
    tp = int(np.sum(pred_pos & (preds.labels == 1)))
    fp = int(np.sum(pred_pos & (preds.labels == 0)))
    fn = int(np.sum(~pred_pos & (preds.labels == 1)))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def micro_macro_f1(predicted: np.ndarray, true: np.ndarray,
                   num_classes: int) -> tuple[float, float]:
    """Pooled-count F1 and the unweighted mean of per-class F1 scores.

    Classes absent from both predictions and truth contribute F1 = 0.
    """
    predicted = np.asarray(predicted)
    true = np.asarray(true)
    if predicted.size == 0 or predicted.shape != true.shape:
        raise ValueError("predicted and true labels must be equal-length, non-empty")
    tp_all = fp_all = fn_all = 0
    per_class = []
    for c in range(num_classes):
        tp = int(np.sum((predicted == c) & (true == c)))
        fp = int(np.sum((predicted == c) & (true != c)))
        fn = int(np.sum((predicted != c) & (true == c)))
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
        denom = 2 * tp + fp + fn
        per_class.append(2 * tp / denom if denom else 0.0)
    micro_denom = 2 * tp_all + fp_all + fn_all
    micro = 2 * tp_all / micro_denom if micro_denom else 0.0
    return micro, float(np.mean(per_class))


# ---------------------------------------------------------------------------
# Logistic-regression probe


@dataclass
class ProbeSplit:
    train_nodes: list[int]
    test_nodes: list[int]
    train_fraction: float


def make_probe_split(nodes: list[int], labels: LabelTable, train_fraction: float,
                     seed: int) -> ProbeSplit:
    """Stratified probe split over the given (label-covered) nodes."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    by_class: dict[int, list[int]] = {}
    for n in sorted(nodes):
        by_class.setdefault(labels.labels[n], []).append(n)
    train, test = [], []
    for cls in sorted(by_class):
        members = np.array(by_class[cls])
        derive_rng(seed, "probe-split", cls).shuffle(members)
        cut = max(1, int(round(train_fraction * members.size)))
        cut = min(cut, members.size - 1) if members.size > 1 else cut
        train.extend(members[:cut].tolist())
        test.extend(members[cut:].tolist())
    if not train or not test:
        raise ValueError(f"cannot split {len(nodes)} node(s) into non-empty "
                         f"probe train/test sets")
    return ProbeSplit(train_nodes=sorted(train), test_nodes=sorted(test),
                      train_fraction=train_fraction)


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def logistic_probe(embeddings: dict[int, np.ndarray], labels: LabelTable,
                   split: ProbeSplit, tol: float = 1e-6,
                   max_iters: int = 1000) -> tuple[float, float]:
    """Fit multinomial logistic regression on frozen embeddings.

    Full-batch gradient descent with backtracking on the step size, stopped
    when the loss change drops below tol or after max_iters. Returns
    (micro-F1, macro-F1) on the test split.
    """
    c = labels.num_classes
    x_train = np.stack([embeddings[n] for n in split.train_nodes])
    y_train = np.array([labels.labels[n] for n in split.train_nodes])
    x_test = np.stack([embeddings[n] for n in split.test_nodes])
    y_test = np.array([labels.labels[n] for n in split.test_nodes])
    if np.unique(y_train).size < 2:
        raise ValueError("probe training split contains a single class")

    mu = x_train.mean(axis=0)
    sd = np.maximum(x_train.std(axis=0), 1e-8)
    xt = np.hstack([(x_train - mu) / sd, np.ones((x_train.shape[0], 1))])
    xs = np.hstack([(x_test - mu) / sd, np.ones((x_test.shape[0], 1))])
    onehot = np.zeros((y_train.size, c))
    onehot[np.arange(y_train.size), y_train] = 1.0

    w = np.zeros((c, xt.shape[1]))
    lr = 1.0
    n = xt.shape[0]

    def loss_of(wm):
        p = _softmax_rows(xt @ wm.T)
        return -np.mean(np.log(np.maximum(p[np.arange(n), y_train], 1e-300)))

    prev = loss_of(w)
    for _ in range(max_iters):
        p = _softmax_rows(xt @ w.T)
        grad = (p - onehot).T @ xt / n
        while lr > 1e-12:
            cand = w - lr * grad
            cur = loss_of(cand)
            if cur <= prev:
                break
            lr /= 2.0
        w = w - lr * grad
        cur = loss_of(w)
        if abs(prev - cur) < tol:
            break
        prev = cur

    pred = np.argmax(xs @ w.T, axis=1)
    return micro_macro_f1(pred, y_test, c)


# ---------------------------------------------------------------------------
# KNN retrieval


def knn_topk(embeddings: dict, query, k: int) -> list:
    """k nearest keys by Euclidean distance; ties break on ascending key.

    The query is excluded from its own result; k beyond the pool size
    returns the whole pool.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if query not in embeddings:
        raise KeyError(f"query {query!r} has no embedding")
    q = embeddings[query]
    ranked = sorted(
        ((float(np.linalg.norm(vec - q)), key)
         for key, vec in embeddings.items() if key != query))
    return [key for _, key in ranked[:k]]


def hit_rate(recommendations: dict, truth: dict, k: int) -> float:
    """Fraction of queries whose true target appears in their top-k list."""
    if not truth:
        raise ValueError("no ground-truth queries")
    hits = sum(1 for q, target in truth.items()
               if target in recommendations.get(q, [])[:k])
    return hits / len(truth)


# ---------------------------------------------------------------------------
# Link-prediction protocol


def sample_nonedges(graph: HeteroGraph, edge_type: str, count: int, seed: int,
                    forbidden: set[tuple[int, int]] | None = None
                    ) -> list[tuple[int, int]]:
    """Uniform distinct non-edges matching an edge type's signature."""
    et = graph.schema.edge_type(edge_type)
    src_pool = graph.type_members[et.src]
    dst_pool = graph.type_members[et.dst]
    forbidden = forbidden or set()
    rng = derive_rng(seed, "nonedges", edge_type)
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    attempts = 0
    while len(out) < count and attempts < count * 200:
        attempts += 1
        u = int(src_pool[int(rng.integers(len(src_pool)))])
        v = int(dst_pool[int(rng.integers(len(dst_pool)))])
        if u == v or (u, v) in seen or (u, v) in forbidden or (v, u) in forbidden:
            continue
        if graph.has_edge(u, v):
            continue
        seen.add((u, v))
        out.append((u, v))
    if len(out) < count:
        logger.warning("only %d of %d non-edges found", len(out), count)
    return out


def eval_linkpred(embeddings: dict[int, np.ndarray],
                  positives: list[tuple[int, int]],
                  negatives: list[tuple[int, int]],
                  threshold: float = 0.5) -> dict[str, float]:
    """Score held-out edges against sampled non-edges; returns the four
    standard metrics keyed roc_auc / pr_auc / f1 / ap."""
    if not positives:
        raise ValueError("empty test set")
    pairs = positives + negatives
    missing = [p for p in pairs if p[0] not in embeddings or p[1] not in embeddings]
    if missing:
        raise ValueError(f"{len(missing)} test pair(s) reference unembedded nodes")
    scores = np.array([link_probability(embeddings[u], embeddings[v])
                       for u, v in pairs])
    labels = np.array([1] * len(positives) + [0] * len(negatives))
    preds = RankedPredictions(scores=scores, labels=labels)
    return {
        "roc_auc": roc_auc(preds),
        "pr_auc": pr_auc(preds),
        "f1": f1_at_threshold(preds, threshold),
        "ap": average_precision(preds),
    }
