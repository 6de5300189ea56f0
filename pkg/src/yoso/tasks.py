"""Task heads, task losses and evaluation metrics.

Node classification attaches a linear softmax head to measurement rows,
each row inheriting the label of its anchor node.  Link prediction scores
node pairs by cosine similarity of reconstructed embeddings with a margin
hinge on negative pairs.  Metrics cover accuracy, micro-F1, Hits@k and MRR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySplit,
    InvalidParams,
    NoLabeledMeasurements,
    ShapeMismatch,
    ZeroNormEmbedding,
)

METRICS = ("accuracy", "micro_f1", "hits_at_k", "mrr")


@dataclass
class ClassifierHead:
    """Linear d -> C read-out with bias."""

    weight: np.ndarray
    bias: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    @staticmethod
    def init(dim: int, num_classes: int, rng: np.random.Generator) -> "ClassifierHead":
        scale = np.sqrt(2.0 / (dim + num_classes))
        return ClassifierHead(
            weight=scale * rng.standard_normal((dim, num_classes)),
            bias=np.zeros(num_classes),
        )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _cross_entropy_pieces(rows_feat, head, row_labels):
    logits = rows_feat @ head.weight + head.bias
    probs = softmax(logits)
    n = rows_feat.shape[0]
    picked = probs[np.arange(n), row_labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    dlogits = probs.copy()
    dlogits[np.arange(n), row_labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def _labeled_rows(anchors, labels, train_mask):
    anchors = np.asarray(anchors, dtype=np.int64)
    mask = np.asarray(train_mask, dtype=bool)
    rows = np.flatnonzero(mask[anchors])
    if rows.size == 0:
        raise NoLabeledMeasurements("no measurement row has a train-split anchor")
    return rows, np.asarray(labels, dtype=np.int64)[anchors[rows]]


def classification_loss(z, head: ClassifierHead, anchors, labels, train_mask):
    """Mean softmax cross-entropy over train-anchored measurement rows.

    Returns the loss and its gradient with respect to the full measurement
    matrix (zero on rows whose anchor is outside the training split).
    """
    z = np.asarray(z, dtype=np.float64)
    rows, row_labels = _labeled_rows(anchors, labels, train_mask)
    loss, dlogits = _cross_entropy_pieces(z[rows], head, row_labels)
    grad_z = np.zeros_like(z)
    grad_z[rows] = dlogits @ head.weight.T
    return loss, grad_z


def classification_head_gradients(z, head: ClassifierHead, anchors, labels, train_mask):
    """Gradients of the same cross-entropy with respect to the head."""
    z = np.asarray(z, dtype=np.float64)
    rows, row_labels = _labeled_rows(anchors, labels, train_mask)
    _, dlogits = _cross_entropy_pieces(z[rows], head, row_labels)
    return z[rows].T @ dlogits, dlogits.sum(axis=0)


@dataclass
class LinkLossConfig:
    """Positive/negative edge sets and the hinge margin for link training."""

    pos_edges: np.ndarray
    neg_edges: np.ndarray
    margin: float = 0.5

    def __post_init__(self):
        self.pos_edges = np.asarray(self.pos_edges, dtype=np.int64).reshape(-1, 2)
        self.neg_edges = np.asarray(self.neg_edges, dtype=np.int64).reshape(-1, 2)
        if self.margin < 0:
            raise InvalidParams("margin must be >= 0")


def _cosine_terms(h, edges):
    hi, hj = h[edges[:, 0]], h[edges[:, 1]]
    ni = np.linalg.norm(hi, axis=1)
    nj = np.linalg.norm(hj, axis=1)
    if np.any(ni < 1e-12) or np.any(nj < 1e-12):
        raise ZeroNormEmbedding("edge endpoint with (near-)zero embedding norm")
    cos = np.sum(hi * hj, axis=1) / (ni * nj)
    return hi, hj, ni, nj, cos


def _accumulate_cosine_grad(grad, h, edges, weights):
    # d cos(hi, hj) / d hi = hj/(|hi||hj|) - cos * hi/|hi|^2, scaled per edge
    hi, hj, ni, nj, cos = _cosine_terms(h, edges)
    gi = (hj / (ni * nj)[:, None] - hi * (cos / ni**2)[:, None]) * weights[:, None]
    gj = (hi / (ni * nj)[:, None] - hj * (cos / nj**2)[:, None]) * weights[:, None]
    np.add.at(grad, edges[:, 0], gi)
    np.add.at(grad, edges[:, 1], gj)


def link_loss(h, cfg: LinkLossConfig):
    """Cosine link loss on node embeddings.

    Positive pairs pay (1 - cos); negative pairs pay
    max(0, margin - (1 - cos)).  Returns the loss and its gradient with
    respect to the embedding matrix.
    """
    h = np.asarray(h, dtype=np.float64)
    grad = np.zeros_like(h)
    loss = 0.0
    if cfg.pos_edges.shape[0]:
        *_, cos = _cosine_terms(h, cfg.pos_edges)
        loss += float(np.mean(1.0 - cos))
        w = np.full(cfg.pos_edges.shape[0], -1.0 / cfg.pos_edges.shape[0])
        _accumulate_cosine_grad(grad, h, cfg.pos_edges, w)
    if cfg.neg_edges.shape[0]:
        *_, cos = _cosine_terms(h, cfg.neg_edges)
        hinge = cfg.margin - (1.0 - cos)
        active = hinge > 0
        loss += float(np.sum(hinge[active]) / cfg.neg_edges.shape[0])
        if np.any(active):
            w = np.where(active, 1.0 / cfg.neg_edges.shape[0], 0.0)
            _accumulate_cosine_grad(grad, h, cfg.neg_edges, w)
    return loss, grad


# ---------------------------------------------------------------------------
# metrics


def accuracy(predictions, truths) -> float:
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.size == 0:
        raise EmptySplit("no items to score")
    return float(np.mean(predictions == truths))


def micro_f1(predictions, truths) -> float:
    """Micro-averaged F1 with TP/FP/FN pooled over all classes."""
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.size == 0:
        raise EmptySplit("no items to score")
    classes = np.union1d(predictions, truths)
    tp = fp = fn = 0
    for c in classes:
        tp += int(np.sum((predictions == c) & (truths == c)))
        fp += int(np.sum((predictions == c) & (truths != c)))
        fn += int(np.sum((predictions != c) & (truths == c)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


def hits_at_k(pos_scores, neg_scores, k: int) -> float:
    """Fraction of positives scoring above the k-th best shared negative.

    Ties with the cut-off negative count against the positive.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0:
        raise EmptySplit("no positive queries")
    if neg.size < k:
        return 1.0
    cutoff = np.sort(neg)[-k]
    return float(np.mean(pos > cutoff))


def mrr(pos_scores, neg_scores_per_query) -> float:
    """Mean reciprocal rank of each positive among its own negatives.

    Rank is pessimistic on ties: 1 + #(negatives >= positive).
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    if pos.size == 0:
        raise EmptySplit("no queries")
    rr = np.empty(pos.size)
    for i, (p, negs) in enumerate(zip(pos, neg_scores_per_query)):
        negs = np.asarray(negs, dtype=np.float64)
        rr[i] = 1.0 / (1.0 + int(np.sum(negs >= p)))
    return float(np.mean(rr))


@dataclass(frozen=True)
class EvalReport:
    metric_name: str
    value: float
    split: str


def evaluate(
    metric_name: str,
    split: str,
    predictions=None,
    truths=None,
    pos_scores=None,
    neg_scores=None,
    k: int | None = None,
) -> EvalReport:
    """Dispatch to the named metric and wrap the result."""
    if metric_name == "accuracy":
        value = accuracy(predictions, truths)
    elif metric_name == "micro_f1":
        value = micro_f1(predictions, truths)
    elif metric_name == "hits_at_k":
        if k is None:
            raise InvalidParams("hits_at_k needs k")
        value = hits_at_k(pos_scores, neg_scores, k)
    elif metric_name == "mrr":
        value = mrr(pos_scores, neg_scores)
    else:
        raise InvalidParams(f"metric must be one of {METRICS}, got {metric_name!r}")
    return EvalReport(metric_name=metric_name, value=value, split=split)
