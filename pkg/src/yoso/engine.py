"""Sparse-domain training loop with hand-derived gradients.

The forward pass never leaves the measurement domain: with B = Phi @ Ahat
fixed for the whole run, each layer computes T <- act(B W T) on M x d
matrices.  The joint loss couples the measurement-domain fit of a trainable
basis/code pair (reconstruction loss) with the task loss on the output
measurements, and three explicit gradients update the layer weights, the
orthonormal basis (with a polar projection back onto the orthogonal
matrices) and the row-sparse code.  The sampling operator is built exactly
once per training run, before the epoch loop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import sampler
from .errors import InvalidParams, NonFinite, ShapeMismatch
from .graph import Graph, PropagationMatrix, normalized_laplacian
from .linalg import orthonormality_residual, polar_project
from .recovery import row_group_norm
from .rng import RngStreams
from .sampler import SamplingOperator, build_sampling_operator, node_scores
from .tasks import (
    ClassifierHead,
    LinkLossConfig,
    classification_head_gradients,
    classification_loss,
    hits_at_k,
    link_loss,
)

ACTIVATIONS = ("relu", "identity")
OPTIMIZERS = ("plain", "adaptive-moment")
READOUTS = ("reconstruction", "propagated")


def activate(s: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(s, 0.0)
    if kind == "identity":
        return s
    raise InvalidParams(f"activation must be one of {ACTIVATIONS}, got {kind!r}")


def activate_deriv(s: np.ndarray, kind: str) -> np.ndarray:
    # relu derivative at 0 is defined as 0
    if kind == "relu":
        return (s > 0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(s)
    raise InvalidParams(f"activation must be one of {ACTIVATIONS}, got {kind!r}")


@dataclass
class Hyperparams:
    """Loss weights, learning rates and loop controls for one run."""

    alpha: float = 1.0
    beta: float = 1.0
    sparsity_weight: float = 1e-3
    lr_theta: float = 0.01
    lr_u: float = 0.01
    lr_h: float = 0.01
    epochs: int = 300
    num_layers: int = 2
    num_measurements: int = 128
    activation: str = "relu"
    optimizer: str = "adaptive-moment"
    score_mode: str = "leverage"
    neighbor_mode: str = "full"
    readout: str = "reconstruction"
    plateau_tol: float = 1e-6
    plateau_patience: int = 20

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.sparsity_weight < 0:
            raise InvalidParams("alpha, beta and the sparsity weight must be >= 0")
        if min(self.lr_theta, self.lr_u, self.lr_h) <= 0:
            raise InvalidParams("learning rates must be > 0")
        if self.epochs < 1 or self.num_measurements < 1 or self.num_layers < 1:
            raise InvalidParams("epochs, num_layers and num_measurements must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidParams(f"activation must be one of {ACTIVATIONS}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParams(f"optimizer must be one of {OPTIMIZERS}")
        if self.readout not in READOUTS:
            raise InvalidParams(f"readout must be one of {READOUTS}")


@dataclass
class ModelParams:
    """Layer weights, each N x M."""

    layer_weights: list

    @property
    def num_layers(self) -> int:
        return len(self.layer_weights)


@dataclass
class Basis:
    """Trainable orthonormal N x N basis."""

    matrix: np.ndarray

    @property
    def orthonormality_residual(self) -> float:
        return orthonormality_residual(self.matrix)


@dataclass
class SparseCode:
    """Trainable N x d output code; row sparsity is encouraged, not enforced."""

    code: np.ndarray
    nominal_sparsity: int | None = None


@dataclass
class ForwardTrace:
    """Measurement-domain trace: inputs T^(0..L-1), pre-activations S^(1..L), output Z."""

    inputs: list
    pre_activations: list
    output: np.ndarray


@dataclass
class GradientSet:
    d_weights: list
    d_basis: np.ndarray
    d_code: np.ndarray
    messages: list = field(default_factory=list)


def _dense(x):
    return x.toarray() if sp.issparse(x) else np.asarray(x, dtype=np.float64)


def initial_measurements(phi, x) -> np.ndarray:
    """T^(0) = Phi X.

    For any orthonormal basis U the transform-then-measure product
    Phi U (U^T X) collapses to Phi X, so the input measurements do not
    depend on the (still unknown) basis.
    """
    x = np.asarray(x, dtype=np.float64)
    if phi.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"operator columns {phi.shape[1]} vs feature rows {x.shape[0]}")
    return np.asarray(phi @ x, dtype=np.float64)


def initial_measurements_from_code(phi, basis, input_code) -> np.ndarray:
    """Literal variant of the input measurements: Phi U Xhat with Xhat given."""
    basis = np.asarray(basis, dtype=np.float64)
    input_code = np.asarray(input_code, dtype=np.float64)
    if basis.shape[1] != input_code.shape[0]:
        raise ShapeMismatch(f"basis {basis.shape} vs input code {input_code.shape}")
    return np.asarray(phi @ (basis @ input_code), dtype=np.float64)


def forward(phi, a_hat, params: ModelParams, t0: np.ndarray, activation: str,
            phi_a: np.ndarray | None = None) -> ForwardTrace:
    """Run act(B W^(l) .) through all layers; B = Phi Ahat is M x N."""
    b = _dense(phi @ a_hat) if phi_a is None else phi_a
    m = b.shape[0]
    t = np.asarray(t0, dtype=np.float64)
    if t.shape[0] != m:
        raise ShapeMismatch(f"input measurements have {t.shape[0]} rows, expected {m}")
    inputs = [t]
    pre = []
    for w in params.layer_weights:
        if w.shape != (b.shape[1], m):
            raise ShapeMismatch(f"layer weight shape {w.shape}, expected {(b.shape[1], m)}")
        s = (b @ w) @ t
        if not np.all(np.isfinite(s)):
            raise NonFinite("forward pass produced NaN/Inf")
        t = activate(s, activation)
        pre.append(s)
        inputs.append(t)
    return ForwardTrace(inputs=inputs[:-1], pre_activations=pre, output=inputs[-1])


def reconstruction_loss(z, phi, basis, code, sparsity_weight: float) -> float:
    """0.5 ||Z - Phi U Hhat||_F^2 + lam ||Hhat||_{2,1}."""
    resid = z - phi @ (basis @ code)
    return 0.5 * float(np.sum(resid * resid)) + sparsity_weight * row_group_norm(code)


def total_loss(recon: float, gnn: float, alpha: float, beta: float) -> float:
    return alpha * recon + beta * gnn


def _residual(z, phi, basis, code):
    return z - np.asarray(phi @ (basis @ code), dtype=np.float64)


def backprop_messages(trace: ForwardTrace, phi, a_hat, params: ModelParams,
                      output_grad: np.ndarray, activation: str,
                      phi_a: np.ndarray | None = None) -> list:
    """Messages g^(L..1): g^(L) = dL/dZ (.) act'(S^(L)), then
    g^(l-1) = (B W^(l))^T g^(l) (.) act'(S^(l-1))."""
    b = _dense(phi @ a_hat) if phi_a is None else phi_a
    layers = params.num_layers
    g = output_grad * activate_deriv(trace.pre_activations[-1], activation)
    messages = [g]
    for l in range(layers - 1, 0, -1):
        g = (b @ params.layer_weights[l]).T @ g
        g = g * activate_deriv(trace.pre_activations[l - 1], activation)
        messages.append(g)
    messages.reverse()
    return messages


def grad_weights(trace: ForwardTrace, phi, a_hat, params: ModelParams, basis, code,
                 task_grad_z: np.ndarray, alpha: float, beta: float, activation: str,
                 phi_a: np.ndarray | None = None):
    """dW^(l) = B^T g^(l) (T^(l-1))^T for the joint loss; returns (dWs, messages)."""
    b = _dense(phi @ a_hat) if phi_a is None else phi_a
    resid = _residual(trace.output, phi, basis, code)
    output_grad = alpha * resid + beta * task_grad_z
    messages = backprop_messages(trace, phi, a_hat, params, output_grad, activation, phi_a=b)
    d_weights = [b.T @ g @ t.T for g, t in zip(messages, trace.inputs)]
    return d_weights, messages


def grad_basis(z, phi, basis, code, alpha: float, beta: float = 0.0,
               trace: ForwardTrace | None = None, a_hat=None, params: ModelParams | None = None,
               input_code: np.ndarray | None = None, task_grad_z: np.ndarray | None = None,
               activation: str = "relu", phi_a: np.ndarray | None = None) -> np.ndarray:
    """Basis gradient -alpha Phi^T (Z - Phi U Hhat) Hhat^T.

    When the input measurements were built literally as Phi U Xhat
    (``input_code`` given), the task loss also reaches the basis through the
    inputs; that recursive term is added with weight beta.  Under the default
    T^(0) = Phi X construction the inputs do not depend on the basis and the
    beta term is identically zero.
    """
    resid = _residual(z, phi, basis, code)
    d = -alpha * np.asarray(phi.T @ resid, dtype=np.float64) @ code.T
    if input_code is not None and beta != 0.0:
        if trace is None or params is None or task_grad_z is None or a_hat is None:
            raise InvalidParams("literal-input basis gradient needs trace, params, a_hat and task_grad_z")
        b = _dense(phi @ a_hat) if phi_a is None else phi_a
        msgs = backprop_messages(trace, phi, a_hat, params, task_grad_z, activation, phi_a=b)
        g0 = (b @ params.layer_weights[0]).T @ msgs[0]
        d = d + beta * np.asarray(phi.T @ g0, dtype=np.float64) @ input_code.T
    return d


def grad_code(z, phi, basis, code, alpha: float, sparsity_weight: float) -> np.ndarray:
    """Code gradient alpha (-U^T Phi^T (Z - Phi U Hhat) + lam G).

    G is the row-normalized subgradient of the l_{2,1} norm: Hhat_i/||Hhat_i||
    on nonzero rows, zero on zero rows.
    """
    resid = _residual(z, phi, basis, code)
    data_term = -basis.T @ np.asarray(phi.T @ resid, dtype=np.float64)
    norms = np.linalg.norm(code, axis=1)
    sub = np.zeros_like(code)
    nz = norms > 0
    sub[nz] = code[nz] / norms[nz, None]
    return alpha * (data_term + sparsity_weight * sub)


class _Optimizer:
    """Plain descent or bias-corrected adaptive-moment steps, keyed per array."""

    def __init__(self, kind: str, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.kind = kind
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.slots: dict = {}

    def step(self, key, value, grad, lr):
        if self.kind == "plain":
            return value - lr * grad
        m, v, t = self.slots.get(key, (np.zeros_like(value), np.zeros_like(value), 0))
        t += 1
        m = self.beta1 * m + (1 - self.beta1) * grad
        v = self.beta2 * v + (1 - self.beta2) * grad * grad
        self.slots[key] = (m, v, t)
        m_hat = m / (1 - self.beta1**t)
        v_hat = v / (1 - self.beta2**t)
        return value - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def apply_updates(params: ModelParams, basis: Basis, code: SparseCode, grads: GradientSet,
                  hyper: Hyperparams, optimizer: _Optimizer | None = None):
    """One descent step on all three parameter groups.

    Layer weights use the configured optimizer; the basis takes a plain step
    followed by the polar projection back onto the orthogonal matrices; the
    code takes a plain step.
    """
    opt = optimizer if optimizer is not None else _Optimizer(hyper.optimizer)
    new_weights = [
        opt.step(("w", i), w, g, hyper.lr_theta)
        for i, (w, g) in enumerate(zip(params.layer_weights, grads.d_weights))
    ]
    new_basis = polar_project(basis.matrix - hyper.lr_u * grads.d_basis)
    new_code = code.code - hyper.lr_h * grads.d_code
    return (
        ModelParams(layer_weights=new_weights),
        Basis(matrix=new_basis),
        SparseCode(code=new_code, nominal_sparsity=code.nominal_sparsity),
    )


# ---------------------------------------------------------------------------
# tasks as seen by the trainer


@dataclass
class NodeClassificationTask:
    labels: np.ndarray
    train_nodes: np.ndarray
    valid_nodes: np.ndarray
    test_nodes: np.ndarray

    kind: str = field(default="node-class", init=False)

    @property
    def num_classes(self) -> int:
        return int(np.max(self.labels)) + 1

    def train_mask(self, num_nodes: int) -> np.ndarray:
        mask = np.zeros(num_nodes, dtype=bool)
        mask[self.train_nodes] = True
        return mask


@dataclass
class LinkPredictionTask:
    pos_train: np.ndarray
    pos_valid: np.ndarray
    pos_test: np.ndarray
    neg_valid: np.ndarray
    neg_test: np.ndarray
    neg_train: np.ndarray | None = None
    margin: float = 0.5
    hits_k: int = 10

    kind: str = field(default="link-pred", init=False)


@dataclass
class EpochRecord:
    epoch: int
    total_loss: float
    recon_loss: float
    gnn_loss: float
    train_metric: float
    valid_metric: float
    ortho_residual: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    sampling_seconds: float = 0.0
    training_seconds: float = 0.0
    eval_seconds: float = 0.0
    sampling_invocations: int = 0

    def loss_curve(self) -> np.ndarray:
        return np.asarray([[r.total_loss, r.recon_loss, r.gnn_loss] for r in self.records])


@dataclass
class TrainResult:
    params: ModelParams
    basis: Basis
    code: SparseCode
    head: ClassifierHead | None
    operator: SamplingOperator
    propagation: PropagationMatrix
    trace: ForwardTrace
    history: TrainHistory
    hyper: Hyperparams

    def reconstructed_embeddings(self) -> np.ndarray:
        """Node embeddings recovered from the trained basis/code pair."""
        return self.basis.matrix @ self.code.code

    def propagated_embeddings(self) -> np.ndarray:
        """Output-layer embeddings with every node participating:
        act(Ahat W^(L) T^(L-1)) on the final trained trace."""
        pre = self.propagation.matrix @ (self.params.layer_weights[-1] @ self.trace.inputs[-1])
        return activate(np.asarray(pre, dtype=np.float64), self.hyper.activation)

    def node_embeddings(self, readout: str | None = None) -> np.ndarray:
        mode = readout if readout is not None else self.hyper.readout
        if mode == "reconstruction":
            return self.reconstructed_embeddings()
        if mode == "propagated":
            return self.propagated_embeddings()
        raise InvalidParams(f"readout must be one of {READOUTS}, got {mode!r}")


def _cosine_scores(h, edges):
    hi, hj = h[edges[:, 0]], h[edges[:, 1]]
    ni = np.maximum(np.linalg.norm(hi, axis=1), 1e-12)
    nj = np.maximum(np.linalg.norm(hj, axis=1), 1e-12)
    return np.sum(hi * hj, axis=1) / (ni * nj)


def _sample_negative_edges(g: Graph, count: int, rng: np.random.Generator) -> np.ndarray:
    existing = {(int(u), int(v)) for u, v in g.edges}
    out = []
    while len(out) < count:
        u = int(rng.integers(g.num_nodes))
        v = int(rng.integers(g.num_nodes))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in existing:
            continue
        out.append(key)
    return np.asarray(out, dtype=np.int64)


def train(g: Graph, x: np.ndarray, task, hyper: Hyperparams, seed: int = 0,
          propagation: PropagationMatrix | None = None) -> TrainResult:
    """Full training run: one operator build, then the epoch loop.

    Stops at the epoch cap or once the total loss has improved by less than
    ``plateau_tol`` (relative) for ``plateau_patience`` consecutive epochs.
    """
    streams = RngStreams(seed)
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    m = hyper.num_measurements
    if m > n:
        raise InvalidParams(f"num_measurements {m} exceeds num_nodes {n}")
    a_hat = propagation if propagation is not None else normalized_laplacian(g)

    history = TrainHistory()
    builds_before = sampler.operator_build_count
    t_start = time.perf_counter()
    profile = node_scores(a_hat, hyper.score_mode, m)
    op = build_sampling_operator(
        g, profile, m, streams.get("structure"), streams.get("gaussian"),
        neighbor_mode=hyper.neighbor_mode,
    )
    history.sampling_seconds = time.perf_counter() - t_start
    history.sampling_invocations = sampler.operator_build_count - builds_before

    init_rng = streams.get("init")
    w_std = np.sqrt(2.0 / (n + m))
    params = ModelParams(layer_weights=[w_std * init_rng.standard_normal((n, m))
                                        for _ in range(hyper.num_layers)])
    basis = Basis(matrix=np.eye(n))
    code = SparseCode(code=1e-2 * init_rng.standard_normal((n, d)))

    head = None
    train_mask = None
    link_cfg = None
    if task.kind == "node-class":
        head = ClassifierHead.init(d, task.num_classes, init_rng)
        train_mask = task.train_mask(n)
    else:
        neg_train = task.neg_train
        if neg_train is None:
            neg_train = _sample_negative_edges(g, task.pos_train.shape[0], streams.get("data"))
        link_cfg = LinkLossConfig(pos_edges=task.pos_train, neg_edges=neg_train, margin=task.margin)

    phi_a = _dense(op.phi @ a_hat.matrix)
    optimizer = _Optimizer(hyper.optimizer)
    t0 = initial_measurements(op.phi, x)

    plateau = 0
    prev_total = None
    trace = None
    for epoch in range(hyper.epochs):
        tic = time.perf_counter()
        trace = forward(op.phi, a_hat.matrix, params, t0, hyper.activation, phi_a=phi_a)
        z = trace.output
        recon = reconstruction_loss(z, op.phi, basis.matrix, code.code, hyper.sparsity_weight)

        if task.kind == "node-class":
            gnn, task_grad_z = classification_loss(z, head, op.anchors, task.labels, train_mask)
            dw_head, db_head = classification_head_gradients(z, head, op.anchors, task.labels, train_mask)
            task_grad_h = None
        else:
            h_rec = basis.matrix @ code.code
            gnn, task_grad_h = link_loss(h_rec, link_cfg)
            task_grad_z = np.zeros_like(z)

        total = total_loss(recon, gnn, hyper.alpha, hyper.beta)
        if not np.isfinite(total):
            raise NonFinite(f"total loss diverged at epoch {epoch}; reduce the learning rates")

        d_weights, _ = grad_weights(trace, op.phi, a_hat.matrix, params, basis.matrix, code.code,
                                    task_grad_z, hyper.alpha, hyper.beta, hyper.activation, phi_a=phi_a)
        d_basis = grad_basis(z, op.phi, basis.matrix, code.code, hyper.alpha)
        d_code = grad_code(z, op.phi, basis.matrix, code.code, hyper.alpha, hyper.sparsity_weight)
        if task_grad_h is not None:
            d_code = d_code + hyper.beta * (basis.matrix.T @ task_grad_h)
        grads = GradientSet(d_weights=d_weights, d_basis=d_basis, d_code=d_code)

        params, basis, code = apply_updates(params, basis, code, grads, hyper, optimizer)
        if task.kind == "node-class":
            head = ClassifierHead(
                weight=optimizer.step(("head", "w"), head.weight, hyper.beta * dw_head, hyper.lr_theta),
                bias=optimizer.step(("head", "b"), head.bias, hyper.beta * db_head, hyper.lr_theta),
            )
        history.training_seconds += time.perf_counter() - tic

        tic = time.perf_counter()
        snapshot = TrainResult(params=params, basis=basis, code=code, head=head, operator=op,
                               propagation=a_hat, trace=trace, history=history, hyper=hyper)
        train_metric, valid_metric = _epoch_metrics(snapshot, task)
        history.eval_seconds += time.perf_counter() - tic

        history.records.append(EpochRecord(
            epoch=epoch, total_loss=total, recon_loss=recon, gnn_loss=gnn,
            train_metric=train_metric, valid_metric=valid_metric,
            ortho_residual=basis.orthonormality_residual,
        ))

        if prev_total is not None:
            if prev_total - total < hyper.plateau_tol * max(abs(prev_total), 1e-30):
                plateau += 1
            else:
                plateau = 0
            if plateau >= hyper.plateau_patience:
                break
        prev_total = total

    return TrainResult(params=params, basis=basis, code=code, head=head, operator=op,
                       propagation=a_hat, trace=trace, history=history, hyper=hyper)


def predict_classes(result: TrainResult, readout: str | None = None) -> np.ndarray:
    """Per-node class predictions: argmax of the head on node embeddings."""
    h = result.node_embeddings(readout)
    logits = h @ result.head.weight + result.head.bias
    return np.argmax(logits, axis=1)


def _epoch_metrics(result: TrainResult, task) -> tuple[float, float]:
    if task.kind == "node-class":
        pred = predict_classes(result)
        train_m = float(np.mean(pred[task.train_nodes] == task.labels[task.train_nodes]))
        valid_m = float(np.mean(pred[task.valid_nodes] == task.labels[task.valid_nodes])) \
            if task.valid_nodes.size else 0.0
        return train_m, valid_m
    h = result.node_embeddings()
    train_m = 0.0
    if task.pos_train.shape[0]:
        train_m = float(np.mean(_cosine_scores(h, task.pos_train) > 0))
    valid_m = 0.0
    if task.pos_valid.shape[0] and task.neg_valid.shape[0]:
        valid_m = hits_at_k(_cosine_scores(h, task.pos_valid),
                            _cosine_scores(h, task.neg_valid), task.hits_k)
    return train_m, valid_m


def link_scores(result: TrainResult, edges: np.ndarray, readout: str | None = None) -> np.ndarray:
    """Cosine scores for candidate edges under the chosen readout."""
    return _cosine_scores(result.node_embeddings(readout), np.asarray(edges, dtype=np.int64))
