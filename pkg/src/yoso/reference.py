"""Reference computations the sampled engine is validated against.

Contains a conventional dense GCN (forward plus a small trainer for
baseline comparisons), the no-sampling forward of the sampled recursion,
the naive per-layer sample/recover/reconstruct pipeline, the
layer-accumulated reconstruction error bound, and the heatmap generator
for reconstruction-vs-reference differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .engine import ModelParams, _Optimizer, activate, activate_deriv
from .errors import DeltaOutOfRange, InsufficientNodes, InvalidParams, ShapeMismatch
from .graph import PropagationMatrix
from .recovery import RecoveryProblem, ista_recover, reconstruct_nodes
from .tasks import ClassifierHead, LinkLossConfig, link_loss, softmax


def _dense(x):
    return x.toarray() if sp.issparse(x) else np.asarray(x, dtype=np.float64)


def dense_gcn_forward(a_hat, x, weights, activation: str) -> np.ndarray:
    """Conventional full-batch recursion H^(l) = act(Ahat H^(l-1) W^(l))."""
    a = _dense(a_hat.matrix if isinstance(a_hat, PropagationMatrix) else a_hat)
    h = np.asarray(x, dtype=np.float64)
    for w in weights:
        if h.shape[1] != w.shape[0]:
            raise ShapeMismatch(f"embedding width {h.shape[1]} vs weight rows {w.shape[0]}")
        h = activate(a @ h @ w, activation)
    return h


def full_participation_forward(a_hat, params: ModelParams, x, activation: str) -> np.ndarray:
    """The sampled recursion with the identity operator (no sampling).

    Shapes force square layer weights here, so this is only defined for
    models whose measurement count equals the node count.  Uses the same
    association order as the engine so the two agree bitwise.
    """
    a = _dense(a_hat.matrix if isinstance(a_hat, PropagationMatrix) else a_hat)
    n = a.shape[0]
    t = np.asarray(x, dtype=np.float64)
    for w in params.layer_weights:
        if w.shape != (n, n):
            raise ShapeMismatch(
                f"no-sampling recursion needs square {n}x{n} weights, got {w.shape}"
            )
        t = activate((a @ w) @ t, activation)
    return t


def output_layer_full_participation(a_hat, params: ModelParams, trace, activation: str) -> np.ndarray:
    """Node-domain output embedding act(Ahat W^(L) T^(L-1)) for a trained run.

    This is the full-node-participation counterpart of the output
    measurements: the final measurement matrix equals the sampled projection
    of this quantity's pre-activation.
    """
    a = a_hat.matrix if isinstance(a_hat, PropagationMatrix) else a_hat
    pre = a @ (params.layer_weights[-1] @ trace.inputs[-1])
    return activate(np.asarray(pre, dtype=np.float64), activation)


def naive_cs_forward(a_hat, x, weights, phi, u_fixed, lam: float,
                     activation: str = "relu", max_iters: int = 5000, tol: float = 1e-10) -> np.ndarray:
    """Per-layer sample -> recover -> reconstruct -> dense layer pipeline.

    The accurate but slow reference: at every layer the embedding matrix is
    compressed to measurements, recovered by proximal descent against the
    fixed orthonormal basis, lifted back to the node domain and only then
    pushed through the dense layer.
    """
    a = _dense(a_hat.matrix if isinstance(a_hat, PropagationMatrix) else a_hat)
    operator = _dense(phi) @ u_fixed
    h = np.asarray(x, dtype=np.float64)
    for w in weights:
        t = _dense(phi) @ h
        problem = RecoveryProblem(measurements=t, operator=operator, sparsity_weight=lam,
                                  max_iters=max_iters, tol=tol)
        code = ista_recover(problem).code
        h = reconstruct_nodes(u_fixed, code)
        h = activate(a @ h @ w, activation)
    return h


@dataclass(frozen=True)
class ErrorBoundReport:
    """Comparison of a sampled-and-reconstructed output against a reference.

    ``bound = (lipschitz / (1 - delta_hat))**layers * residual_norm`` and
    ``holds`` records whether the measured error stays under it.
    ``c_rec = 2 delta_hat / (1 - delta_hat)`` is the single-recovery
    constant implied by the isometry estimate.
    """

    measured_error: float
    residual_norm: float
    delta_hat: float
    lipschitz: float
    layers: int
    bound: float
    holds: bool
    c_rec: float


def check_error_bound(h_ref, h_tilde, z, phi, basis, code, delta_hat: float,
                      lipschitz: float, layers: int) -> ErrorBoundReport:
    """Populate the :class:`ErrorBoundReport` for one trained run."""
    if not (0.0 <= delta_hat < 1.0):
        raise DeltaOutOfRange(f"delta_hat {delta_hat} outside [0, 1); the bound is vacuous")
    h_ref = np.asarray(h_ref, dtype=np.float64)
    h_tilde = np.asarray(h_tilde, dtype=np.float64)
    if h_ref.shape != h_tilde.shape:
        raise ShapeMismatch(f"reference {h_ref.shape} vs reconstruction {h_tilde.shape}")
    resid = np.asarray(z - phi @ (basis @ code), dtype=np.float64)
    residual_norm = float(np.linalg.norm(resid))
    measured = float(np.linalg.norm(h_tilde - h_ref))
    bound = (lipschitz / (1.0 - delta_hat)) ** layers * residual_norm
    return ErrorBoundReport(
        measured_error=measured,
        residual_norm=residual_norm,
        delta_hat=float(delta_hat),
        lipschitz=float(lipschitz),
        layers=int(layers),
        bound=float(bound),
        holds=bool(measured <= bound),
        c_rec=float(2.0 * delta_hat / (1.0 - delta_hat)),
    )


@dataclass(frozen=True)
class HeatmapSample:
    """10x10 grid of absolute embedding differences at sampled (node, dim) cells."""

    grid: np.ndarray
    nodes: np.ndarray
    dims: np.ndarray

    @property
    def mean_value(self) -> float:
        return float(self.grid.mean())


def heatmap_diff(h_ref, h_recon, node_pool, rng: np.random.Generator,
                 num_nodes: int = 10, num_dims: int = 10) -> HeatmapSample:
    """Sample nodes from the pool plus embedding dimensions, tabulate |diff|."""
    h_ref = np.asarray(h_ref, dtype=np.float64)
    h_recon = np.asarray(h_recon, dtype=np.float64)
    if h_ref.shape != h_recon.shape:
        raise ShapeMismatch(f"reference {h_ref.shape} vs reconstruction {h_recon.shape}")
    pool = np.asarray(node_pool, dtype=np.int64)
    if pool.size < num_nodes or h_ref.shape[1] < num_dims:
        raise InsufficientNodes(
            f"need >= {num_nodes} candidate nodes and >= {num_dims} dims, "
            f"got {pool.size} and {h_ref.shape[1]}"
        )
    nodes = rng.choice(pool, size=num_nodes, replace=False)
    dims = rng.choice(h_ref.shape[1], size=num_dims, replace=False)
    grid = np.abs(h_ref[np.ix_(nodes, dims)] - h_recon[np.ix_(nodes, dims)])
    return HeatmapSample(grid=grid, nodes=nodes, dims=dims)


# ---------------------------------------------------------------------------
# dense GCN baseline trainer (for end-to-end comparisons)


@dataclass
class DenseGcnResult:
    weights: list
    head: ClassifierHead | None
    embeddings: np.ndarray = field(repr=False)
    loss_history: list = field(default_factory=list)

    def predict_classes(self) -> np.ndarray:
        logits = self.embeddings @ self.head.weight + self.head.bias
        return np.argmax(logits, axis=1)


def _dense_gcn_trace(a, x, weights, activation):
    hs = [np.asarray(x, dtype=np.float64)]
    pres = []
    for w in weights:
        s = a @ hs[-1] @ w
        pres.append(s)
        hs.append(activate(s, activation))
    return hs, pres


def _dense_gcn_backprop(a, weights, activation, hs, pres, grad_out):
    """Gradients of the dense recursion for an upstream dL/dH^(L)."""
    d_weights = [None] * len(weights)
    dh = grad_out
    for l in range(len(weights) - 1, -1, -1):
        ds = dh * activate_deriv(pres[l], activation)
        d_weights[l] = (a @ hs[l]).T @ ds
        dh = a.T @ ds @ weights[l].T
    return d_weights


def train_dense_gcn(a_hat, x, task, num_layers: int = 2, lr: float = 0.01,
                    epochs: int = 300, activation: str = "relu", seed: int = 0,
                    link_margin: float = 0.5) -> DenseGcnResult:
    """Train the conventional dense GCN on the same data and task.

    Node classification uses a linear softmax head on output embeddings of
    train nodes; link prediction uses the cosine/hinge loss on train edges.
    Layer weights stay d x d, optimized with adaptive moments.
    """
    a = _dense(a_hat.matrix if isinstance(a_hat, PropagationMatrix) else a_hat)
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=(7,))))
    weights = [np.sqrt(2.0 / (2 * d)) * rng.standard_normal((d, d)) for _ in range(num_layers)]

    head = None
    link_cfg = None
    if task.kind == "node-class":
        head = ClassifierHead.init(d, task.num_classes, rng)
    else:
        neg = task.neg_train
        if neg is None:
            raise InvalidParams("dense link baseline needs explicit negative training edges")
        link_cfg = LinkLossConfig(pos_edges=task.pos_train, neg_edges=neg, margin=link_margin)

    opt = _Optimizer("adaptive-moment")
    losses = []
    for _ in range(epochs):
        hs, pres = _dense_gcn_trace(a, x, weights, activation)
        h_out = hs[-1]
        if task.kind == "node-class":
            rows = task.train_nodes
            logits = h_out[rows] @ head.weight + head.bias
            probs = softmax(logits)
            labels = task.labels[rows]
            picked = probs[np.arange(rows.size), labels]
            loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
            dlogits = probs.copy()
            dlogits[np.arange(rows.size), labels] -= 1.0
            dlogits /= rows.size
            grad_h = np.zeros_like(h_out)
            grad_h[rows] = dlogits @ head.weight.T
            dw_head = h_out[rows].T @ dlogits
            db_head = dlogits.sum(axis=0)
        else:
            loss, grad_h = link_loss(_nonzero_rows(h_out), link_cfg)
            dw_head = db_head = None
        losses.append(loss)

        d_weights = _dense_gcn_backprop(a, weights, activation, hs, pres, grad_h)
        weights = [opt.step(("w", i), w, g, lr) for i, (w, g) in enumerate(zip(weights, d_weights))]
        if head is not None:
            head = ClassifierHead(
                weight=opt.step(("head", "w"), head.weight, dw_head, lr),
                bias=opt.step(("head", "b"), head.bias, db_head, lr),
            )

    hs, _ = _dense_gcn_trace(a, x, weights, activation)
    return DenseGcnResult(weights=weights, head=head, embeddings=hs[-1], loss_history=losses)


def _nonzero_rows(h, floor: float = 1e-9):
    """Nudge all-zero rows so the cosine loss stays defined early in training."""
    norms = np.linalg.norm(h, axis=1)
    if np.all(norms >= 1e-12):
        return h
    out = h.copy()
    out[norms < 1e-12, 0] = floor
    return out


def dense_link_scores(result: DenseGcnResult, edges) -> np.ndarray:
    h = result.embeddings
    e = np.asarray(edges, dtype=np.int64)
    hi, hj = h[e[:, 0]], h[e[:, 1]]
    ni = np.maximum(np.linalg.norm(hi, axis=1), 1e-12)
    nj = np.maximum(np.linalg.norm(hj, axis=1), 1e-12)
    return np.sum(hi * hj, axis=1) / (ni * nj)
