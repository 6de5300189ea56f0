"""Construction of the one-time sampling operator and its validators.

The operator is the triple (S, Sigma, Phi): a binary structural pattern S
whose rows are anchor nodes plus (a subset of) their 1-hop neighborhoods, a
Gaussian weight matrix Sigma whose entry in column j has variance 1/g(j)
with g(j) the number of structural hits on node j, and their element-wise
product Phi.  Phi is built once per training run; the validators probe its
row rank and its empirical isometry constant on random row-sparse inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParams, RankDeficient, ShapeMismatch, ZeroProbabilityMass
from .graph import Graph, PropagationMatrix
from .linalg import sym_eigendecompose

SCORE_MODES = ("literal", "leverage")
NEIGHBOR_MODES = ("bernoulli", "full")

# Total number of operator constructions in this process; lets callers verify
# the build-once contract without instrumenting internals.
operator_build_count = 0


@dataclass(frozen=True)
class NodeScoreProfile:
    """Per-node sampling scores and the normalized distribution over nodes.

    ``literal`` binds the ascending spectrum of the propagation matrix to
    node index order and normalizes it; ``leverage`` uses eigenvector
    leverage scores over the K eigenpairs with the largest eigenvalues
    (K = measurement count).  ``degenerate_fallback`` flags the uniform
    fallback taken when all scores vanish.
    """

    mode: str
    scores: np.ndarray
    probabilities: np.ndarray
    degenerate_fallback: bool = False


def node_scores(propagation: PropagationMatrix, mode: str, num_measurements: int) -> NodeScoreProfile:
    if mode not in SCORE_MODES:
        raise InvalidParams(f"score mode must be one of {SCORE_MODES}, got {mode!r}")
    n = propagation.num_nodes
    m = int(num_measurements)
    if n < 1:
        raise InvalidParams("propagation matrix has no nodes")
    eig = sym_eigendecompose(propagation.dense())
    if mode == "literal":
        scores = np.clip(eig.eigenvalues, 0.0, None)
    else:
        if m > n:
            raise InvalidParams(f"leverage mode needs num_measurements <= num_nodes, got {m} > {n}")
        top = eig.eigenvectors[:, n - m:]
        scores = np.sum(top * top, axis=1)
    total = float(scores.sum())
    if total <= 1e-300:
        probabilities = np.full(n, 1.0 / n)
        return NodeScoreProfile(mode=mode, scores=scores, probabilities=probabilities,
                                degenerate_fallback=True)
    return NodeScoreProfile(mode=mode, scores=scores, probabilities=scores / total)


def build_structure(
    g: Graph,
    profile: NodeScoreProfile,
    num_measurements: int,
    rng: np.random.Generator,
    neighbor_mode: str = "bernoulli",
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Draw the binary structural pattern S and its anchor list.

    Anchors are drawn i.i.d. (with replacement) from the profile's
    distribution.  Row r always contains a 1 at its anchor; in ``bernoulli``
    mode each neighbor of the anchor joins independently with probability
    1/deg(anchor) (one extra hit per row in expectation), in ``full`` mode
    the whole 1-hop neighborhood joins.  No row is ever all-zero.
    """
    if neighbor_mode not in NEIGHBOR_MODES:
        raise InvalidParams(f"neighbor mode must be one of {NEIGHBOR_MODES}, got {neighbor_mode!r}")
    m = int(num_measurements)
    if m < 1:
        raise InvalidParams("need at least one measurement row")
    p = np.asarray(profile.probabilities, dtype=np.float64)
    if p.shape != (g.num_nodes,) or np.any(~np.isfinite(p)) or np.any(p < 0) or p.sum() <= 0:
        raise ZeroProbabilityMass("profile probabilities are not a usable distribution")
    p = p / p.sum()

    anchors = rng.choice(g.num_nodes, size=m, replace=True, p=p)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for r, a in enumerate(anchors):
        nbrs = g.neighbors(int(a))
        if neighbor_mode == "bernoulli" and nbrs.size:
            mask = rng.random(nbrs.size) < 1.0 / nbrs.size
            nbrs = nbrs[mask]
        support = np.unique(np.concatenate([[a], nbrs]))
        rows.append(np.full(support.size, r, dtype=np.int64))
        cols.append(support.astype(np.int64))
    row_idx = np.concatenate(rows)
    col_idx = np.concatenate(cols)
    structure = sp.csr_matrix(
        (np.ones(row_idx.size), (row_idx, col_idx)), shape=(m, g.num_nodes)
    )
    structure.sum_duplicates()
    structure.data[:] = 1.0
    return structure, anchors.astype(np.int64)


def column_counts(structure: sp.spmatrix) -> np.ndarray:
    """g(j): number of nonzero structural entries in each column."""
    return np.asarray((structure != 0).sum(axis=0)).ravel().astype(np.int64)


def build_gaussian(structure: sp.csr_matrix, rng: np.random.Generator) -> sp.csr_matrix:
    """Gaussian fill on the structural support: entry (i, j) ~ N(0, 1/g(j)).

    Draws happen in CSR (row-major) order of the support, which fixes the
    stream/value correspondence for reproducibility.
    """
    structure = structure.tocsr()
    structure.sort_indices()
    g = column_counts(structure)
    draws = rng.standard_normal(structure.nnz)
    std = 1.0 / np.sqrt(g[structure.indices].astype(np.float64))
    sigma = structure.copy()
    sigma.data = draws * std
    return sigma


def assemble_phi(structure: sp.spmatrix, sigma: sp.spmatrix) -> sp.csr_matrix:
    """Element-wise product Phi = S (*) Sigma."""
    if structure.shape != sigma.shape:
        raise ShapeMismatch(f"structure {structure.shape} vs gaussian {sigma.shape}")
    phi = sp.csr_matrix(structure.multiply(sigma))
    phi.sort_indices()
    return phi


def verify_full_rank(phi: sp.spmatrix | np.ndarray, rel_tol: float = 1e-10) -> int:
    """Numerical row rank of Phi: singular values above rel_tol * largest."""
    dense = phi.toarray() if sp.issparse(phi) else np.asarray(phi, dtype=np.float64)
    s = np.linalg.svd(dense, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


@dataclass(frozen=True)
class SamplingOperator:
    """The assembled (S, Sigma, Phi) triple with its bookkeeping."""

    structure: sp.csr_matrix = field(repr=False)
    anchors: np.ndarray = field(repr=False)
    gaussian: sp.csr_matrix = field(repr=False)
    phi: sp.csr_matrix = field(repr=False)
    column_counts: np.ndarray = field(repr=False)
    num_measurements: int

    @property
    def num_nodes(self) -> int:
        return self.phi.shape[1]


def build_sampling_operator(
    g: Graph,
    profile: NodeScoreProfile,
    num_measurements: int,
    structure_rng: np.random.Generator,
    gaussian_rng: np.random.Generator,
    neighbor_mode: str = "bernoulli",
    max_retries: int = 3,
) -> SamplingOperator:
    """Build the operator once, redrawing Sigma on (improbable) rank loss.

    A fresh Gaussian fill is drawn at most ``max_retries`` times before
    giving up with :class:`RankDeficient`.
    """
    global operator_build_count
    operator_build_count += 1
    structure, anchors = build_structure(g, profile, num_measurements, structure_rng, neighbor_mode)
    g_counts = column_counts(structure)
    for _ in range(max_retries + 1):
        sigma = build_gaussian(structure, gaussian_rng)
        phi = assemble_phi(structure, sigma)
        if verify_full_rank(phi) == num_measurements:
            return SamplingOperator(
                structure=structure,
                anchors=anchors,
                gaussian=sigma,
                phi=phi,
                column_counts=g_counts,
                num_measurements=int(num_measurements),
            )
    raise RankDeficient(
        f"sampling matrix stayed rank-deficient after {max_retries} Gaussian redraws"
    )


@dataclass(frozen=True)
class RipEstimate:
    """Empirical restricted-isometry probe of Phi @ U at row-sparsity k.

    ``delta_hat = max(1 - min_ratio, max_ratio - 1)`` over the observed
    energy ratios ||Phi U H||_F^2 / ||H||_F^2; the property is declared
    satisfied when delta_hat < 1.
    """

    k: int
    trials: int
    delta_hat: float
    min_ratio: float
    max_ratio: float
    satisfied: bool

    @property
    def ratio_spread(self) -> float:
        return self.max_ratio - self.min_ratio


def estimate_rip(
    phi: sp.spmatrix | np.ndarray,
    basis: np.ndarray,
    k: int,
    trials: int,
    rng: np.random.Generator,
    num_columns: int = 1,
) -> RipEstimate:
    """Probe the energy ratio on random unit-norm inputs with k nonzero rows."""
    if k < 1 or trials < 1:
        raise InvalidParams("k and trials must both be >= 1")
    a = (phi @ basis) if not sp.issparse(phi) else (phi @ basis)
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[1]
    if k > n:
        raise InvalidParams(f"sparsity order {k} exceeds dimension {n}")
    ratios = np.empty(trials)
    for t in range(trials):
        support = rng.choice(n, size=k, replace=False)
        content = rng.standard_normal((k, num_columns))
        content /= np.linalg.norm(content)
        ratios[t] = float(np.sum((a[:, support] @ content) ** 2))
    min_ratio = float(ratios.min())
    max_ratio = float(ratios.max())
    delta_hat = max(1.0 - min_ratio, max_ratio - 1.0)
    return RipEstimate(
        k=int(k),
        trials=int(trials),
        delta_hat=delta_hat,
        min_ratio=min_ratio,
        max_ratio=max_ratio,
        satisfied=bool(delta_hat < 1.0),
    )
