"""Standalone row-sparse recovery from compressed measurements.

Solves  min_H  0.5 ||T - A H||_F^2 + lam * sum_i ||H_i,:||_2  by proximal
gradient descent (ISTA) with the exact row soft-threshold prox, plus a
brute-force exhaustive-support oracle for small instances and least-squares
debiasing on a fixed support.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParams, NotOrthonormal, ShapeMismatch, StepTooLarge, TooLarge
from .linalg import orthonormality_residual


def row_group_norm(x: np.ndarray) -> float:
    """Sum of Euclidean row norms (the l_{2,1} norm)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return float(np.linalg.norm(x, axis=1).sum())


def row_soft_threshold(x: np.ndarray, tau: float) -> np.ndarray:
    """Prox of tau * l_{2,1}: shrink each row's norm by tau, zeroing small rows."""
    if tau < 0:
        raise InvalidParams(f"threshold must be >= 0, got {tau}")
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - tau / norms[nz])
    return x * scale[:, None]


def largest_singular_value(a: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """Power iteration on A^T A with a deterministic start vector."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    last = 0.0
    for _ in range(iters):
        w = a.T @ (a @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - last) <= tol * max(norm, 1.0):
            break
        last = norm
    return float(np.sqrt(norm))


@dataclass
class RecoveryProblem:
    """Measurements, operator and solver knobs for one recovery.

    ``step`` defaults to 0.99 / sigma_max(A)^2, the largest step with a
    guaranteed monotone objective; a caller-supplied step may not exceed
    1 / sigma_max(A)^2 (small slack for the power-iteration estimate).
    """

    measurements: np.ndarray
    operator: np.ndarray
    sparsity_weight: float = 0.0
    step: float | None = None
    max_iters: int = 5000
    tol: float = 1e-9

    def __post_init__(self):
        self.measurements = np.asarray(self.measurements, dtype=np.float64)
        self.operator = np.asarray(
            self.operator.toarray() if sp.issparse(self.operator) else self.operator,
            dtype=np.float64,
        )
        if self.measurements.ndim != 2 or self.operator.ndim != 2:
            raise ShapeMismatch("measurements and operator must be 2-D")
        if self.measurements.shape[0] != self.operator.shape[0]:
            raise ShapeMismatch(
                f"operator rows {self.operator.shape[0]} vs measurement rows {self.measurements.shape[0]}"
            )
        if self.sparsity_weight < 0:
            raise InvalidParams("sparsity weight must be >= 0")
        smax = largest_singular_value(self.operator)
        limit = np.inf if smax == 0.0 else 1.0 / smax**2
        if self.step is None:
            self.step = 0.99 * limit if np.isfinite(limit) else 1.0
        elif self.step <= 0 or self.step > limit * 1.0000001:
            raise InvalidParams(f"step {self.step} outside (0, 1/sigma_max^2 = {limit:.6g}]")


@dataclass
class RecoveryResult:
    code: np.ndarray
    objective_history: np.ndarray = field(repr=False)
    support: np.ndarray
    iterations_used: int


def _objective(h, t, a, lam):
    resid = t - a @ h
    return 0.5 * float(np.sum(resid * resid)) + lam * row_group_norm(h)


def ista_recover(problem: RecoveryProblem) -> RecoveryResult:
    """Proximal gradient from H = 0 until relative objective change < tol.

    The objective history is nonincreasing by construction; an increase
    beyond slack signals a violated step bound and raises
    :class:`StepTooLarge`.
    """
    t, a, lam, step = problem.measurements, problem.operator, problem.sparsity_weight, problem.step
    n = a.shape[1]
    h = np.zeros((n, t.shape[1]))
    history = [_objective(h, t, a, lam)]
    iterations = 0
    for _ in range(problem.max_iters):
        grad = a.T @ (a @ h - t)
        h = row_soft_threshold(h - step * grad, step * lam)
        f = _objective(h, t, a, lam)
        prev = history[-1]
        if f > prev + 1e-12 * max(1.0, abs(prev)):
            raise StepTooLarge(f"objective rose from {prev:.6e} to {f:.6e}")
        history.append(f)
        iterations += 1
        if abs(prev - f) <= problem.tol * max(abs(prev), 1e-30):
            break
    support = np.flatnonzero(np.linalg.norm(h, axis=1) > 0)
    return RecoveryResult(
        code=h,
        objective_history=np.asarray(history),
        support=support,
        iterations_used=iterations,
    )


def least_squares_on_support(t: np.ndarray, a: np.ndarray, support) -> np.ndarray:
    """Debias: exact least-squares refit restricted to the given rows."""
    t = np.asarray(t, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    support = np.asarray(support, dtype=np.int64)
    h = np.zeros((a.shape[1], t.shape[1]))
    if support.size:
        sol, *_ = np.linalg.lstsq(a[:, support], t, rcond=None)
        h[support] = sol
    return h


def exhaustive_recover(t: np.ndarray, a: np.ndarray, k: int, budget: int = 100_000) -> np.ndarray:
    """Best size-k row support by full enumeration (small instances only).

    Every candidate support is refit by least squares; the support with the
    smallest residual wins, ties going to the lexicographically first.
    """
    t = np.asarray(t, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[1]
    if k < 0 or k > n:
        raise InvalidParams(f"support size {k} outside [0, {n}]")
    if comb(n, k) > budget:
        raise TooLarge(f"C({n},{k}) = {comb(n, k)} exceeds the enumeration budget {budget}")
    if k == 0:
        return np.zeros((n, t.shape[1]))
    best_resid = np.inf
    best_h = None
    for support in combinations(range(n), k):
        cols = a[:, support]
        sol, *_ = np.linalg.lstsq(cols, t, rcond=None)
        resid = float(np.linalg.norm(t - cols @ sol))
        if resid < best_resid - 1e-15:
            best_resid = resid
            best_h = (support, sol)
    h = np.zeros((n, t.shape[1]))
    h[list(best_h[0])] = best_h[1]
    return h


def reconstruct_nodes(basis: np.ndarray, code: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Lift a transform-domain code back to the node domain: H = U Hhat."""
    basis = np.asarray(basis, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    if basis.shape[1] != code.shape[0]:
        raise ShapeMismatch(f"basis {basis.shape} vs code {code.shape}")
    resid = orthonormality_residual(basis)
    if resid > tol:
        raise NotOrthonormal(f"basis residual {resid:.3e} exceeds {tol:.1e}")
    return basis @ code
