"""Dense symmetric eigendecomposition and the orthogonal polar projection.

Both are thin, contract-checked fronts over LAPACK (via numpy): desk-scale
problems (N up to a few thousand) do not justify a hand-rolled solver, and
the contracts below are what the rest of the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DidNotConverge, NotSymmetric, RankDeficient, ShapeMismatch


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in ascending order; eigenvectors as matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_square(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got shape {a.shape}")
    return a


def sym_eigendecompose(a: np.ndarray, rel_tol: float = 1e-10) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    The input must be symmetric within ``rel_tol`` relative to its own norm.
    The decomposition satisfies ``||A - Q diag(w) Q^T||_F <= 1e-8 ||A||_F``
    and ``||Q^T Q - I||_F <= 1e-10``.
    """
    a = _as_square(a, "matrix")
    scale = np.linalg.norm(a)
    asym = np.linalg.norm(a - a.T)
    if asym > rel_tol * max(scale, 1.0):
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds tolerance {rel_tol:.1e} * {max(scale, 1.0):.3e}")
    sym = 0.5 * (a + a.T)
    try:
        w, q = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise DidNotConverge(str(exc)) from exc
    return EigenDecomposition(eigenvalues=w, eigenvectors=q)


def polar_project(u_temp: np.ndarray, cond_tol: float = 1e-12) -> np.ndarray:
    """Nearest orthogonal matrix in Frobenius norm (the orthogonal polar factor).

    Computed from the SVD ``U_temp = P S Q^T`` as ``P Q^T``.  Raises
    :class:`RankDeficient` when the smallest singular value falls below
    ``cond_tol`` times the largest, since the polar factor is then not
    uniquely determined.
    """
    u_temp = _as_square(u_temp, "u_temp")
    try:
        p, s, qt = np.linalg.svd(u_temp)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise DidNotConverge(str(exc)) from exc
    if s[0] == 0.0 or s[-1] < cond_tol * s[0]:
        raise RankDeficient(
            f"singular value ratio {0.0 if s[0] == 0 else s[-1] / s[0]:.3e} below {cond_tol:.1e}"
        )
    return p @ qt


def orthonormality_residual(u: np.ndarray) -> float:
    """``||U^T U - I||_F``, the departure from orthonormality."""
    u = np.asarray(u, dtype=np.float64)
    return float(np.linalg.norm(u.T @ u - np.eye(u.shape[1])))


def random_orthonormal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random orthogonal matrix from the polar factor of a Gaussian."""
    return polar_project(rng.standard_normal((n, n)))
