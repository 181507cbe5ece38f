"""Dense symmetric linear algebra primitives.

Matrices are plain ``numpy.ndarray`` objects. Symmetric inputs are checked on
entry; orthonormal bases are ``(n, d)`` arrays with ``U.T @ U == I_d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "EigenSolverError",
    "DegenerateAlignmentError",
    "EigPair",
    "Norms",
    "check_symmetric",
    "check_orthonormal",
    "top_d_eigs",
    "hollow",
    "matrix_sign",
    "align",
    "two_to_infty",
    "norms",
    "principal_cosines",
    "principal_sines",
]

SYMMETRY_RTOL = 1e-10
ORTHO_TOL = 1e-10
GAP_TOL = 1e-12
SIGN_RANK_TOL = 1e-12


class EigenSolverError(np.linalg.LinAlgError):
    """The dense eigensolver failed to converge."""


class DegenerateAlignmentError(ValueError):
    """``matrix_sign`` was asked to orthogonalize a rank-deficient matrix."""


@dataclass(frozen=True)
class EigPair:
    """Leading eigenpairs of a symmetric matrix.

    ``values`` are sorted in descending algebraic order and ``basis`` holds the
    matching unit eigenvectors as columns. ``degenerate`` is set when the
    ``d``-th and ``(d+1)``-th eigenvalues coincide, in which case the basis is
    only one of many valid choices.
    """

    values: np.ndarray
    basis: np.ndarray
    degenerate: bool = False
    gap: float = field(default=float("inf"))


class Norms(NamedTuple):
    spectral: float
    frobenius: float
    max_entry: float


def check_symmetric(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise ValueError(f"{name} must have n >= 1")
    scale = max(1.0, float(np.max(np.abs(a))))
    if not np.all(np.abs(a - a.T) <= SYMMETRY_RTOL * scale):
        raise ValueError(f"{name} is not symmetric")
    return a


def check_orthonormal(u, name: str = "basis", tol: float = ORTHO_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {u.shape}")
    n, d = u.shape
    if not 1 <= d <= n:
        raise ValueError(f"{name} needs 1 <= d <= n, got n={n}, d={d}")
    err = np.linalg.norm(u.T @ u - np.eye(d))
    if err > tol:
        raise ValueError(f"{name} columns are not orthonormal (error {err:.3e})")
    return u


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # largest |entry| of each column made positive; argmax picks the lowest index on ties
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def top_d_eigs(a, d: int) -> EigPair:
    """Return the ``d`` algebraically largest eigenpairs of symmetric ``a``.

    The full spectrum comes from LAPACK's symmetric driver (Householder
    tridiagonalization followed by a deterministic QR/divide-and-conquer
    stage), so identical inputs give identical outputs. Each eigenvector is
    oriented so that its largest-magnitude entry is positive.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric matrix.
    d : int
        Number of leading eigenpairs, ``1 <= d <= n``.

    Returns
    -------
    EigPair

    Raises
    ------
    ValueError
        If ``a`` is not square and symmetric or ``d`` is out of range.
    EigenSolverError
        If LAPACK reports non-convergence.
    """
    a = check_symmetric(a)
    n = a.shape[0]
    if not 1 <= d <= n:
        raise ValueError(f"need 1 <= d <= n, got d={d}, n={n}")
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from exc
    values = w[::-1][:d].copy()
    basis = _fix_signs(v[:, ::-1][:, :d].copy())
    gap = float("inf") if d == n else float(w[n - d] - w[n - d - 1])
    scale = max(1.0, float(np.max(np.abs(w))))
    return EigPair(values, basis, degenerate=gap <= GAP_TOL * scale, gap=gap)


def hollow(a) -> np.ndarray:
    """Copy of ``a`` with its diagonal set to zero."""
    out = np.array(a, dtype=float, copy=True)
    np.fill_diagonal(out, 0.0)
    return out


def matrix_sign(h) -> np.ndarray:
    """Orthogonal polar factor ``W1 @ W2.T`` of ``h = W1 diag(s) W2.T``.

    This is the orthogonal matrix closest to ``h`` in Frobenius norm.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"matrix_sign needs a square matrix, got {h.shape}")
    w1, s, w2t = np.linalg.svd(h)
    if s.size and s[-1] <= SIGN_RANK_TOL:
        raise DegenerateAlignmentError(
            f"smallest singular value {s[-1]:.3e} is below {SIGN_RANK_TOL:g}"
        )
    return w1 @ w2t


def align(u_hat, u) -> np.ndarray:
    """Orthogonal ``W`` such that ``u_hat @ W`` is aligned with ``u``."""
    u_hat = np.asarray(u_hat, dtype=float)
    u = np.asarray(u, dtype=float)
    if u_hat.shape != u.shape:
        raise ValueError(f"shape mismatch: {u_hat.shape} vs {u.shape}")
    return matrix_sign(u_hat.T @ u)


def two_to_infty(a) -> float:
    """Largest Euclidean row norm."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0.0
    return float(np.sqrt(np.max(np.sum(a * a, axis=1))))


def norms(a) -> Norms:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    gram = a.T @ a
    gram = (gram + gram.T) / 2
    top = max(float(top_d_eigs(gram, 1).values[0]), 0.0)
    return Norms(
        spectral=float(np.sqrt(top)),
        frobenius=float(np.linalg.norm(a)),
        max_entry=float(np.max(np.abs(a))) if a.size else 0.0,
    )


def principal_cosines(u, v) -> np.ndarray:
    """Singular values of ``u.T @ v`` in descending order, clipped to [0, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    s = np.linalg.svd(u.T @ v, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def principal_sines(u, v) -> np.ndarray:
    """``sqrt(1 - cos^2)`` of the principal angles, in ascending order."""
    c = principal_cosines(u, v)
    return np.sqrt(np.clip(1.0 - c * c, 0.0, 1.0))
