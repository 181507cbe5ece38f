"""Subspace estimators for the shared column space of a layer stack.

All estimators work from the sum of squared layers ``G = sum_t A_t A_t``
(equivalently ``A A^T`` for the horizontally concatenated ``A``). The
``*_from_gram`` variants accept a precomputed ``G`` so several estimators can
share one pass over the data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .linalg import EigenSolverError, hollow, top_d_eigs
from .model import LayerStack

__all__ = [
    "Embedding",
    "BcjseConfig",
    "gram_sum",
    "bcjse",
    "bcjse_from_gram",
    "sos",
    "sos_from_gram",
    "base",
    "base_from_gram",
    "mase",
    "hetero_pca",
    "hetero_pca_from_gram",
    "heteropca_impute",
    "recommend_rs",
]

GRAM_CHUNK = 32
HPCA_MAX_ITERS = 1000
HPCA_TOL = 1e-8
ROUNDOFF_STEPS = 64


@dataclass(frozen=True, eq=False)
class Embedding:
    basis: np.ndarray
    eigenvalues: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class BcjseConfig:
    d: int
    r_outer: int = 2
    s_inner: int = 1

    def __post_init__(self):
        if self.d < 1 or self.r_outer < 1 or self.s_inner < 1:
            raise ValueError(f"need d, R, S >= 1, got {self}")


def _embedding(g: np.ndarray, d: int, **diagnostics) -> Embedding:
    eig = top_d_eigs(g, d)
    diagnostics.setdefault("degenerate_gap", eig.degenerate)
    return Embedding(eig.basis, eig.values, diagnostics)


def gram_sum(stack: LayerStack) -> np.ndarray:
    """``sum_t A_t A_t`` accumulated in float64.

    Layers are multiplied in fixed chunks of ``GRAM_CHUNK`` as one
    ``(n, chunk * n)`` block product. Binary entries keep every partial sum an
    exact integer, so the result does not depend on BLAS blocking.
    """
    layers = stack.layers
    m, n, _ = layers.shape
    g = np.zeros((n, n))
    for start in range(0, m, GRAM_CHUNK):
        block = layers[start : start + GRAM_CHUNK].astype(float)
        flat = block.transpose(1, 0, 2).reshape(n, -1)
        g += flat @ flat.T
    return (g + g.T) / 2


def bcjse_from_gram(
    g: np.ndarray,
    cfg: BcjseConfig,
    *,
    hollow_gram: bool = True,
    correct_bias: bool = True,
) -> Embedding:
    """Bias-corrected joint spectral embedding of a precomputed gram matrix.

    Outer step ``r`` estimates the diagonal bias from the previous basis
    ``U = U_{(r-1)S}`` by ``S`` rounds of

        m_s = -diag(U U^T (H - diag(m_{s-1})) U U^T),   m_0 = 0,

    where ``H`` is the hollowed gram, then re-embeds ``H - diag(m_S)``. The
    first outer step starts from ``U = 0`` and therefore returns the plain
    hollowed embedding.

    ``hollow_gram`` and ``correct_bias`` switch off the two corrections; with
    both off this is the sum-of-squares embedding.
    """
    d, n = cfg.d, g.shape[0]
    if d > n:
        raise ValueError(f"d={d} exceeds n={n}")
    h = hollow(g) if hollow_gram else np.array(g, dtype=float)
    u_prev = np.zeros((n, d))
    bias = np.zeros(n)
    eig = None
    for _ in range(cfg.r_outer):
        bias = np.zeros(n)
        if correct_bias and u_prev.any():
            core = u_prev.T @ h @ u_prev
            for _ in range(cfg.s_inner):
                inner = core - (u_prev.T * bias) @ u_prev
                # diag(U inner U^T) row by row; never forms an n x n product
                bias = -np.einsum("ik,kl,il->i", u_prev, inner, u_prev)
        target = h
        if bias.any():
            target = h.copy()
            target[np.diag_indices(n)] -= bias
        eig = top_d_eigs(target, d)
        u_prev = eig.basis
    return Embedding(
        eig.basis,
        eig.values,
        {
            "r_outer": cfg.r_outer,
            "s_inner": cfg.s_inner,
            "iterations": cfg.r_outer * cfg.s_inner,
            "bias_diagonal": bias,
            "degenerate_gap": eig.degenerate,
        },
    )


def bcjse(stack: LayerStack, cfg: BcjseConfig) -> Embedding:
    return bcjse_from_gram(gram_sum(stack), cfg)


def sos_from_gram(g: np.ndarray, d: int) -> Embedding:
    return _embedding(g, d)


def sos(stack: LayerStack, d: int) -> Embedding:
    """Leading eigenvectors of the raw sum of squared layers."""
    return sos_from_gram(gram_sum(stack), d)


def base_from_gram(g: np.ndarray, d: int) -> Embedding:
    return _embedding(hollow(g), d)


def base(stack: LayerStack, d: int) -> Embedding:
    """Leading eigenvectors of the hollowed sum of squared layers."""
    return base_from_gram(gram_sum(stack), d)


def mase(stack: LayerStack, d: int, chunk: int = 128) -> Embedding:
    """Multiple adjacency spectral embedding.

    Each layer contributes the projector onto its ``d`` algebraically largest
    eigenvectors; the output spans the top-``d`` eigenspace of their sum.
    Projectors do not depend on eigenvector signs, so layers are
    diagonalized in batches.
    """
    m, n = stack.m, stack.n
    if not 1 <= d <= n:
        raise ValueError(f"need 1 <= d <= n, got d={d}, n={n}")
    proj = np.zeros((n, n))
    for start in range(0, m, chunk):
        block = stack.layers[start : start + chunk].astype(float)
        try:
            _, vecs = np.linalg.eigh(block)
        except np.linalg.LinAlgError as exc:
            raise EigenSolverError(str(exc)) from exc
        top = vecs[:, :, n - d :]
        flat = top.transpose(1, 0, 2).reshape(n, -1)
        proj += flat @ flat.T
    proj = (proj + proj.T) / 2
    return _embedding(proj, d)


def heteropca_impute(
    n_mat: np.ndarray,
    d: int,
    max_iters: int = HPCA_MAX_ITERS,
    tol: float = HPCA_TOL,
) -> tuple[np.ndarray, int, bool, float]:
    """Iteratively replace the diagonal of ``n_mat`` by that of its rank-``d`` truncation.

    Returns the imputed matrix, the number of iterations performed, whether
    the relative diagonal change reached ``tol``, and the last change.
    """
    if max_iters < 1 or tol <= 0:
        raise ValueError(f"need max_iters >= 1 and tol > 0, got {max_iters}, {tol}")
    work = np.array(n_mat, dtype=float, copy=True)
    idx = np.diag_indices(work.shape[0])
    change = float("inf")
    for it in range(1, max_iters + 1):
        eig = top_d_eigs(work, d)
        new_diag = np.einsum("ik,k,ik->i", eig.basis, eig.values, eig.basis)
        old_diag = work[idx]
        step = float(np.linalg.norm(new_diag - old_diag))
        scale = max(np.linalg.norm(new_diag), np.linalg.norm(old_diag))
        change = step / scale if scale > 0 else 0.0
        # a step at roundoff level of the whole matrix is a fixed point even when the diagonal is ~0
        floor = ROUNDOFF_STEPS * np.finfo(float).eps * float(np.linalg.norm(work))
        work[idx] = new_diag
        if change <= tol or step <= floor:
            return work, it, True, change
    return work, max_iters, False, change


def hetero_pca_from_gram(
    g: np.ndarray, d: int, max_iters: int = HPCA_MAX_ITERS, tol: float = HPCA_TOL
) -> Embedding:
    imputed, iters, converged, change = heteropca_impute(hollow(g), d, max_iters, tol)
    return _embedding(
        imputed, d, iterations=iters, converged=converged, diagonal_change=change
    )


def hetero_pca(
    stack: LayerStack, d: int, max_iters: int = HPCA_MAX_ITERS, tol: float = HPCA_TOL
) -> Embedding:
    """HeteroPCA on the sum of squared layers.

    Non-convergence within ``max_iters`` is reported through
    ``diagnostics["converged"]`` rather than raised.
    """
    return hetero_pca_from_gram(gram_sum(stack), d, max_iters, tol)


def recommend_rs(m: int, n: int) -> tuple[int, int]:
    """Smallest ``(R, S)`` with ``R >= ratio/2 + 1`` and ``S >= max(ratio/2, 1)``.

    ``ratio = log(m) / log(n)``. A relative slack of 1e-9 keeps exact powers
    (e.g. ``m = n**2``) from being pushed up by rounding in the logarithms.
    """
    if m < 2 or n < 2:
        raise ValueError(f"need m, n >= 2, got m={m}, n={n}")
    half = 0.5 * math.log(m) / math.log(n)
    r = math.ceil(half + 1 - 1e-9)
    s = max(1, math.ceil(half - 1e-9))
    return r, s
