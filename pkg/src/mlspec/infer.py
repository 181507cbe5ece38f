"""Community detection and membership-profile testing on an embedding."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaincc, gammainccinv

from .embed import Embedding
from .model import CosieModel, LayerStack

__all__ = [
    "Clustering",
    "PluginEstimates",
    "VarianceObjects",
    "MembershipTestReport",
    "CovarianceError",
    "kmeans_rows",
    "wcss",
    "clustering_error",
    "plugin_estimates",
    "variance_objects_true",
    "variance_objects_plugin",
    "membership_test",
    "chi2_sf",
    "chi2_isf",
]

PROB_EPS = 1e-6
BRUTE_FORCE_MAX_K = 8


class CovarianceError(np.linalg.LinAlgError):
    """A covariance matrix needed for the test is not positive definite."""


@dataclass(frozen=True, eq=False)
class Clustering:
    labels: np.ndarray
    centroids: np.ndarray
    objective: float
    history: tuple[float, ...] = ()


def wcss(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    """Within-cluster sum of squared distances to the given centroids."""
    diff = x - centroids[labels]
    return float(np.sum(diff * diff))


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("ikd,ikd->ik", diff, diff)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        closest = np.minimum(closest, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centers)


def _repair_empty(x, labels, centroids, k):
    # move the point farthest from its centroid into each empty cluster
    for c in range(k):
        if np.any(labels == c):
            continue
        dist = np.sum((x - centroids[labels]) ** 2, axis=1)
        counts = np.bincount(labels, minlength=k)
        dist[counts[labels] <= 1] = -1.0
        far = int(np.argmax(dist))
        labels[far] = c
        centroids[c] = x[far]
    return labels


def _lloyd(x, k, max_iters, rng):
    centroids = _kmeanspp(x, k, rng)
    labels = np.argmin(_sq_dists(x, centroids), axis=1)
    labels = _repair_empty(x, labels, centroids, k)
    history = []
    for _ in range(max_iters):
        centroids = np.array([x[labels == c].mean(axis=0) for c in range(k)])
        history.append(wcss(x, labels, centroids))
        dist = _sq_dists(x, centroids)
        new = np.argmin(dist, axis=1)
        # keep the current label on exact ties so the objective cannot go up
        rows = np.arange(len(x))
        new = np.where(dist[rows, new] < dist[rows, labels], new, labels)
        new = _repair_empty(x, new, centroids, k)
        if np.array_equal(new, labels):
            break
        labels = new
    centroids = np.array([x[labels == c].mean(axis=0) for c in range(k)])
    obj = wcss(x, labels, centroids)
    history.append(obj)
    return labels, centroids, obj, tuple(history)


def kmeans_rows(
    x,
    k: int,
    restarts: int = 50,
    max_iters: int = 100,
    rng: np.random.Generator | None = None,
) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding on the rows of ``x``.

    The best of ``restarts`` independent runs is returned. Labels are
    0-based. ``history`` records the objective of the winning run after every
    centroid update and is non-increasing.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    best = None
    for _ in range(restarts):
        run = _lloyd(x, k, max_iters, rng)
        if best is None or run[2] < best[2]:
            best = run
    labels, centroids, obj, history = best
    return Clustering(labels, centroids, obj, history)


def clustering_error(labels, truth, k: int) -> int:
    """Misclassified vertices under the best relabeling of ``labels``.

    Exhaustive over permutations for ``k <= 8``, Hungarian matching otherwise.
    """
    labels = np.asarray(labels, dtype=int)
    truth = np.asarray(truth, dtype=int)
    if labels.shape != truth.shape:
        raise ValueError(f"shape mismatch: {labels.shape} vs {truth.shape}")
    for name, arr in (("labels", labels), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} must lie in [0, {k})")
    confusion = np.zeros((k, k), dtype=int)
    np.add.at(confusion, (truth, labels), 1)
    if k <= BRUTE_FORCE_MAX_K:
        agree = max(
            sum(confusion[c, perm[c]] for c in range(k))
            for perm in itertools.permutations(range(k))
        )
    else:
        rows, cols = linear_sum_assignment(-confusion)
        agree = int(confusion[rows, cols].sum())
    return int(labels.size - agree)


@dataclass(frozen=True, eq=False)
class VarianceObjects:
    f: np.ndarray
    g: np.ndarray
    gamma: np.ndarray
    source: str


def _inverse_bbt(scores: np.ndarray) -> np.ndarray:
    bbt = np.einsum("tkl,tlj->kj", scores, scores)
    bbt = (bbt + bbt.T) / 2
    w, v = np.linalg.eigh(bbt)
    if w[0] <= 1e-12 * max(abs(w[-1]), np.finfo(float).tiny):
        raise CovarianceError(f"B B^T is singular (eigenvalues {w})")
    return (v / w) @ v.T


class _VarianceModel:
    """Shared pieces of the row covariances for one ``(U, B_t, sigma2_t)`` triple."""

    def __init__(self, u: np.ndarray, scores: np.ndarray, sigma2: np.ndarray, source: str):
        self.u = u
        self.scores = scores
        self.sigma2 = sigma2
        self.source = source
        self.bbt_inv = _inverse_bbt(scores)
        self.ub = np.matmul(u, scores)  # (m, n, d): rows of U B_t
        self._cache: dict[int, VarianceObjects] = {}

    def objects(self, i: int) -> VarianceObjects:
        if not 0 <= i < self.u.shape[0]:
            raise IndexError(f"vertex {i} out of range for n={self.u.shape[0]}")
        if i not in self._cache:
            row = self.sigma2[:, i, :]
            # F_i = sum_t B_t U^T diag(sigma2_t[i, :]) U B_t
            f = np.einsum("tj,tjk,tjl->kl", row, self.ub, self.ub)
            # G_i = U^T diag(w) U,  w_l = sum_t sum_j sigma2_tij sigma2_tjl
            weights = np.matmul(row[:, None, :], self.sigma2).sum(axis=0)[0]
            g = (self.u * weights[:, None]).T @ self.u
            f, g = (f + f.T) / 2, (g + g.T) / 2
            gamma = self.bbt_inv @ (f + g) @ self.bbt_inv
            self._cache[i] = VarianceObjects(f, g, (gamma + gamma.T) / 2, self.source)
        return self._cache[i]


@dataclass(frozen=True, eq=False)
class PluginEstimates:
    """Plug-in score matrices, edge probabilities and Bernoulli variances."""

    basis: np.ndarray
    b_hat: np.ndarray
    p_hat: np.ndarray
    clamp_count: int

    def __post_init__(self):
        object.__setattr__(self, "sigma2", self.p_hat * (1.0 - self.p_hat))
        object.__setattr__(self, "_variance", None)

    def probabilities(self, t: int) -> np.ndarray:
        return self.p_hat[t]

    def variances(self, t: int) -> np.ndarray:
        return self.sigma2[t]

    def variance_objects(self, i: int) -> VarianceObjects:
        if self._variance is None:
            object.__setattr__(
                self, "_variance", _VarianceModel(self.basis, self.b_hat, self.sigma2, "plugin")
            )
        return self._variance.objects(i)


def plugin_estimates(
    stack: LayerStack, emb: Embedding | np.ndarray, eps: float = PROB_EPS
) -> PluginEstimates:
    """``B_t = U^T A_t U`` and ``P_t = U B_t U^T`` clamped to ``[eps, 1 - eps]``."""
    u = emb.basis if isinstance(emb, Embedding) else np.asarray(emb, dtype=float)
    if u.ndim != 2 or u.shape[0] != stack.n:
        raise ValueError(f"basis has shape {u.shape} but layers have n={stack.n}")
    au = np.matmul(stack.layers.astype(float), u)
    b_hat = np.matmul(u.T, au)
    b_hat = (b_hat + b_hat.transpose(0, 2, 1)) / 2
    p_raw = np.matmul(np.matmul(u, b_hat), u.T)
    clamped = (p_raw < eps) | (p_raw > 1.0 - eps)
    p_hat = np.clip(p_raw, eps, 1.0 - eps)
    return PluginEstimates(u, b_hat, p_hat, int(clamped.sum()))


def variance_objects_true(model: CosieModel, i: int) -> VarianceObjects:
    """Asymptotic covariance of row ``i`` of the aligned embedding under ``model``."""
    probs = np.stack([model.edge_probabilities(t) for t in range(model.m)])
    return _VarianceModel(model.u, model.scores, probs * (1.0 - probs), "true").objects(i)


def variance_objects_plugin(
    stack: LayerStack, emb: Embedding | np.ndarray, i: int, plugin: PluginEstimates | None = None
) -> VarianceObjects:
    """Plug-in version of :func:`variance_objects_true`."""
    plugin = plugin_estimates(stack, emb) if plugin is None else plugin
    return plugin.variance_objects(i)


@dataclass(frozen=True, eq=False)
class MembershipTestReport:
    statistic: float
    df: int
    p_value: float
    gamma_hat_i1: np.ndarray
    gamma_hat_i2: np.ndarray
    clamp_count: int

    def reject(self, level: float = 0.05) -> bool:
        return self.p_value < level


def membership_test(
    stack: LayerStack,
    emb: Embedding | np.ndarray,
    i1: int,
    i2: int,
    plugin: PluginEstimates | None = None,
) -> MembershipTestReport:
    """Chi-square test of equal membership profiles for vertices ``i1`` and ``i2``.

    ``T = (u_i1 - u_i2)^T (Gamma_i1 + Gamma_i2)^{-1} (u_i1 - u_i2)`` with
    plug-in covariances, referred to a chi-square law with ``d`` degrees of
    freedom.
    """
    if i1 == i2:
        raise ValueError("the two vertices must differ")
    plugin = plugin_estimates(stack, emb) if plugin is None else plugin
    u = plugin.basis
    g1 = plugin.variance_objects(i1).gamma
    g2 = plugin.variance_objects(i2).gamma
    cov = g1 + g2
    cov = (cov + cov.T) / 2
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(
            f"Gamma_i1 + Gamma_i2 is not positive definite "
            f"(eigenvalues {np.linalg.eigvalsh(cov)})"
        ) from exc
    delta = u[i1] - u[i2]
    z = np.linalg.solve(chol, delta)
    stat = float(z @ z)
    d = u.shape[1]
    return MembershipTestReport(stat, d, chi2_sf(d, stat), g1, g2, plugin.clamp_count)


def chi2_sf(df: int, x: float) -> float:
    """Upper tail ``P(X > x)`` of a chi-square law, ``Q(df/2, x/2)``."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if x <= 0:
        return 1.0
    return float(np.clip(gammaincc(df / 2.0, x / 2.0), 0.0, 1.0))


def chi2_isf(df: int, q: float) -> float:
    """Point with upper-tail probability ``q``."""
    return float(2.0 * gammainccinv(df / 2.0, q))
