"""COSIE multilayer network models and Bernoulli layer sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import check_orthonormal
from .rng import RngStream

__all__ = [
    "CosieModel",
    "LayerStack",
    "check_membership",
    "factor_to_cosie",
    "membership_to_cosie",
    "edge_probabilities",
    "bias_matrix",
    "sample_layers",
    "noiseless_stack",
    "sim41_blocks",
    "build_sim41",
    "build_sim42",
    "build_mlsbm",
]

PROB_SLACK = 1e-12


def _clamp_probabilities(p: np.ndarray) -> np.ndarray:
    lo, hi = float(p.min()), float(p.max())
    if lo < -PROB_SLACK or hi > 1.0 + PROB_SLACK:
        raise ValueError(f"edge probabilities outside [0, 1]: range [{lo:.6g}, {hi:.6g}]")
    return np.clip(p, 0.0, 1.0)


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2


@dataclass(frozen=True, eq=False)
class CosieModel:
    """``P_t = u @ scores[t] @ u.T`` for an orthonormal ``u`` shared by all layers.

    Construction checks that ``u`` is orthonormal, every score matrix is
    symmetric and every edge probability lies in [0, 1].
    """

    u: np.ndarray
    scores: np.ndarray
    _groups: np.ndarray = field(init=False, repr=False)
    _probs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        u = check_orthonormal(self.u, "u")
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 3 or scores.shape[1:] != (u.shape[1], u.shape[1]):
            raise ValueError(
                f"scores must have shape (m, {u.shape[1]}, {u.shape[1]}), got {scores.shape}"
            )
        if scores.shape[0] < 1:
            raise ValueError("need at least one layer")
        if not np.allclose(scores, scores.transpose(0, 2, 1), rtol=0, atol=1e-12):
            raise ValueError("score matrices must be symmetric")
        scores = (scores + scores.transpose(0, 2, 1)) / 2
        # layers sharing a score matrix share P_t; simulation designs have few distinct ones
        distinct, groups = np.unique(scores, axis=0, return_inverse=True)
        probs = np.stack([_clamp_probabilities(_symmetrize(u @ b @ u.T)) for b in distinct])
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "_groups", groups.reshape(-1))
        object.__setattr__(self, "_probs", probs)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def d(self) -> int:
        return self.u.shape[1]

    @property
    def m(self) -> int:
        return self.scores.shape[0]

    def edge_probabilities(self, t: int) -> np.ndarray:
        if not 0 <= t < self.m:
            raise IndexError(f"layer index {t} out of range for m={self.m}")
        return self._probs[self._groups[t]].copy()

    def distinct_probabilities(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct ``P`` matrices and the number of layers using each."""
        counts = np.bincount(self._groups, minlength=len(self._probs))
        return self._probs.copy(), counts

    def layer_group(self, t: int) -> int:
        return int(self._groups[t])


@dataclass(frozen=True, eq=False)
class LayerStack:
    """``m`` symmetric ``n x n`` adjacency matrices.

    Layers are ``uint8`` with entries in {0, 1}. A stack built with
    ``noiseless=True`` carries real-valued layers (typically the edge
    probabilities themselves) and is only meant for fixed-point checks.
    """

    layers: np.ndarray
    seed: int | None = None
    replicate: int | None = None
    noiseless: bool = False

    def __post_init__(self):
        layers = np.asarray(self.layers)
        if layers.ndim != 3 or layers.shape[1] != layers.shape[2] or layers.shape[0] < 1:
            raise ValueError(f"layers must have shape (m, n, n), got {layers.shape}")
        if not np.array_equal(layers, layers.transpose(0, 2, 1)):
            raise ValueError("every layer must be symmetric")
        if self.noiseless:
            layers = layers.astype(float)
        else:
            if not np.isin(layers, (0, 1)).all():
                raise ValueError("binary layers must have entries in {0, 1}")
            layers = layers.astype(np.uint8)
        object.__setattr__(self, "layers", layers)

    @property
    def m(self) -> int:
        return self.layers.shape[0]

    @property
    def n(self) -> int:
        return self.layers.shape[1]

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, t: int) -> np.ndarray:
        return self.layers[t]


def check_membership(z) -> np.ndarray:
    """Validate a membership profile matrix (rows on the probability simplex)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 2:
        raise ValueError(f"membership matrix must be 2-d, got {z.shape}")
    if np.any(z < 0) or np.any(z > 1):
        raise ValueError("membership entries must lie in [0, 1]")
    if not np.allclose(z.sum(axis=1), 1.0, rtol=0, atol=1e-12):
        raise ValueError("membership rows must sum to 1")
    return z


def _gram_roots(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = x.T @ x
    w, v = np.linalg.eigh((g + g.T) / 2)
    if w[0] <= 1e-10 * x.shape[0]:
        raise ValueError(f"X^T X is singular (smallest eigenvalue {w[0]:.3e})")
    root = (v * np.sqrt(w)) @ v.T
    inv_root = (v / np.sqrt(w)) @ v.T
    return root, inv_root


def factor_to_cosie(x, blocks: Sequence) -> CosieModel:
    """COSIE representation of ``P_t = x @ C_t @ x.T`` for a full-rank factor ``x``.

    ``u = x (x^T x)^{-1/2}`` and ``B_t = (x^T x)^{1/2} C_t (x^T x)^{1/2}``.
    """
    x = np.asarray(x, dtype=float)
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim == 2:
        blocks = blocks[None]
    k = x.shape[1]
    if blocks.shape[1:] != (k, k):
        raise ValueError(f"block matrices must be {k}x{k}, got {blocks.shape[1:]}")
    if not np.allclose(blocks, blocks.transpose(0, 2, 1), rtol=0, atol=1e-12):
        raise ValueError("block matrices must be symmetric")
    root, inv_root = _gram_roots(x)
    u = x @ inv_root
    scores = np.einsum("ij,tjk,kl->til", root, blocks, root)
    return CosieModel(u, scores)


def membership_to_cosie(z, blocks: Sequence) -> CosieModel:
    """MLSBM / MLMM model with memberships ``z`` and block matrices ``C_t``."""
    z = check_membership(z)
    blocks = np.asarray(blocks, dtype=float)
    if np.any(blocks < 0) or np.any(blocks > 1):
        raise ValueError("block probabilities must lie in [0, 1]")
    return factor_to_cosie(z, blocks)


def edge_probabilities(model: CosieModel, t: int) -> np.ndarray:
    return model.edge_probabilities(t)


def bias_matrix(model: CosieModel) -> np.ndarray:
    """Diagonal ``M`` with ``M_ii = -sum_t sum_j P_tij^2``."""
    probs, counts = model.distinct_probabilities()
    diag = -np.einsum("g,gij->i", counts.astype(float), probs * probs)
    return np.diag(diag)


def sample_layers(model: CosieModel, stream: RngStream) -> LayerStack:
    """Draw ``A_tij ~ Bernoulli(P_tij)`` independently for ``i <= j``.

    Layer ``t`` consumes its own generator ``stream.layer(t)``, so any layer
    can be regenerated alone.
    """
    n = model.n
    iu, ju = np.triu_indices(n)
    probs, _ = model.distinct_probabilities()
    upper = probs[:, iu, ju]
    layers = np.zeros((model.m, n, n), dtype=np.uint8)
    for t in range(model.m):
        draws = stream.layer(t).random(iu.size) < upper[model.layer_group(t)]
        layers[t, iu, ju] = draws
        layers[t, ju, iu] = draws
    return LayerStack(layers, seed=stream.seed, replicate=stream.replicate)


def noiseless_stack(model: CosieModel) -> LayerStack:
    """Stack whose layers are the edge probabilities themselves."""
    probs, _ = model.distinct_probabilities()
    layers = np.stack([probs[model.layer_group(t)] for t in range(model.m)])
    return LayerStack(layers, noiseless=True)


def sim41_blocks(m: int, a: float, b: float, rho: float) -> np.ndarray:
    """``m/2`` assortative blocks ``rho [[a, b], [b, a]]`` then ``m/2`` flipped ones."""
    if m < 2 or m % 2:
        raise ValueError(f"m must be a positive even integer, got {m}")
    if not 0 < b < a:
        raise ValueError(f"need 0 < b < a, got a={a}, b={b}")
    if rho < 0 or rho * a > 1:
        raise ValueError(f"need rho >= 0 and rho * a <= 1, got rho={rho}")
    c1 = rho * np.array([[a, b], [b, a]])
    c2 = rho * np.array([[b, a], [a, b]])
    return np.concatenate([np.repeat(c1[None], m // 2, axis=0), np.repeat(c2[None], m // 2, axis=0)])


def build_sim41(n: int, m: int, a: float, b: float, rho: float) -> CosieModel:
    """Sin/cos latent-position design with sign-alternating layers.

    Rows ``i < n/2`` are ``(sin(pi t_i / 2), cos(pi t_i / 2))`` and rows
    ``i >= n/2`` swap the two coordinates, ``t_i`` equidistant on [0, 1].
    Edge probabilities are ``P_t = X C_t X^T``.
    """
    if n < 4 or n % 2:
        raise ValueError(f"n must be an even integer >= 4, got {n}")
    blocks = sim41_blocks(m, a, b, rho)
    t = np.linspace(0.0, 1.0, n // 2)
    s, c = np.sin(np.pi * t / 2), np.cos(np.pi * t / 2)
    x = np.vstack([np.column_stack([s, c]), np.column_stack([c, s])])
    return factor_to_cosie(x, blocks)


def build_sim42(
    n: int, n0: int, m: int, a: float, b: float, rho: float
) -> tuple[CosieModel, np.ndarray]:
    """Mixed-membership design with ``n0`` pure vertices per community.

    Vertices ``0..n0-1`` are pure in community 0, ``n0..2n0-1`` pure in
    community 1, and the remaining ``n - 2 n0`` have profiles
    ``(t_i, 1 - t_i)`` with ``t_i = 0.1 + 0.8 i / (n - 2 n0)``, ``i = 1..n-2n0``.
    """
    if n0 < 1 or 2 * n0 >= n:
        raise ValueError(f"need 1 <= n0 and 2 n0 < n, got n={n}, n0={n0}")
    k = n - 2 * n0
    t = 0.1 + 0.8 * np.arange(1, k + 1) / k
    z = np.vstack(
        [
            np.tile([1.0, 0.0], (n0, 1)),
            np.tile([0.0, 1.0], (n0, 1)),
            np.column_stack([t, 1.0 - t]),
        ]
    )
    blocks = sim41_blocks(m, a, b, rho)
    return membership_to_cosie(z, blocks), z


def build_mlsbm(
    sizes: Sequence[int], m: int, a: float, b: float, rho: float
) -> tuple[CosieModel, np.ndarray]:
    """Two-community MLSBM with half assortative and half disassortative layers.

    Returns the model and the 0-based community labels.
    """
    if len(sizes) != 2 or min(sizes) < 1:
        raise ValueError(f"need two nonempty communities, got sizes {list(sizes)}")
    labels = np.repeat(np.arange(2), sizes)
    z = np.eye(2)[labels]
    return membership_to_cosie(z, sim41_blocks(m, a, b, rho)), labels
