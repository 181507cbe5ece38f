"""Experiment configuration: presets, JSON loading and validation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

KINDS = ("subspace-error", "power-table", "null-dist", "ellipse", "community")
ESTIMATORS = ("sos", "mase", "base", "hpca", "bcjse")
SEED_ENV = "MLSPEC_SEED"


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo study.

    Vertex indices (``i1``, ``pairs``, ``vertex``) are 1-based, matching how
    the simulation designs number vertices.
    """

    kind: str
    n: int
    m: int
    a: float
    b: float
    rho: tuple[float, ...]
    replicates: int
    seed: int = 20240101
    n0: int | None = None
    k: int = 2
    d: int = 2
    estimators: tuple[str, ...] = ("bcjse",)
    r_outer: int = 2
    s_inner: int = 1
    recommend_rs: bool = False
    i1: int = 1
    pairs: tuple[int, ...] = ()
    vertex: int | None = None
    level: float = 0.05
    noiseless: bool = False
    hpca_max_iters: int = 1000
    hpca_tol: float = 1e-8
    kmeans_restarts: int = 50
    kmeans_max_iters: int = 100
    stack_cache: str | None = None
    threads: int = 1
    out: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    def canonical_json(self) -> str:
        """Config as sorted JSON without execution-only keys."""
        payload = {k: v for k, v in self.to_dict().items() if k not in ("threads", "out")}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def rs(self) -> tuple[int, int]:
        if self.recommend_rs:
            from ..embed import recommend_rs

            return recommend_rs(self.m, self.n)
        return self.r_outer, self.s_inner


_MLMM_DESK = dict(n=200, n0=50, m=100, a=0.9, b=0.1, rho=(0.04,), replicates=400)
_MLMM_FULL = dict(n=500, n0=100, m=200, a=0.9, b=0.1, rho=(0.01, 0.02, 0.03, 0.04), replicates=1000)

PRESETS: dict[str, dict[str, dict[str, Any]]] = {
    "subspace-error": {
        "desk": dict(n=80, m=1600, a=0.8, b=0.6, rho=(0.5,), replicates=50, estimators=ESTIMATORS),
        "full": dict(
            n=80, m=6400, a=0.8, b=0.6, rho=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6),
            replicates=500, estimators=ESTIMATORS,
        ),
    },
    "power-table": {
        "desk": dict(_MLMM_DESK, pairs=(50,) + tuple(range(160, 201, 4))),
        "full": dict(_MLMM_FULL, pairs=(100,) + tuple(range(400, 501, 10))),
    },
    "null-dist": {
        "desk": dict(_MLMM_DESK, pairs=(50,)),
        "full": dict(_MLMM_FULL, pairs=(100,)),
    },
    "ellipse": {
        "desk": dict(_MLMM_DESK, vertex=150),
        "full": dict(_MLMM_FULL, vertex=350),
    },
    "community": {
        "desk": dict(n=150, m=400, a=0.8, b=0.6, rho=(0.2,), replicates=100),
        "full": dict(n=500, m=800, a=0.8, b=0.6, rho=(0.05, 0.1, 0.2), replicates=500),
    },
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_TUPLE_FIELDS = ("rho", "estimators", "pairs")


def _coerce(key: str, value: Any) -> Any:
    if key in _TUPLE_FIELDS:
        if isinstance(value, (int, float, str)):
            value = [value]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} must be a list")
        if key == "rho":
            try:
                return tuple(float(v) for v in value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"rho entries must be numbers, got {value!r}") from exc
        return tuple(value)
    if key in ("a", "b", "level", "hpca_tol") and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def need(cond: bool, msg: str) -> None:
        if not cond:
            raise ConfigError(msg)

    need(cfg.kind in KINDS, f"unknown experiment kind {cfg.kind!r}")
    for key in ("n", "m", "replicates", "k", "d", "r_outer", "s_inner", "threads",
                "hpca_max_iters", "kmeans_restarts", "kmeans_max_iters"):
        value = getattr(cfg, key)
        need(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
             f"{key} must be a positive integer, got {value!r}")
    need(cfg.m % 2 == 0, f"m must be even, got {cfg.m}")
    need(cfg.n % 2 == 0, f"n must be even, got {cfg.n}")
    need(0 < cfg.b < cfg.a, f"need 0 < b < a, got a={cfg.a}, b={cfg.b}")
    need(len(cfg.rho) >= 1, "rho grid is empty")
    for r in cfg.rho:
        need(isinstance(r, float) and math.isfinite(r) and r >= 0 and r * cfg.a <= 1,
             f"need rho >= 0 and rho * a <= 1, got rho={r}")
    need(cfg.hpca_tol > 0, "hpca_tol must be positive")
    need(0 < cfg.level < 1, "level must lie in (0, 1)")
    need(cfg.d <= cfg.n, "d must not exceed n")
    unknown = set(cfg.estimators) - set(ESTIMATORS)
    need(not unknown, f"unknown estimators {sorted(unknown)}")
    need(len(cfg.estimators) >= 1, "estimator list is empty")
    if cfg.kind in ("power-table", "null-dist", "ellipse"):
        need(cfg.n0 is not None and 1 <= cfg.n0 and 2 * cfg.n0 < cfg.n,
             f"need 1 <= n0 and 2 n0 < n, got n0={cfg.n0}")
        need(cfg.d == 2, "membership designs have d = 2")
    if cfg.kind in ("power-table", "null-dist"):
        need(len(cfg.pairs) >= 1, "pairs is empty")
        for v in (cfg.i1, *cfg.pairs):
            need(isinstance(v, int) and 1 <= v <= cfg.n, f"vertex {v} out of range 1..{cfg.n}")
        need(cfg.i1 not in cfg.pairs, "i1 must differ from every paired vertex")
    if cfg.kind == "ellipse":
        need(isinstance(cfg.vertex, int) and 1 <= cfg.vertex <= cfg.n,
             f"vertex must be in 1..{cfg.n}, got {cfg.vertex!r}")
    if cfg.kind == "community":
        need(cfg.k == 2 and cfg.d == 2, "community design supports k = d = 2")
    return cfg


def preset(kind: str, full_scale: bool = False) -> dict[str, Any]:
    if kind not in PRESETS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    return dict(PRESETS[kind]["full" if full_scale else "desk"])


def build_config(kind: str, overrides: dict[str, Any] | None = None,
                 full_scale: bool = False) -> ExperimentConfig:
    """Preset for ``kind`` updated with ``overrides``; unknown keys are errors."""
    values = preset(kind, full_scale)
    values["kind"] = kind
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "kind" and value != kind:
            raise ConfigError(f"config is for {value!r}, not {kind!r}")
        values[key] = _coerce(key, value)
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from exc
    if values.get("estimators") is None:
        values["estimators"] = ("bcjse",)
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


def load_config(path: str | os.PathLike | None, kind: str, full_scale: bool = False,
                **overrides: Any) -> ExperimentConfig:
    """Read a JSON config document and merge it onto the preset for ``kind``."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(kind, doc, full_scale)


def with_overrides(cfg: ExperimentConfig, **changes: Any) -> ExperimentConfig:
    changes = {k: _coerce(k, v) for k, v in changes.items()}
    return validate(dataclasses.replace(cfg, **changes))

