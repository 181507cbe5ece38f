"""Monte Carlo runners for the simulation studies.

Each runner expands a config into ``(rho, replicate)`` tasks, runs them
serially or on a process pool, and returns records sorted by
``(rho index, replicate)`` so output never depends on scheduling.
"""
from __future__ import annotations

import functools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from threadpoolctl import threadpool_limits

from ..embed import (
    BcjseConfig,
    bcjse_from_gram,
    base_from_gram,
    gram_sum,
    hetero_pca_from_gram,
    mase,
    sos_from_gram,
)
from ..infer import (
    chi2_isf,
    chi2_sf,
    clustering_error,
    kmeans_rows,
    membership_test,
    plugin_estimates,
    variance_objects_true,
)
from ..linalg import align, norms, two_to_infty
from ..model import (
    CosieModel,
    LayerStack,
    build_mlsbm,
    build_sim41,
    build_sim42,
    noiseless_stack,
    sample_layers,
)
from ..rng import RngStream
from ..serialize import read_stack, write_stack
from .config import ExperimentConfig

__all__ = [
    "McRecord",
    "RunResult",
    "run_subspace_error",
    "run_power_table",
    "run_null_dist",
    "run_ellipse",
    "run_community",
    "run_experiment",
    "ks_distance",
]


@dataclass
class McRecord:
    """One output row. ``values`` keys follow the run's column order."""

    rho_index: int
    replicate: int
    seed: int
    values: dict[str, Any]
    failed: bool = False
    error: str = ""
    runtime: float = 0.0

    def sort_key(self) -> tuple:
        return (self.rho_index, self.replicate, self.values.get("order", 0))


@dataclass
class RunResult:
    config: ExperimentConfig
    columns: tuple[str, ...]
    records: list[McRecord]
    summary: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------- models


@functools.lru_cache(maxsize=8)
def _model_for(kind: str, n: int, m: int, n0: int | None, a: float, b: float, rho: float):
    if kind == "subspace-error":
        return build_sim41(n, m, a, b, rho), None
    if kind == "community":
        return build_mlsbm([n // 2, n - n // 2], m, a, b, rho)
    return build_sim42(n, n0, m, a, b, rho)


def model_for(cfg: ExperimentConfig, rho: float) -> tuple[CosieModel, np.ndarray | None]:
    """Model for one grid point plus memberships (MLMM) or labels (MLSBM)."""
    return _model_for(cfg.kind, cfg.n, cfg.m, cfg.n0, cfg.a, cfg.b, float(rho))


def _stack_for(cfg: ExperimentConfig, rho_index: int, model: CosieModel, replicate: int) -> LayerStack:
    if cfg.noiseless:
        return noiseless_stack(model)
    stream = RngStream(cfg.seed, replicate)
    if cfg.stack_cache is None:
        return sample_layers(model, stream)
    path = Path(cfg.stack_cache) / f"{cfg.config_hash()[:16]}_rho{rho_index}_rep{replicate}.mlstk"
    if path.exists():
        return read_stack(path)
    stack = sample_layers(model, stream)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_stack(path, stack)
    return stack


def _embed(cfg: ExperimentConfig, g: np.ndarray):
    r, s = cfg.rs()
    return bcjse_from_gram(g, BcjseConfig(cfg.d, r, s))


def _failure(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}".replace("\n", " ")


# ---------------------------------------------------------------- tasks

SUBSPACE_COLUMNS = (
    "rho", "replicate", "seed", "estimator", "two_to_inf_error", "spectral_error",
    "iterations", "converged", "degenerate", "failed", "error",
)


def _subspace_task(cfg: ExperimentConfig, rho_index: int, replicate: int) -> list[McRecord]:
    rho = cfg.rho[rho_index]
    model, _ = model_for(cfg, rho)
    stack = _stack_for(cfg, rho_index, model, replicate)
    g = gram_sum(stack)
    no_signal = not g.any()
    runners: dict[str, Callable[[], Any]] = {
        "sos": lambda: sos_from_gram(g, cfg.d),
        "mase": lambda: mase(stack, cfg.d),
        "base": lambda: base_from_gram(g, cfg.d),
        "hpca": lambda: hetero_pca_from_gram(g, cfg.d, cfg.hpca_max_iters, cfg.hpca_tol),
        "bcjse": lambda: _embed(cfg, g),
    }
    out = []
    for order, name in enumerate(cfg.estimators):
        values = {"rho": rho, "replicate": replicate, "seed": cfg.seed, "estimator": name,
                  "order": order, "two_to_inf_error": math.nan, "spectral_error": math.nan,
                  "iterations": 0, "converged": True, "degenerate": no_signal}
        start = time.perf_counter()
        try:
            emb = runners[name]()
            diff = emb.basis @ align(emb.basis, model.u) - model.u
            values["two_to_inf_error"] = two_to_infty(diff)
            values["spectral_error"] = norms(diff).spectral
            values["iterations"] = int(emb.diagnostics.get("iterations", 1))
            values["converged"] = bool(emb.diagnostics.get("converged", True))
            values["degenerate"] = no_signal or bool(emb.diagnostics.get("degenerate_gap", False))
            rec = McRecord(rho_index, replicate, cfg.seed, values)
        except Exception as exc:  # failure isolation: recorded, never fatal
            rec = McRecord(rho_index, replicate, cfg.seed, values, True, _failure(exc))
        rec.runtime = time.perf_counter() - start
        out.append(rec)
    return out


TEST_COLUMNS = (
    "rho", "replicate", "seed", "i1", "i2", "dz", "statistic", "p_value", "reject",
    "clamp_count", "failed", "error",
)


def _membership_task(cfg: ExperimentConfig, rho_index: int, replicate: int) -> list[McRecord]:
    rho = cfg.rho[rho_index]
    model, z = model_for(cfg, rho)
    start = time.perf_counter()
    i1 = cfg.i1 - 1
    base_values = {"rho": rho, "replicate": replicate, "seed": cfg.seed, "i1": cfg.i1}
    try:
        stack = _stack_for(cfg, rho_index, model, replicate)
        emb = _embed(cfg, gram_sum(stack))
        plugin = plugin_estimates(stack, emb)
    except Exception as exc:
        plugin, setup_error = None, _failure(exc)
    out = []
    for order, i2_1 in enumerate(cfg.pairs):
        i2 = i2_1 - 1
        values = dict(base_values, i2=i2_1, order=order,
                      dz=float(np.linalg.norm(z[i1] - z[i2])),
                      statistic=math.nan, p_value=math.nan, reject=False, clamp_count=0)
        if plugin is None:
            out.append(McRecord(rho_index, replicate, cfg.seed, values, True, setup_error))
            continue
        try:
            rep = membership_test(stack, emb, i1, i2, plugin)
            values.update(statistic=rep.statistic, p_value=rep.p_value,
                          reject=rep.reject(cfg.level), clamp_count=rep.clamp_count)
            out.append(McRecord(rho_index, replicate, cfg.seed, values))
        except Exception as exc:
            out.append(McRecord(rho_index, replicate, cfg.seed, values, True, _failure(exc)))
    elapsed = time.perf_counter() - start
    for rec in out:
        rec.runtime = elapsed
    return out


def _ellipse_columns(d: int) -> tuple[str, ...]:
    return ("rho", "replicate", "seed", "vertex", *(f"r{k + 1}" for k in range(d)),
            "norm2", "covered", "failed", "error")


@functools.lru_cache(maxsize=8)
def _inverse_root_gamma(kind, n, m, n0, a, b, rho, vertex):
    model, _ = _model_for(kind, n, m, n0, a, b, rho)
    gamma = variance_objects_true(model, vertex).gamma
    w, v = np.linalg.eigh(gamma)
    if w[0] <= 0:
        raise ValueError(f"Gamma_i is not positive definite (eigenvalues {w})")
    return (v / np.sqrt(w)) @ v.T


def _ellipse_task(cfg: ExperimentConfig, rho_index: int, replicate: int) -> list[McRecord]:
    rho = cfg.rho[rho_index]
    model, _ = model_for(cfg, rho)
    i = cfg.vertex - 1
    q = chi2_isf(cfg.d, 0.05)
    values: dict[str, Any] = {"rho": rho, "replicate": replicate, "seed": cfg.seed,
                              "vertex": cfg.vertex}
    values.update({f"r{k + 1}": math.nan for k in range(cfg.d)})
    values.update(norm2=math.nan, covered=False)
    start = time.perf_counter()
    try:
        root = _inverse_root_gamma(cfg.kind, cfg.n, cfg.m, cfg.n0, cfg.a, cfg.b, float(rho), i)
        stack = _stack_for(cfg, rho_index, model, replicate)
        emb = _embed(cfg, gram_sum(stack))
        row = (emb.basis @ align(emb.basis, model.u) - model.u)[i]
        r = root @ row
        values.update({f"r{k + 1}": float(r[k]) for k in range(cfg.d)})
        values.update(norm2=float(r @ r), covered=bool(r @ r <= q))
        rec = McRecord(rho_index, replicate, cfg.seed, values)
    except Exception as exc:
        rec = McRecord(rho_index, replicate, cfg.seed, values, True, _failure(exc))
    rec.runtime = time.perf_counter() - start
    return [rec]


COMMUNITY_COLUMNS = ("rho", "replicate", "seed", "errors", "exact", "objective", "failed", "error")


def _community_task(cfg: ExperimentConfig, rho_index: int, replicate: int) -> list[McRecord]:
    rho = cfg.rho[rho_index]
    model, labels = model_for(cfg, rho)
    values = {"rho": rho, "replicate": replicate, "seed": cfg.seed,
              "errors": -1, "exact": False, "objective": math.nan}
    start = time.perf_counter()
    try:
        stack = _stack_for(cfg, rho_index, model, replicate)
        emb = _embed(cfg, gram_sum(stack))
        clus = kmeans_rows(emb.basis, cfg.k, cfg.kmeans_restarts, cfg.kmeans_max_iters,
                           RngStream(cfg.seed, replicate).kmeans())
        err = clustering_error(clus.labels, labels, cfg.k)
        values.update(errors=err, exact=err == 0, objective=clus.objective)
        rec = McRecord(rho_index, replicate, cfg.seed, values)
    except Exception as exc:
        rec = McRecord(rho_index, replicate, cfg.seed, values, True, _failure(exc))
    rec.runtime = time.perf_counter() - start
    return [rec]


_TASKS = {
    "subspace-error": _subspace_task,
    "power-table": _membership_task,
    "null-dist": _membership_task,
    "ellipse": _ellipse_task,
    "community": _community_task,
}


def _run_one(cfg: ExperimentConfig, rho_index: int, replicate: int) -> list[McRecord]:
    # one BLAS thread per task keeps floating-point results independent of pool width
    with threadpool_limits(limits=1):
        return _TASKS[cfg.kind](cfg, rho_index, replicate)


def _execute(cfg: ExperimentConfig) -> list[McRecord]:
    tasks = [(i, rep) for i in range(len(cfg.rho)) for rep in range(cfg.replicates)]
    if cfg.threads <= 1:
        chunks = [_run_one(cfg, i, rep) for i, rep in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(_run_one, cfg, i, rep) for i, rep in tasks]
            chunks = [f.result() for f in futures]
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=McRecord.sort_key)
    return records


# ---------------------------------------------------------------- summaries


def _ok(records):
    return [r for r in records if not r.failed]


def ks_distance(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Kolmogorov-Smirnov distance between a sample and a continuous CDF."""
    x = np.sort(np.asarray(sample, dtype=float))
    nobs = x.size
    if nobs == 0:
        return math.nan
    f = cdf(x)
    upper = np.arange(1, nobs + 1) / nobs - f
    lower = f - np.arange(0, nobs) / nobs
    return float(max(upper.max(), lower.max()))


def _chi2_cdf(df: int):
    return lambda x: np.array([1.0 - chi2_sf(df, float(v)) for v in x])


def run_subspace_error(cfg: ExperimentConfig) -> RunResult:
    """Two-to-infinity subspace errors of each estimator on the sin/cos design."""
    records = _execute(cfg)
    summary: dict[str, Any] = {"by_rho": []}
    for i, rho in enumerate(cfg.rho):
        entry: dict[str, Any] = {"rho": rho, "estimators": {}}
        for name in cfg.estimators:
            rows = [r for r in records if r.rho_index == i and r.values["estimator"] == name]
            good = _ok(rows)
            errs = np.array([r.values["two_to_inf_error"] for r in good])
            its = np.array([r.values["iterations"] for r in good], dtype=float)
            entry["estimators"][name] = {
                "successes": len(good),
                "failures": len(rows) - len(good),
                "degenerate": sum(bool(r.values["degenerate"]) for r in rows),
                "median": float(np.median(errs)) if errs.size else math.nan,
                "mean": float(errs.mean()) if errs.size else math.nan,
                "q25": float(np.quantile(errs, 0.25)) if errs.size else math.nan,
                "q75": float(np.quantile(errs, 0.75)) if errs.size else math.nan,
                "iterations_mean": float(its.mean()) if its.size else math.nan,
                "iterations_sd": float(its.std(ddof=1)) if its.size > 1 else 0.0,
                "mean_runtime": float(np.mean([r.runtime for r in rows])) if rows else math.nan,
            }
        summary["by_rho"].append(entry)
    return RunResult(cfg, SUBSPACE_COLUMNS, records, summary)


def _power_summary(cfg: ExperimentConfig, records: list[McRecord]) -> dict[str, Any]:
    table = []
    for i, rho in enumerate(cfg.rho):
        row = []
        for i2 in cfg.pairs:
            rows = [r for r in records if r.rho_index == i and r.values["i2"] == i2]
            good = _ok(rows)
            rejections = sum(bool(r.values["reject"]) for r in good)
            row.append({
                "i2": i2,
                "dz": rows[0].values["dz"] if rows else math.nan,
                "rejections": rejections,
                "successes": len(good),
                "failures": len(rows) - len(good),
                "power": rejections / len(good) if good else math.nan,
            })
        row.sort(key=lambda e: (e["dz"], e["i2"]))
        table.append({"rho": rho, "cells": row})
    return {"level": cfg.level, "table": table}


def run_power_table(cfg: ExperimentConfig) -> RunResult:
    """Rejection rates of the membership test for each vertex pair and sparsity level."""
    records = _execute(cfg)
    return RunResult(cfg, TEST_COLUMNS, records, _power_summary(cfg, records))


def run_null_dist(cfg: ExperimentConfig) -> RunResult:
    """Null sample of the test statistic and its KS distance to chi-square(d)."""
    records = _execute(cfg)
    summary = _power_summary(cfg, records)
    summary["null"] = []
    for i, rho in enumerate(cfg.rho):
        good = _ok(r for r in records if r.rho_index == i and r.values["i2"] == cfg.pairs[0])
        stats = np.array([r.values["statistic"] for r in good])
        summary["null"].append({
            "rho": rho,
            "i1": cfg.i1,
            "i2": cfg.pairs[0],
            "successes": len(good),
            "ks_distance": ks_distance(stats, _chi2_cdf(cfg.d)),
            "ks_critical_95": 1.36 / math.sqrt(len(good)) if good else math.nan,
            "size": float(np.mean([bool(r.values["reject"]) for r in good])) if good else math.nan,
            "mean_statistic": float(stats.mean()) if stats.size else math.nan,
        })
    return RunResult(cfg, TEST_COLUMNS, records, summary)


def run_ellipse(cfg: ExperimentConfig) -> RunResult:
    """Coverage of the theoretical 95% ellipse for one standardized embedding row."""
    records = _execute(cfg)
    q = chi2_isf(cfg.d, 0.05)
    summary: dict[str, Any] = {"vertex": cfg.vertex, "quantile_95": q, "by_rho": []}
    for i, rho in enumerate(cfg.rho):
        good = _ok(r for r in records if r.rho_index == i)
        r = np.array([[rec.values[f"r{k + 1}"] for k in range(cfg.d)] for rec in good])
        covered = sum(bool(rec.values["covered"]) for rec in good)
        cov = np.cov(r.T).reshape(cfg.d, cfg.d) if len(good) > 1 else np.full((cfg.d, cfg.d), math.nan)
        summary["by_rho"].append({
            "rho": rho,
            "successes": len(good),
            "covered": covered,
            "coverage": covered / len(good) if good else math.nan,
            "mean": r.mean(axis=0).tolist() if len(good) else [],
            "covariance": cov.tolist(),
        })
    return RunResult(cfg, _ellipse_columns(cfg.d), records, summary)


def run_community(cfg: ExperimentConfig) -> RunResult:
    """Exact-recovery frequency of BCJSE + k-means on the two-block MLSBM."""
    records = _execute(cfg)
    summary: dict[str, Any] = {"by_rho": []}
    for i, rho in enumerate(cfg.rho):
        rows = [r for r in records if r.rho_index == i]
        good = _ok(rows)
        errs = [int(r.values["errors"]) for r in good]
        exact = sum(e == 0 for e in errs)
        summary["by_rho"].append({
            "rho": rho,
            "successes": len(good),
            "failures": len(rows) - len(good),
            "exact": exact,
            "exact_frequency": exact / len(good) if good else math.nan,
            "error_counts": {str(e): errs.count(e) for e in sorted(set(errs))},
        })
    return RunResult(cfg, COMMUNITY_COLUMNS, records, summary)


RUNNERS = {
    "subspace-error": run_subspace_error,
    "power-table": run_power_table,
    "null-dist": run_null_dist,
    "ellipse": run_ellipse,
    "community": run_community,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return RUNNERS[cfg.kind](cfg)
