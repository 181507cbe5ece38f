"""Fast end-to-end sanity checks run by ``mlspec selftest``."""
from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ..embed import BcjseConfig, bcjse, gram_sum
from ..infer import chi2_isf
from ..linalg import hollow, top_d_eigs
from ..model import LayerStack
from .config import build_config
from .emit import write_csv
from .runners import run_experiment


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _base_identity() -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    for _ in range(5):
        n, m = int(rng.integers(6, 25)), int(rng.integers(1, 8))
        upper = np.triu(rng.random((m, n, n)) < 0.4).astype(np.uint8)
        stack = LayerStack(upper | upper.transpose(0, 2, 1))
        want = top_d_eigs(hollow(gram_sum(stack)), 2).basis
        got = bcjse(stack, BcjseConfig(2, 1, 3)).basis
        if not np.array_equal(got, want):
            return False, f"mismatch at n={n}, m={m}"
    return True, "R=1 equals hollowed embedding on 5 stacks"


def _quantile() -> tuple[bool, str]:
    q = chi2_isf(2, 0.05)
    return abs(q - 5.991464547107979) < 1e-9, f"chi2_2 0.95 quantile {q:.6f}"


def _noiseless_recovery() -> tuple[bool, str]:
    cfg = build_config("community", dict(n=60, m=20, rho=[0.3], replicates=2, noiseless=True,
                                         kmeans_restarts=5))
    res = run_experiment(cfg)
    errs = [r.values["errors"] for r in res.records]
    return all(e == 0 for e in errs), f"noiseless clustering errors {errs}"


def _community_recovery() -> tuple[bool, str]:
    cfg = build_config("community", dict(n=100, m=2, a=0.9, b=0.1, rho=[1.0], replicates=20,
                                         kmeans_restarts=10))
    res = run_experiment(cfg)
    freq = res.summary["by_rho"][0]["exact_frequency"]
    return freq >= 0.95, f"strong-signal exact recovery {freq:.2f}"


def _determinism() -> tuple[bool, str]:
    overrides = dict(n=60, n0=15, m=20, rho=[0.2], replicates=6)
    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for threads in (1, 2):
            res = run_experiment(build_config("null-dist", dict(overrides, threads=threads)))
            path = Path(tmp) / f"t{threads}.csv"
            write_csv(path, res.records, res.columns)
            paths.append(path.read_bytes())
    return paths[0] == paths[1], "CSV identical at 1 and 2 workers"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "base-identity": _base_identity,
    "chi2-quantile": _quantile,
    "noiseless-recovery": _noiseless_recovery,
    "strong-signal-recovery": _community_recovery,
    "determinism": _determinism,
}


def run_selftest() -> list[CheckResult]:
    results = []
    for name, check in CHECKS.items():
        start = time.perf_counter()
        try:
            passed, detail = check()
        except Exception as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
