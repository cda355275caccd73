"""Parallel ensemble driver with thread-count-invariant reductions."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import NumericalAbort

BLOCK = 1024
CHUNK = 1024

Job = Callable[[int, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error.

    ``elapsed`` is wall time and is ignored by :meth:`same_as`.
    """

    mean: float
    stderr: float
    n_paths: int
    seed: int
    elapsed: float = 0.0

    def same_as(self, other: "Estimate") -> bool:
        """Bit-identical numbers (elapsed time excluded)."""
        return (np.float64(self.mean).tobytes() == np.float64(other.mean).tobytes()
                and np.float64(self.stderr).tobytes() == np.float64(other.stderr).tobytes()
                and self.n_paths == other.n_paths and self.seed == other.seed)

    def within(self, target: float, k: float = 4.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr


def combined_stderr(*ests: Estimate) -> float:
    return math.sqrt(sum(e.stderr**2 for e in ests))


def pairwise_sum(x: np.ndarray) -> float:
    """Sum in fixed chunks of ``CHUNK`` followed by a pairwise tree.

    The order of operations depends only on ``len(x)``.
    """
    x = np.ascontiguousarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    parts = [np.sum(x[i : i + CHUNK]) for i in range(0, x.size, CHUNK)]
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return float(parts[0])


def mean_stderr(x: np.ndarray) -> tuple[float, float]:
    """Two-pass mean and standard error with the unbiased variance."""
    n = x.size
    mean = pairwise_sum(x) / n
    var = pairwise_sum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def default_threads() -> int:
    env = os.environ.get("SFDEMC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def collect(job: Job, n_paths: int, seed: int, threads: int | None = None, block: int = BLOCK) -> np.ndarray:
    """Evaluate ``job`` on paths ``0..n_paths-1`` and return the per-path
    results in path-index order, shape (n_paths,) or (n_paths, k).

    Work is split into fixed blocks of path ids, so the values do not depend
    on the number of threads.  A path abort is re-raised with its global index.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    starts = range(0, n_paths, block)

    def run(s):
        ids = np.arange(s, min(s + block, n_paths), dtype=np.int64)
        try:
            out = np.asarray(job(seed, ids), dtype=float)
        except NumericalAbort as exc:
            raise exc.with_offset(ids) from None
        if out.shape[0] != ids.size:
            raise ValueError(f"job returned {out.shape[0]} values for {ids.size} paths")
        return out

    if threads == 1 or len(starts) == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    return np.concatenate(parts, axis=0)


def run_ensemble(job: Job, n_paths: int, seed: int, threads: int | None = None) -> Estimate:
    """Mean and standard error of a scalar per-path job.

    Examples
    --------
    >>> est = run_ensemble(lambda seed, ids: np.ones(ids.size), 10, 0, threads=1)
    >>> est.mean, est.stderr
    (1.0, 0.0)
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    t0 = time.perf_counter()
    x = collect(job, n_paths, seed, threads)
    if x.ndim != 1:
        raise ValueError("run_ensemble expects one value per path; use run_ensemble_multi")
    m, se = mean_stderr(x)
    return Estimate(m, se, n_paths, seed, time.perf_counter() - t0)


def run_ensemble_multi(job: Job, n_paths: int, seed: int, threads: int | None = None) -> list[Estimate]:
    """One :class:`Estimate` per output column of a vector-valued job."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    t0 = time.perf_counter()
    x = collect(job, n_paths, seed, threads)
    if x.ndim == 1:
        x = x[:, None]
    el = time.perf_counter() - t0
    return [Estimate(*mean_stderr(np.ascontiguousarray(x[:, c])), n_paths, seed, el)
            for c in range(x.shape[1])]


@dataclass
class ScanResult:
    """Rows of ``(dt, mean, stderr)`` and the fitted log-log slope."""

    rows: list[tuple[float, float, float]]
    slope: float | None
    note: str = ""

    @property
    def available(self) -> bool:
        return self.slope is not None


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Least-squares slope of ``log y`` against ``log x``; None if undefined."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


def convergence_scan(family: Callable[[float], Job], levels: Sequence[float], n_paths: int, seed: int,
                     threads: int | None = None, reference: float | None = None) -> ScanResult:
    """Estimate a job family on several step sizes and fit the bias order.

    The bias proxy is ``|mean(dt) - mean(finest)|``; pass ``reference`` to
    measure against a known value instead (then every level is used).
    """
    levels = [float(v) for v in levels]
    if len(levels) < 3:
        raise ValueError("convergence_scan needs at least 3 levels")
    ests = [run_ensemble(family(dt), n_paths, seed, threads) for dt in levels]
    rows = [(dt, e.mean, e.stderr) for dt, e in zip(levels, ests)]
    if reference is None:
        finest = int(np.argmin(levels))
        pts = [(dt, abs(e.mean - ests[finest].mean)) for i, (dt, e) in enumerate(zip(levels, ests)) if i != finest]
    else:
        pts = [(dt, abs(e.mean - reference)) for dt, e in zip(levels, ests)]
    if all(b == 0.0 for _, b in pts):
        return ScanResult(rows, None, "slope unavailable: all means equal")
    slope = loglog_slope([p[0] for p in pts], [p[1] for p in pts])
    if slope is None:
        return ScanResult(rows, None, "slope unavailable: fewer than two nonzero bias values")
    return ScanResult(rows, slope)
