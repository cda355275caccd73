"""Independent references: Black-Scholes closed forms, finite-difference
Delta with common random numbers, Brownian joint densities and KDE."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .core import TimeGrid
from .montecarlo import Estimate, run_ensemble
from .payoffs import Payoff
from .solver import euler_solve, exact_exponential_solve, increments_for, observable


def norm_cdf(z):
    """Standard normal CDF through ``erfc`` (accurate in both tails)."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def bs_closed_form(x: float, K: float, sigma: float, R: float, t: float, kind: str = "delta") -> float:
    """Black-Scholes call price or Delta.

    >>> round(bs_closed_form(100, 100, 0.2, 0.0, 1.0), 6)
    0.539828
    """
    if not (x > 0 and K > 0 and sigma > 0 and t > 0):
        raise ValueError("x, K, sigma and t must be positive")
    if R < 0:
        raise ValueError("R must be non-negative")
    st = sigma * math.sqrt(t)
    d1 = (math.log(x / K) + (R + 0.5 * sigma**2) * t) / st
    if kind == "delta":
        return float(norm_cdf(d1))
    if kind == "price":
        return float(x * norm_cdf(d1) - K * math.exp(-R * t) * norm_cdf(d1 - st))
    raise ValueError(f"unknown kind {kind!r} (price or delta)")


def bs_payoff_delta(payoff: Payoff, x: float, sigma: float, R: float, t: float) -> float:
    """Closed-form Delta for a single built-in payoff under risk-neutral
    Black-Scholes dynamics."""
    single = payoff.single
    if single is None:
        raise ValueError(f"no closed form for payoff {payoff.name!r}")
    kind, K = single
    if kind == "identity":
        return 1.0
    if kind == "const":
        return 0.0
    st = sigma * math.sqrt(t)
    d1 = (math.log(x / K) + (R + 0.5 * sigma**2) * t) / st
    if kind == "call":
        return float(norm_cdf(d1))
    if kind == "put":
        return float(norm_cdf(d1) - 1.0)
    return float(math.exp(-R * t) * norm_pdf(d1 - st) / (x * st))


def default_fd_step(payoff: Payoff, x: float) -> float:
    """``0.01 x``, or ``0.5`` for payoffs with jumps."""
    return 0.5 if payoff.discontinuous else 0.01 * x


def _solve(model, grid, incs, scheme):
    if scheme == "exact":
        return exact_exponential_solve(model, grid, incs)
    return euler_solve(model, None, grid, incs)


def fd_job(model, payoff: Payoff, grid: TimeGrid, t: float, h: float, asian: bool = False,
           scheme: str | None = None):
    """Per-path central difference ``(Phi(x+h) - Phi(x-h)) / 2h`` with shared increments."""
    if not (0 < h < model.x):
        raise ValueError(f"FD step h={h!r} must satisfy 0 < h < x")
    if scheme is None:
        scheme = "exact" if model.variant == "DelayedBS" else "euler"
    up, dn = model.with_x(model.x + h), model.with_x(model.x - h)
    disc = math.exp(-getattr(model, "R", 0.0) * t)

    def job(seed, ids):
        incs = increments_for(seed, ids, grid, model.m)
        a = payoff(observable(up, _solve(up, grid, incs, scheme), t, asian))
        b = payoff(observable(dn, _solve(dn, grid, incs, scheme), t, asian))
        return disc * (a - b) / (2.0 * h)

    return job


def fd_delta(model, payoff: Payoff, grid: TimeGrid, t: float, n_paths: int, seed: int,
             h: float | None = None, asian: bool = False, threads: int | None = None,
             scheme: str | None = None) -> Estimate:
    """Finite-difference Delta with common random numbers.

    For the lifted model the shift acts on ``x`` and enters through
    ``log(x +- h)``.
    """
    h = default_fd_step(payoff, model.x) if h is None else float(h)
    return run_ensemble(fd_job(model, payoff, grid, t, h, asian, scheme), n_paths, seed, threads)


def gaussian_joint_density(times: Sequence[float], point, d: int = 1) -> np.ndarray:
    """Joint density of ``d``-dimensional Brownian motion from 0 at increasing times.

    ``point`` has shape (..., n) when ``d == 1`` and (..., n, d) otherwise;
    coordinates are independent.

    >>> round(float(gaussian_joint_density([1.0, 2.0], [0.0, 0.0])), 6)
    0.159155
    """
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0 or ts[0] <= 0 or np.any(np.diff(ts) <= 0):
        raise ValueError("times must be strictly increasing and positive")
    y = np.asarray(point, dtype=float)
    if d == 1:
        y = y[..., None]
    if y.ndim < 2 or y.shape[-2:] != (ts.size, d):
        raise ValueError(f"point shape {np.shape(point)} does not match {ts.size} times")
    dts = np.diff(ts, prepend=0.0)[:, None]
    steps = np.diff(y, axis=-2, prepend=0.0)
    logp = -0.5 * steps**2 / dts - 0.5 * np.log(2.0 * np.pi * dts)
    return np.exp(np.sum(logp, axis=(-2, -1)))


@dataclass(frozen=True)
class DensityQuery:
    """Evaluation points for a joint density at ``times``; ``bandwidth``
    is a positive scalar, one value per coordinate, or ``"auto"``."""

    times: tuple[float, ...]
    points: np.ndarray
    bandwidth: object = "auto"

    def __post_init__(self):
        ts = np.asarray(self.times, dtype=float)
        if np.any(np.diff(ts) <= 0):
            raise ValueError("query times must be strictly increasing")
        if not isinstance(self.bandwidth, str):
            if np.any(np.asarray(self.bandwidth, dtype=float) <= 0):
                raise ValueError("bandwidth must be positive")


def silverman_bandwidth(samples: np.ndarray) -> np.ndarray:
    """Silverman's rule per coordinate, ``sd * (4 / ((n+2) S))^(1/(n+4))``."""
    S, n = samples.shape
    sd = np.std(samples, axis=0, ddof=1)
    return sd * (4.0 / ((n + 2) * S)) ** (1.0 / (n + 4))


def kde_estimate(samples, query) -> np.ndarray:
    """Gaussian product-kernel density estimate.

    Parameters
    ----------
    samples : array_like, shape (S, n)
        At least 100 samples with ``n <= 3``.
    query : DensityQuery or array_like of shape (Q, n)
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    S, n = x.shape
    if n > 3:
        raise ValueError("kde_estimate supports at most 3 dimensions")
    if S < 100:
        raise ValueError("kde_estimate needs at least 100 samples")
    if isinstance(query, DensityQuery):
        pts, bw = np.asarray(query.points, dtype=float), query.bandwidth
    else:
        pts, bw = np.asarray(query, dtype=float), "auto"
    pts = pts.reshape(-1, n)
    h = silverman_bandwidth(x) if isinstance(bw, str) else np.broadcast_to(np.asarray(bw, float), (n,))
    norm = 1.0 / (S * np.prod(h) * (2.0 * np.pi) ** (n / 2))
    out = np.empty(len(pts))
    for q, p in enumerate(pts):
        z = (x - p) / h
        out[q] = np.sum(np.exp(-0.5 * np.sum(z * z, axis=1))) * norm
    return out
