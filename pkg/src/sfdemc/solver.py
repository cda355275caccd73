"""Brownian increments and forward solvers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import NumericalAbort, PathRecord, TimeGrid
from .models import DelayedBS
from .rng import RngStream, normals


def increments_for(seed: int, path_ids, grid: TimeGrid, m: int = 1, stream: int = 0) -> np.ndarray:
    """Normal(0, dt) increments for many paths, shape (n_paths, n_fwd, m)."""
    if m < 1:
        raise ValueError("noise dimension m must be >= 1")
    z = normals(seed, path_ids, grid.n_fwd * m, stream)
    return np.sqrt(grid.dt) * z.reshape(-1, grid.n_fwd, m)


def sample_increments(stream: RngStream, grid: TimeGrid, m: int = 1) -> np.ndarray:
    """Increments of a single stream, shape (n_fwd, m)."""
    return increments_for(stream.seed, [stream.path_index], grid, m, stream.stream)[0]


def _abort_if_bad(new: np.ndarray, k: int):
    if not np.all(np.isfinite(new)):
        bad = np.flatnonzero(~np.isfinite(new.reshape(new.shape[0], -1)).all(axis=1))[0]
        raise NumericalAbort(f"non-finite state {new[bad].tolist()} after step {k}", int(bad), k)


def _history(model, grid, eta, n_paths):
    if eta is None:
        h = model.history(grid.n_hist)
    else:
        h = np.asarray(eta, dtype=float)
        if h.ndim <= 1:
            h = np.broadcast_to(h.reshape(1, -1), (grid.n_hist + 1, model.d))
        if h.shape != (grid.n_hist + 1, model.d):
            raise ValueError(f"history of shape {h.shape} does not fit ({grid.n_hist + 1}, {model.d})")
    return np.broadcast_to(h, (n_paths,) + h.shape)


def euler_solve(model, eta, grid: TimeGrid, incs, seed=None, path_ids=None) -> PathRecord:
    """Left-point Euler-Maruyama for a functional equation.

    Parameters
    ----------
    model
        Any model exposing ``drift``/``diffusion`` on segments.
    eta : array_like or None
        History on the ``n_hist + 1`` history nodes, or a constant state;
        ``None`` uses the model's own history.
    incs : ndarray, shape (n_paths, n_fwd, m) or (n_fwd, m)
    """
    incs = np.asarray(incs, dtype=float)
    if incs.ndim == 2:
        incs = incs[None]
    P, nf, m = incs.shape
    if nf != grid.n_fwd or m != model.m:
        raise ValueError(f"increments of shape {incs.shape} do not match grid/model")
    n, dt = grid.n_hist, grid.dt
    X = np.empty((P, grid.n_nodes, model.d))
    X[:, : n + 1] = _history(model, grid, eta, P)
    for k in range(nf):
        seg = X[:, k : k + n + 1]
        t = k * dt
        new = seg[:, -1] + model.drift(t, seg) * dt + np.einsum("pij,pj->pi", model.diffusion(t, seg), incs[:, k])
        _abort_if_bad(new, k)
        X[:, n + k + 1] = new
    return PathRecord(grid, X, incs, seed, None if path_ids is None else np.asarray(path_ids),
                      scheme="euler")


def exact_exponential_solve(model: DelayedBS, grid: TimeGrid, incs, seed=None, path_ids=None) -> PathRecord:
    """Exponential scheme with coefficients frozen over each step.

    ``X(t_{k+1}) = X(t_k) exp[(A0 - A1^2/2)(X(t_k - r)) dt + A1(X(t_k - r)) dW_k]``.
    All lags inside one delay interval are already known, so each interval
    is advanced in one vectorized pass.
    """
    if not isinstance(model, DelayedBS):
        raise TypeError("exact_exponential_solve needs a DelayedBS model")
    incs = np.asarray(incs, dtype=float)
    if incs.ndim == 2:
        incs = incs[None]
    P, nf, _ = incs.shape
    if nf != grid.n_fwd:
        raise ValueError("increments do not match grid")
    n, dt = grid.n_hist, grid.dt
    X = np.empty((P, grid.n_nodes, 1))
    X[:, : n + 1] = model.x
    dw = incs[:, :, 0]
    for k0 in range(0, nf, n):
        k1 = min(k0 + n, nf)
        lag = X[:, k0:k1, 0]
        expo = model.log_drift(lag) * dt + model.a1(lag) * dw[:, k0:k1]
        X[:, n + k0 + 1 : n + k1 + 1, 0] = X[:, n + k0, 0:1] * np.exp(np.cumsum(expo, axis=1))
        _abort_if_bad(X[:, n + k0 + 1 : n + k1 + 1, 0], k1 - 1)
    return PathRecord(grid, X, incs, seed, None if path_ids is None else np.asarray(path_ids),
                      scheme="exact", x0=model.x)


def simulate(model, grid: TimeGrid, seed: int, path_ids, scheme: str | None = None) -> PathRecord:
    """Draw increments for ``path_ids`` and solve.

    ``scheme`` defaults to ``"exact"`` for :class:`DelayedBS` and ``"euler"``
    otherwise (the lifted model's log coordinate is exact under Euler).
    """
    incs = increments_for(seed, path_ids, grid, model.m)
    if scheme is None:
        scheme = "exact" if isinstance(model, DelayedBS) else "euler"
    if scheme == "exact":
        return exact_exponential_solve(model, grid, incs, seed, path_ids)
    if scheme == "euler":
        return euler_solve(model, None, grid, incs, seed, path_ids)
    raise ValueError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class AveragedFunctional:
    """``Y(t) = (1/t) int_0^t f(X(s)) ds`` with the derivative ``df`` of ``f``."""

    f: Callable
    df: Callable
    t: float


def identity_average(t: float) -> AveragedFunctional:
    return AveragedFunctional(lambda y: y, np.ones_like, t)


def _trapezoid_weights(N: int, dt: float) -> np.ndarray:
    w = np.full(N + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def average_functional(path: PathRecord, af: AveragedFunctional, component: int = 0) -> np.ndarray:
    """Trapezoid approximation of ``Y(t)``, one value per path."""
    if not af.t > 0:
        raise ValueError("averaging time must be positive")
    g = path.grid
    N = g.step(af.t)
    fx = af.f(path.values[:, g.n_hist : g.n_hist + N + 1, component])
    return np.sum(fx * _trapezoid_weights(N, g.dt), axis=1) / af.t


def girsanov_weight(model: DelayedBS, path: PathRecord, t: float) -> np.ndarray:
    """Density ``M(t)`` of the risk-neutral measure, left-point sums.

    ``Sigma = -(A0(X(s-r)) - R) / A1(X(s-r))``.
    """
    g = path.grid
    N = g.step(t)
    lag = path.values[:, :N, 0]
    a1 = model.a1(lag)
    low = np.abs(a1) < model.sigma_floor if model.floor > 0 else (a1 == 0)
    if np.any(low):
        p, k = np.argwhere(low)[0]
        raise NumericalAbort(
            f"|A1| = {abs(a1[p, k]):.6g} below the ellipticity floor at step {k} (lag state {lag[p, k]:.6g})",
            int(p), int(k))
    sig = -(model.a0(lag) - model.R) / a1
    return np.exp(np.sum(sig * path.increments[:, :N, 0], axis=1) - 0.5 * np.sum(sig**2, axis=1) * g.dt)



def observable(model, path: PathRecord, t: float, asian: bool = False) -> np.ndarray:
    """Quantity a payoff is applied to: the price ``X(t)`` or, with ``asian``,
    the running average ``(Ytilde(t) - ytilde) / t`` of the lifted model."""
    g = path.grid
    i = g.index(t)
    if asian:
        if getattr(model, "variant", None) != "Lifted2D":
            raise ValueError("asian observables need a Lifted2D model")
        return (path.values[:, i, 1] - model.ytilde) / t
    if getattr(model, "variant", None) == "Lifted2D":
        return np.exp(path.values[:, i, 0])
    return path.values[:, i, 0]
