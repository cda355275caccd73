"""Tangent processes, Malliavin derivatives and covariance matrices on the grid.

Convention
----------
The discrete derivative of a path functional ``F`` in the direction of the
``k``-th increment is ``D_k F = dF / d(dW_k)`` where ``F`` is computed by the
scheme that produced the path.  With Gaussian increments this gives exact
integration by parts, ``E[G dW_k] = dt E[D_k G]``, so every weight built from
it is unbiased for the discretized model.  For ``F = X(t_N)`` the derivative
equals ``Z(t_N, t_{k+1}) * dstep_k / d(dW_k)``, the discrete counterpart of
``Z(t, u) A(u, X_u)``, and it vanishes for ``k >= N``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import NumericalAbort, PathRecord
from .models import DelayedBS, Lifted2D
from .solver import AveragedFunctional, _trapezoid_weights


def _check_finite(a, what: str):
    if not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.isfinite(a.reshape(a.shape[0], -1)).all(axis=1))[0])
        raise NumericalAbort(f"non-finite {what}", bad)


def _is_exact(model, path) -> bool:
    return isinstance(model, DelayedBS) and path.scheme == "exact"


# --------------------------------------------------------------------------
# delayed Black-Scholes, exponential scheme: log-form sensitivities
# --------------------------------------------------------------------------

@dataclass
class ExactSensitivities:
    """Sensitivities of the exponential scheme up to forward step ``N``.

    Forward arrays are indexed by forward node ``i = 0..N``.

    ``P = dX/dx``, ``Q = d log X / dx``; ``xi[:, i, j] = D_j X_i`` and, when
    requested, ``DQ[:, i, j] = D_j Q_i`` and ``DP[:, i, j] = D_j P_i``.
    """

    X: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    xi: np.ndarray | None = None
    DQ: np.ndarray | None = None
    DP: np.ndarray | None = None


def _lagged(arr, i, n, hist_value):
    """Value at forward index ``i - n`` (history value when negative)."""
    j = i - n
    return arr[:, j] if j >= 0 else hist_value


def exact_sensitivities(model: DelayedBS, path: PathRecord, N: int, order: int = 0) -> ExactSensitivities:
    """Forward-mode derivatives of the exponential scheme.

    ``order=0`` gives ``P`` and ``Q`` only; ``order=1`` adds ``D_j X``;
    ``order=2`` adds ``D_j Q`` and ``D_j P`` (needs second derivatives of the
    coefficients, which the catalog provides).
    """
    g = path.grid
    n, dt = g.n_hist, g.dt
    B = path.n_paths
    X = path.values[:, n : n + N + 1, 0]
    lag = path.values[:, :N, 0]
    dw = path.increments[:, :N, 0]
    c1 = model.log_drift_deriv(lag) * dt + model.a1.deriv(lag) * dw
    x = model.x
    P = np.empty((B, N + 1))
    Q = np.empty((B, N + 1))
    P[:, 0], Q[:, 0] = 1.0, 1.0 / x
    for i in range(N):
        Q[:, i + 1] = Q[:, i] + c1[:, i] * _lagged(P, i, n, 1.0)
        P[:, i + 1] = X[:, i + 1] * Q[:, i + 1]
    out = ExactSensitivities(X, P, Q)
    if order == 0:
        return out
    sig = model.a1(lag)
    dsig = model.a1.deriv(lag)
    zero = np.zeros((B, N))
    xi = np.zeros((B, N + 1, N))
    ell = np.zeros((B, N))
    if order >= 2:
        c2 = model.log_drift_deriv2(lag) * dt + model.a1.deriv2(lag) * dw
        DQ = np.zeros((B, N + 1, N))
        DP = np.zeros((B, N + 1, N))
    ones = np.ones(B)
    for i in range(N):
        xl = _lagged(xi, i, n, zero)
        ell = ell + c1[:, i, None] * xl
        ell[:, i] += sig[:, i]
        xi[:, i + 1] = X[:, i + 1, None] * ell
        if order >= 2:
            Pl = _lagged(P, i, n, ones)
            DPl = _lagged(DP, i, n, zero)
            dq = DQ[:, i] + c2[:, i, None] * xl * Pl[:, None] + c1[:, i, None] * DPl
            dq[:, i] += dsig[:, i] * Pl
            DQ[:, i + 1] = dq
            DP[:, i + 1] = xi[:, i + 1] * Q[:, i + 1, None] + X[:, i + 1, None] * dq
    out.xi = xi
    if order >= 2:
        out.DQ, out.DP = DQ, DP
    return out


# --------------------------------------------------------------------------
# generic Euler scheme: forward-mode derivatives
# --------------------------------------------------------------------------

def _euler_columns(model, path: PathRecord, N: int, C: int, seed_columns):
    """Propagate ``C`` linearized directions through the Euler recursion.

    ``seed_columns(i)`` returns the (B, C, d) source added after step ``i``
    (or None).  Returns (B, n_hist + N + 1, C, d) on the node axis.
    """
    g = path.grid
    n, dt = g.n_hist, g.dt
    X = path.values
    B = path.n_paths
    Y = np.zeros((B, n + N + 1, C, model.d))
    for i in range(N):
        seg = X[:, i : i + n + 1][:, None]
        dseg = np.swapaxes(Y[:, i : i + n + 1], 1, 2)
        t = i * dt
        new = Y[:, n + i] + model.drift_grad(t, seg, dseg) * dt
        gd = model.diffusion_grad(t, seg, dseg)
        new = new + np.einsum("bcdm,bm->bcd", gd, path.increments[:, i])
        s = seed_columns(i)
        if s is not None:
            new = new + s
        _check_finite(new, f"tangent after step {i}")
        Y[:, n + i + 1] = new
    return Y


def euler_derivatives(model, path: PathRecord, N: int) -> np.ndarray:
    """``D_j X`` at forward nodes ``0..N`` for the Euler scheme.

    Returns shape (B, N + 1, N, d, m): entry ``[:, i, j, :, l]`` is the
    derivative of ``X(t_i)`` in the direction of ``dW^l_j``.
    """
    g = path.grid
    n, m, d = g.n_hist, model.m, model.d
    X = path.values

    def seeds(i):
        seg = X[:, i : i + n + 1]
        a = model.diffusion(i * g.dt, seg)  # (B, d, m)
        s = np.zeros((path.n_paths, N, m, d))
        s[:, i] = np.swapaxes(a, 1, 2)
        return s.reshape(path.n_paths, N * m, d)

    Y = _euler_columns(model, path, N, N * m, seeds)[:, n:]
    return np.swapaxes(Y.reshape(path.n_paths, N + 1, N, m, d), -1, -2)


def derivatives_of_state(model, path: PathRecord, N: int) -> np.ndarray:
    """``D_j X(t_i)`` for ``i = 0..N``, shape (B, N + 1, N, d, m), for either scheme."""
    if _is_exact(model, path):
        return exact_sensitivities(model, path, N, order=1).xi[:, :, :, None, None]
    return euler_derivatives(model, path, N)


# --------------------------------------------------------------------------
# tangent process Z(t, s) and the Malliavin kernel
# --------------------------------------------------------------------------

def tangent_z(model, path: PathRecord, s: float) -> np.ndarray:
    """First variation ``Z(t, s)`` on all nodes, shape (B, n_nodes, d, d).

    Seeded with the identity at node ``s`` and zero before it; the recursion
    is the linearization of the scheme that produced the path.
    """
    g = path.grid
    n = g.n_hist
    ks = g.step(s)
    B, d = path.n_paths, model.d
    Z = np.zeros((B, g.n_nodes, d, d))
    Z[:, n + ks] = np.eye(d)
    if _is_exact(model, path):
        X = path.values[:, :, 0]
        lag = X[:, : g.n_fwd]
        c1 = model.log_drift_deriv(lag) * g.dt + model.a1.deriv(lag) * path.increments[:, :, 0]
        z = Z[:, :, 0, 0]
        for i in range(ks, g.n_fwd):
            z[:, n + i + 1] = X[:, n + i + 1] * (z[:, n + i] / X[:, n + i] + c1[:, i] * z[:, i])
        _check_finite(z, "tangent")
        return Z
    X = path.values
    for i in range(ks, g.n_fwd):
        seg = X[:, i : i + n + 1][:, None]
        dseg = np.moveaxis(Z[:, i : i + n + 1], 3, 1)  # (B, column, n+1, d)
        t = i * g.dt
        new = np.moveaxis(Z[:, n + i], 2, 1) + model.drift_grad(t, seg, dseg) * g.dt
        new = new + np.einsum("bcdm,bm->bcd", model.diffusion_grad(t, seg, dseg), path.increments[:, i])
        _check_finite(new, f"tangent after step {i}")
        Z[:, n + i + 1] = np.moveaxis(new, 1, 2)
    return Z


def malliavin_derivative(model, path: PathRecord, u: float, t: float) -> np.ndarray:
    """Kernel ``Phi(t, u)``: derivative of ``X(t)`` in the direction of the
    increment starting at ``u``, shape (B, d, m).  Zero for ``u >= t``."""
    g = path.grid
    ku, kt = g.step(u), g.step(t)
    B = path.n_paths
    if ku >= kt:
        return np.zeros((B, model.d, model.m))
    Z = tangent_z(model, path, u + g.dt)[:, g.n_hist + kt]
    n = g.n_hist
    if _is_exact(model, path):
        sig = model.a1(path.values[:, ku, 0])
        return (Z[:, 0, 0] * sig * path.values[:, n + ku + 1, 0])[:, None, None]
    a = model.diffusion(ku * g.dt, path.values[:, ku : ku + n + 1])
    return np.einsum("bij,bjm->bim", Z, a)


# --------------------------------------------------------------------------
# covariance matrices
# --------------------------------------------------------------------------

def covariance_single(model, path: PathRecord, t: float) -> np.ndarray:
    """``V(t) = sum_k Phi(t, t_k) Phi(t, t_k)^T dt``, shape (B, d, d)."""
    g = path.grid
    N = g.step(t)
    if N == 0:
        raise ValueError("covariance needs t > 0")
    D = derivatives_of_state(model, path, N)[:, N]
    return np.einsum("bjdm,bjem->bde", D, D) * g.dt


def covariance_joint(model, path: PathRecord, times) -> np.ndarray:
    """Joint covariance of ``(X(t_1), ..., X(t_n))``, shape (B, n d, n d).

    Block ``(a, b)`` is ``sum_k Phi(t_a, t_k) Phi(t_b, t_k)^T dt``.
    """
    g = path.grid
    times = list(times)
    steps = [g.step(t) for t in times]
    if any(b <= a for a, b in zip(steps, steps[1:])) or steps[0] == 0:
        raise ValueError("times must be strictly increasing forward nodes > 0")
    D = derivatives_of_state(model, path, steps[-1])
    blocks = D[:, steps]  # (B, n, N, d, m)
    B, nt, _, d, _ = blocks.shape
    V = np.einsum("bajdm,bcjem->badce", blocks, blocks) * g.dt
    return V.reshape(B, nt * d, nt * d)


def covariance_average(model, path: PathRecord, af: AveragedFunctional) -> np.ndarray:
    """Malliavin covariance of the averaged functional ``Y(t)`` (d = m = 1).

    ``sum_k (D_k Y)^2 dt`` with ``D_k Y = (1/t) sum_s w_s f'(X_s) D_k X_s``
    and trapezoid weights ``w_s`` matching :func:`average_functional`.
    """
    if model.d != 1 or model.m != 1:
        raise ValueError("averaged covariance is defined for d = m = 1")
    g = path.grid
    N = g.step(af.t)
    D = derivatives_of_state(model, path, N)[..., 0, 0]  # (B, N+1, N)
    fp = af.df(path.values[:, g.n_hist : g.n_hist + N + 1, 0])
    w = _trapezoid_weights(N, g.dt)
    DY = np.einsum("bs,bsk->bk", fp * w, D) / af.t
    return np.sum(DY**2, axis=1) * g.dt


# --------------------------------------------------------------------------
# U, U-hat, Lambda for the delayed model
# --------------------------------------------------------------------------

@dataclass
class UProcesses:
    """``U``, ``U-hat``, ``Lambda`` and ``dX/dx`` on every node, shape (B, n_nodes)."""

    U: np.ndarray
    Uhat: np.ndarray
    Lambda: np.ndarray
    dxX: np.ndarray
    scheme: str


def u_processes(model: DelayedBS, path: PathRecord, scheme: str | None = None) -> UProcesses:
    """Multiplicative decomposition ``dX/dx = U * Lambda``.

    ``scheme`` defaults to the scheme of the path.  ``"exact"`` integrates the linear equations exactly along the
    frozen-coefficient steps (so ``U * U-hat = 1`` to rounding and
    ``U = X / x``); ``scheme="euler"`` uses plain Euler recursions, whose
    product ``U * U-hat`` drifts from 1 by O(dt).
    """
    if not isinstance(model, DelayedBS):
        raise TypeError("u_processes needs a DelayedBS model")
    g = path.grid
    n, dt, nf = g.n_hist, g.dt, g.n_fwd
    B = path.n_paths
    X = path.values[:, :, 0]
    x = model.x
    scheme = path.scheme if scheme is None else scheme
    if scheme == "exact" and path.scheme != "exact":
        raise ValueError("exact U processes need a path from the exponential scheme")
    shape = (B, g.n_nodes)
    U, Uh, L, P = (np.ones(shape) for _ in range(4))
    if scheme == "exact":
        s = exact_sensitivities(model, path, nf)
        U[:, n:] = X[:, n:] / x
        Uh[:, n:] = x / X[:, n:]
        L[:, n:] = x * s.Q
        P[:, n:] = s.P
        return UProcesses(U, Uh, L, P, scheme)
    if scheme != "euler":
        raise ValueError(f"unknown scheme {scheme!r}")
    lag = X[:, :nf]
    sig, dsig = model.a1(lag), model.a1.deriv(lag)
    mu, dmu = model.a0(lag), model.a0.deriv(lag)
    dw = path.increments[:, :, 0]
    for k in range(nf):
        i = n + k
        Pl = P[:, k]
        U[:, i + 1] = U[:, i] * (1.0 + mu[:, k] * dt + sig[:, k] * dw[:, k])
        Uh[:, i + 1] = Uh[:, i] * (1.0 - mu[:, k] * dt - sig[:, k] * dw[:, k] + sig[:, k] ** 2 * dt)
        P[:, i + 1] = (P[:, i] + (dmu[:, k] * Pl * X[:, i] + mu[:, k] * P[:, i]) * dt
                       + (dsig[:, k] * Pl * X[:, i] + sig[:, k] * P[:, i]) * dw[:, k])
        L[:, i + 1] = L[:, i] + Uh[:, i] * Pl * X[:, i] * (
            dsig[:, k] * (dw[:, k] - sig[:, k] * dt) + dmu[:, k] * dt)
    _check_finite(L, "Lambda")
    return UProcesses(U, Uh, L, P, scheme)


# --------------------------------------------------------------------------
# lifted two-dimensional model
# --------------------------------------------------------------------------

@dataclass
class LiftedPieces:
    """Per-path quantities of the lifted model at forward step ``N``.

    ``yhat = Ytilde - ytilde``; forward arrays run over nodes ``0..N``.
    ``J1``/``J2`` are the derivatives of ``Xtilde``/``Ytilde`` in ``log x``.
    """

    N: int
    dt: float
    a: np.ndarray        # A1~(Xtilde(t_j - r)) for steps j < N, (B, N)
    da: np.ndarray       # its derivative in Xtilde
    g: np.ndarray        # d/dlogx of Xtilde(t_j - r) times da: D_j J1 inside the window
    Xt: np.ndarray
    yhat: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    W: np.ndarray


def lifted_pieces(model: Lifted2D, path: PathRecord, t: float) -> LiftedPieces:
    g = path.grid
    n, dt = g.n_hist, g.dt
    N = g.step(t)
    B = path.n_paths
    Xt = path.values[:, n : n + N + 1, 0]
    yhat = path.values[:, n : n + N + 1, 1] - model.ytilde
    laglog = path.values[:, :N, 0]
    a = model.a1t(laglog)
    da = model.a1t_deriv(laglog)
    dw = path.increments[:, :N, 0]
    J1 = np.empty((B, N + 1))
    J1[:, 0] = 1.0
    for i in range(N):
        lagJ = J1[:, i - n] if i - n >= 0 else 1.0
        J1[:, i + 1] = J1[:, i] + (-a[:, i] * da[:, i] * dt + da[:, i] * dw[:, i]) * lagJ
    J2 = np.zeros((B, N + 1))
    np.cumsum(np.exp(Xt[:, :N]) * J1[:, :N] * dt, axis=1, out=J2[:, 1:])
    lagJ = np.ones((B, N))
    if N > n:
        lagJ[:, n:] = J1[:, : N - n]
    W = np.zeros((B, N + 1))
    np.cumsum(dw, axis=1, out=W[:, 1:])
    return LiftedPieces(N, dt, a, da, da * lagJ, Xt, yhat, J1, J2, W)


@dataclass
class FrakProcesses:
    """Lifted-model objects at time ``t``.

    ``U``/``Uhat``: (B, 2, 2); ``V``: Malliavin covariance of the lifted state;
    ``Vcheck = Uhat V Uhat^T``; ``Theta`` its adjugate; ``Delta`` the
    path functional ``t int yhat^2 - (int yhat)^2``.
    """

    t: float
    U: np.ndarray
    Uhat: np.ndarray
    V: np.ndarray
    Vcheck: np.ndarray
    Theta: np.ndarray
    Delta: np.ndarray
    det_Vcheck: np.ndarray
    degenerate: np.ndarray
    zeta: np.ndarray = field(repr=False)


def frak_processes(model: Lifted2D, path: PathRecord, t: float) -> FrakProcesses:
    """``U``, ``U-hat``, the kernel ``zeta(t, u)``, ``V``, ``V-check``,
    ``Theta`` and ``Delta`` for the lifted model.

    ``zeta[:, k]`` is ``zeta(t, t_{k+1})`` for ``k < N``: the tangent that
    multiplies the coefficient of step ``k``.  Integrals over ``v`` are taken
    at the nodes ``t_1..t_N``, the points where each increment first reaches
    ``Ytilde``; this makes ``V-check`` the exact Gram matrix of the kernel.
    """
    if not isinstance(model, Lifted2D):
        raise TypeError("frak_processes needs a Lifted2D model")
    g = path.grid
    N = g.step(t)
    if N == 0:
        raise ValueError("t must be > 0")
    B = path.n_paths
    yN = path.values[:, g.n_hist + N, 1] - model.ytilde
    U = np.zeros((B, 2, 2))
    U[:, 0, 0] = U[:, 1, 1] = 1.0
    Uh = U.copy()
    U[:, 1, 0] = yN
    Uh[:, 1, 0] = -yN
    D = derivatives_of_state(model, path, N)[:, N, :, :, 0]  # (B, N, 2)
    V = np.einsum("bjd,bje->bde", D, D) * g.dt
    Vc = np.einsum("bij,bjk,blk->bil", Uh, V, Uh)
    Theta = np.empty_like(Vc)
    Theta[:, 0, 0] = Vc[:, 1, 1]
    Theta[:, 1, 1] = Vc[:, 0, 0]
    Theta[:, 0, 1] = -Vc[:, 0, 1]
    Theta[:, 1, 0] = -Vc[:, 1, 0]
    det = Vc[:, 0, 0] * Vc[:, 1, 1] - Vc[:, 0, 1] * Vc[:, 1, 0]
    yh = path.values[:, g.n_hist + 1 : g.n_hist + N + 1, 1] - model.ytilde
    S1 = np.sum(yh, axis=1) * g.dt
    S2 = np.sum(yh**2, axis=1) * g.dt
    Delta = t * S2 - S1**2
    degen = ~(Delta > 1e-14 * t * np.maximum(S2, 1e-300))
    # zeta(t, t_{k+1}) from D_k X(t) = zeta(t, t_{k+1}) (A1~, 0)^T in the
    # window; outside it the general tangent is used
    zeta = np.zeros((B, N, 2, 2))
    zeta[:, :, 0, 0] = zeta[:, :, 1, 1] = 1.0
    ynodes = path.values[:, g.n_hist + 1 : g.n_hist + N + 1, 1]
    zeta[:, :, 1, 0] = path.values[:, g.n_hist + N, 1][:, None] - ynodes
    n = g.n_hist
    if N > n:
        for k in range(N - n):
            zeta[:, k] = tangent_z(model, path, (k + 1) * g.dt)[:, n + N]
    return FrakProcesses(t, U, Uh, V, Vc, Theta, Delta, det, degen, zeta)


# --------------------------------------------------------------------------
# catalog of discrete derivatives
# --------------------------------------------------------------------------

_DELAYED_CATALOG = ("X", "dxX", "Lambda")
_LIFTED_ANY_T = ("Xtilde", "Ytilde")
_LIFTED_SMALL_T = ("dXtilde", "dYtilde", "Theta11", "Theta12", "Theta22", "detVcheck", "Uhat21")
CATALOG = _DELAYED_CATALOG + _LIFTED_ANY_T + _LIFTED_SMALL_T


def small_time_lifted(model: Lifted2D, path: PathRecord, t: float) -> dict:
    """Closed-form pieces for ``t <= r``: ``S1 = sum yhat_v dt``,
    ``S2 = sum yhat_v^2 dt`` over ``v = 1..N``, their derivatives ``dS1``,
    ``dS2`` in each increment and ``Dy_N = D_j yhat(t)``."""
    g = path.grid
    N = g.step(t)
    if N > g.n_hist:
        raise ValueError("this lifted-model functional is only catalogued for t <= r")
    p = lifted_pieces(model, path, t)
    a = p.a[:, :1]  # constant over the window when t <= r
    da = p.da[:, :1]
    dt = g.dt
    y = p.yhat                        # nodes 0..N
    yu = y[:, 1:]                     # yhat(t_{j+1}), j = 0..N-1
    S1 = np.sum(yu, axis=1, keepdims=True) * dt
    S2 = np.sum(yu**2, axis=1, keepdims=True) * dt
    # suffix sums over v = j+2..N of yhat_v and yhat_v^2
    suf1 = np.zeros_like(yu)
    suf2 = np.zeros_like(yu)
    suf1[:, :-1] = np.cumsum(yu[:, ::-1], axis=1)[:, ::-1][:, 1:]
    suf2[:, :-1] = np.cumsum((yu**2)[:, ::-1], axis=1)[:, ::-1][:, 1:]
    cnt = (N - 1 - np.arange(N))[None, :]
    dS1 = a * (suf1 - cnt * yu) * dt
    dS2 = 2.0 * a * (suf2 - yu * suf1) * dt
    Dy_N = a * (y[:, -1:] - yu)
    return dict(p=p, a=a, da=da, S1=S1, S2=S2, dS1=dS1, dS2=dS2, Dy_N=Dy_N, t=t, N=N)


def catalog_value(name: str, model, path: PathRecord, t: float) -> np.ndarray:
    """Value of a catalogued functional at time ``t``, one per path."""
    g = path.grid
    N = g.step(t)
    if name in _DELAYED_CATALOG:
        if name == "X":
            return path.values[:, g.n_hist + N, 0]
        _need(model, DelayedBS, name)
        s = exact_sensitivities(model, path, N) if _is_exact(model, path) else None
        if s is None:
            up = u_processes(model, path, "euler")
            return (up.dxX if name == "dxX" else up.Lambda)[:, g.n_hist + N]
        return s.P[:, N] if name == "dxX" else model.x * s.Q[:, N]
    _need(model, Lifted2D, name)
    if name == "Xtilde":
        return path.values[:, g.n_hist + N, 0]
    if name == "Ytilde":
        return path.values[:, g.n_hist + N, 1]
    c = small_time_lifted(model, path, t)
    a2 = c["a"][:, 0] ** 2
    S1, S2 = c["S1"][:, 0], c["S2"][:, 0]
    return {
        "dXtilde": lambda: c["p"].J1[:, N],
        "dYtilde": lambda: c["p"].J2[:, N],
        "Theta11": lambda: a2 * S2,
        "Theta12": lambda: a2 * S1,
        "Theta22": lambda: a2 * t * np.ones_like(S1),
        "detVcheck": lambda: a2**2 * (t * S2 - S1**2),
        "Uhat21": lambda: -c["p"].yhat[:, N],
    }[name]()


def _need(model, cls, name):
    if not isinstance(model, cls):
        raise ValueError(f"functional {name!r} needs a {cls.__name__} model")


def discrete_malliavin_derivative(name: str, model, path: PathRecord, t: float) -> np.ndarray:
    """``D_k F`` for a catalogued functional ``F`` at time ``t``.

    Returns shape (B, N) with ``N`` the number of steps up to ``t``.

    Catalog
    -------
    delayed model: ``X``, ``dxX`` (= dX/dx), ``Lambda``;
    lifted model: ``Xtilde``, ``Ytilde`` (any t) and, for ``t <= r``,
    ``dXtilde``, ``dYtilde`` (derivatives in log x), ``Theta11``,
    ``Theta12``, ``Theta22``, ``detVcheck``, ``Uhat21``.
    """
    if name not in CATALOG:
        raise ValueError(f"functional {name!r} is not in the derivative catalog {CATALOG}")
    g = path.grid
    N = g.step(t)
    if name in _DELAYED_CATALOG:
        if name == "X":
            return derivatives_of_state(model, path, N)[:, N, :, 0, 0]
        _need(model, DelayedBS, name)
        if not _is_exact(model, path):
            raise ValueError(f"{name!r} derivatives are catalogued for the exponential scheme")
        s = exact_sensitivities(model, path, N, order=2)
        return s.DP[:, N] if name == "dxX" else model.x * s.DQ[:, N]
    _need(model, Lifted2D, name)
    if name in _LIFTED_ANY_T:
        D = derivatives_of_state(model, path, N)[:, N, :, :, 0]
        return D[..., 0] if name == "Xtilde" else D[..., 1]
    c = small_time_lifted(model, path, t)
    p = c["p"]
    a, da = c["a"], c["da"]
    B = path.n_paths
    if name == "dXtilde":
        return np.broadcast_to(da, (B, N)).copy()
    if name == "dYtilde":
        return a * (p.J2[:, -1:] - p.J2[:, 1:]) + da * (p.yhat[:, -1:] - p.yhat[:, 1:])
    a2 = a**2
    if name == "Theta11":
        return a2 * c["dS2"]
    if name == "Theta12":
        return a2 * c["dS1"]
    if name == "Theta22":
        return np.zeros((B, N))
    if name == "detVcheck":
        return a2**2 * (t * c["dS2"] - 2.0 * c["S1"] * c["dS1"])
    return -c["Dy_N"]  # Uhat21


# --------------------------------------------------------------------------
# Skorokhod integral
# --------------------------------------------------------------------------

def skorokhod_integral(u, dW, dt: float, F=None, DF=None) -> np.ndarray:
    """Discrete ``delta(F u) = F sum_k u_k dW_k - sum_k u_k D_k F dt``.

    Parameters
    ----------
    u : ndarray, shape (B, N)
        Adapted integrand (``u_k`` must not depend on ``dW_j`` for ``j >= k``).
    dW : ndarray, shape (B, N)
    F : ndarray, shape (B,), optional
        Multiplier; omitted means ``F = 1``.
    DF : ndarray, shape (B, N), optional
        ``D_k F``; required when ``F`` is given.
    """
    u = np.asarray(u, dtype=float)
    dW = np.asarray(dW, dtype=float)
    if u.shape != dW.shape:
        raise ValueError(f"length mismatch: u {u.shape} vs dW {dW.shape}")
    ito = np.sum(u * dW, axis=-1)
    if F is None:
        return ito
    if DF is None or np.shape(DF) != u.shape:
        raise ValueError("DF must be given with the same shape as u")
    return F * ito - np.sum(u * DF, axis=-1) * dt


# --------------------------------------------------------------------------
# bundle
# --------------------------------------------------------------------------

@dataclass
class TangentBundle:
    """Per-path tangent objects; ``Z`` columns are computed on demand."""

    model: object
    path: PathRecord
    u: UProcesses | None = None
    _z: dict = field(default_factory=dict, repr=False)

    def z(self, s: float) -> np.ndarray:
        key = self.path.grid.index(s)
        if key not in self._z:
            self._z[key] = tangent_z(self.model, self.path, s)
        return self._z[key]

    def frak(self, t: float) -> FrakProcesses:
        return frak_processes(self.model, self.path, t)


def tangent_bundle(model, path: PathRecord) -> TangentBundle:
    u = u_processes(model, path) if isinstance(model, DelayedBS) else None
    return TangentBundle(model, path, u)
