"""Malliavin-weight Delta estimators for the delayed Black-Scholes model
(European payoffs) and its two-dimensional lift (payoffs on the average).

Every weight ``G`` satisfies ``d/dx E[Phi(X)] = E[Phi(X) G]`` for the
discretized model: the integrand is built from the discrete derivatives of
:mod:`sfdemc.malliavin`, so the identity holds without time-step bias.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import oracles
from .core import NumericalAbort, PathRecord, TimeGrid
from .malliavin import exact_sensitivities, lifted_pieces, small_time_lifted, u_processes
from .models import DelayedBS, Lifted2D
from .montecarlo import Estimate, run_ensemble
from .payoffs import Payoff, call, constant, digital, identity, parse_payoff, put  # noqa: F401
from .solver import observable, simulate

METHODS = ("malliavin-smalltime", "malliavin-general", "finite-difference", "closed-form")


def _floor_check(model: DelayedBS, sig: np.ndarray, first_step: int):
    low = np.abs(sig) < model.sigma_floor if model.floor > 0 else sig == 0
    if np.any(low):
        p, k = np.argwhere(low)[0]
        raise NumericalAbort(f"|A1| = {abs(sig[p, k]):.6g} below the ellipticity floor on the weight window",
                             int(p), int(first_step + k))


# --------------------------------------------------------------------------
# European
# --------------------------------------------------------------------------

def european_weight_smalltime(model: DelayedBS, path: PathRecord, t: float) -> np.ndarray:
    """Closed-form weight for ``t <= r``.

    ``(1/t) [W/(x s) + (s'/s)(W^2 - t) + (m'/s - s') t W]`` with ``s = A1(x)``,
    ``s' = A1'(x)`` and ``m' = A0'(x)``; for constant ``A1 = sigma`` it is the
    classical ``W / (x sigma t)``.
    """
    g = path.grid
    N = g.step(t)
    if N > g.n_hist:
        raise ValueError(f"small-time weight needs t <= r (t={t}, r={g.r})")
    if N == 0:
        raise ValueError("t must be > 0")
    x = model.x
    s, s1, m1 = float(model.a1(x)), float(model.a1.deriv(x)), float(model.a0.deriv(x))
    if s == 0:
        raise NumericalAbort("A1(x) = 0: the weight is undefined")
    W = np.sum(path.increments[:, :N, 0], axis=1)
    return (W / (x * s) + (s1 / s) * (W * W - t) + (m1 / s - s1) * t * W) / t


def european_weight_general(model: DelayedBS, path: PathRecord, t: float, scheme: str | None = None) -> np.ndarray:
    """Weight on the window ``[max(0, t - r), t)`` for any ``t``.

    ``(1/(t ^ r)) [Lambda(t) sum_k u_k dW_k - sum_k u_k D_k Lambda(t) dt]``
    with ``u_k = U(t_k) / (A1(X(t_k - r)) X(t_k))``.

    ``scheme="exact"`` (default for exponential-scheme paths) differentiates
    the scheme exactly.  ``scheme="euler"`` uses the Euler recursions of
    :func:`sfdemc.malliavin.u_processes` and the leading-order derivative
    ``D_k Lambda(t) ~ Uhat(t_k) A1'(X(t_k - r)) dxX(t_k - r) X(t_k)``; it is
    a time-stepping approximation, not an exact identity.
    """
    g = path.grid
    n, dt = g.n_hist, g.dt
    N = g.step(t)
    if N == 0:
        raise ValueError("t must be > 0")
    nw = min(N, n)
    k0 = N - nw
    scheme = path.scheme if scheme is None else scheme
    x = model.x
    lag = path.values[:, k0:N, 0]          # node j holds X(t_j - r)
    sig = model.a1(lag)
    _floor_check(model, sig, k0)
    dsig = model.a1.deriv(lag)
    dw = path.increments[:, k0:N, 0]
    if scheme == "exact":
        if path.scheme != "exact":
            raise ValueError("the exact weight needs a path from the exponential scheme")
        s = exact_sensitivities(model, path, N)
        lam = x * s.Q[:, N]
        P_lag = np.concatenate([np.ones((path.n_paths, n)), s.P], axis=1)[:, k0:N]
        u = 1.0 / (x * sig)
        dlam = x * dsig * P_lag
    elif scheme == "euler":
        up = u_processes(model, path, "euler")
        X = path.values[:, n + k0 : n + N, 0]
        lam = up.Lambda[:, n + N]
        u = up.U[:, n + k0 : n + N] / (sig * X)
        dlam = up.Uhat[:, n + k0 : n + N] * dsig * up.dxX[:, k0:N] * X
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return (lam * np.sum(u * dw, axis=1) - np.sum(u * dlam, axis=1) * dt) / (nw * dt)


# --------------------------------------------------------------------------
# Asian (payoff on the running average)
# --------------------------------------------------------------------------

def _degenerate_check(Delta, ref):
    bad = ~(Delta > 1e-14 * ref)
    if np.any(bad):
        p = int(np.flatnonzero(bad.ravel())[0])
        raise NumericalAbort("degenerate covariance: the running integral is nearly constant", p)


def asian_weight_smalltime(model: Lifted2D, path: PathRecord, t: float, terms: bool = False):
    """Weight for payoffs on the average, ``t <= r``, in five separate terms.

    With ``c_j = a (1, -yhat_{j+1})``, ``Theta = a^2 [[S2, S1], [S1, t]]``,
    ``Delta = t S2 - S1^2`` and ``K = Uhat (J1, J2)`` (``J`` the derivative of
    the lifted state in ``log x``), ``F = Theta K / (a^4 Delta)`` and::

        x G = I.F                                   stochastic-integral term
            + sum_j c_j.Theta K  D_j Delta dt / (a^4 Delta^2)   determinant
            - sum_j c_j.(D_j Theta) K dt / (a^4 Delta)          Theta
            - sum_j c_j.Theta (D_j Uhat) J dt / (a^4 Delta)     Uhat
            - sum_j c_j.Theta Uhat D_j J dt / (a^4 Delta)       state derivative

    where ``I = sum_j c_j dW_j``.  Returns the weight, or the five terms
    (each already divided by ``x``) with ``terms=True``.
    """
    g = path.grid
    if g.step(t) > g.n_hist:
        raise ValueError(f"small-time Asian weight needs t <= r (t={t}, r={g.r})")
    c = small_time_lifted(model, path, t)
    p = c["p"]
    a, da, S1, S2, dS1, dS2 = c["a"], c["da"], c["S1"], c["S2"], c["dS1"], c["dS2"]
    dt = g.dt
    N = c["N"]
    Delta = t * S2 - S1**2
    _degenerate_check(Delta, t * S2)
    yu = p.yhat[:, 1:]
    yN = p.yhat[:, -1:]
    J1, J2 = p.J1[:, -1:], p.J2[:, -1:]
    K1, K2 = J1, J2 - yN * J1
    a2, a4 = a**2, a**4
    TK1 = a2 * (S2 * K1 + S1 * K2)
    TK2 = a2 * (S1 * K1 + t * K2)
    dw = path.increments[:, :N, 0]
    I1 = a[:, 0] * p.W[:, N]
    I2 = -a[:, 0] * np.sum(yu * dw, axis=1)

    def cdot(v1, v2):
        return a * (v1 - yu * v2)

    t1 = (I1 * TK1[:, 0] + I2 * TK2[:, 0]) / (a4 * Delta)[:, 0]
    dDelta = t * dS2 - 2.0 * S1 * dS1
    t2 = np.sum(cdot(TK1, TK2) * dDelta, axis=1) * dt / (a4 * Delta**2)[:, 0]
    t3 = -np.sum(cdot(a2 * (dS2 * K1 + dS1 * K2), a2 * dS1 * K1), axis=1) * dt / (a4 * Delta)[:, 0]
    v = -c["Dy_N"] * J1                 # (D_j Uhat) J = (0, -D_j yhat_N J1)
    t4 = -np.sum(cdot(a2 * S1 * v, a2 * t * v), axis=1) * dt / (a4 * Delta)[:, 0]
    dJ1 = np.broadcast_to(da, yu.shape)
    dJ2 = a * (J2 - p.J2[:, 1:]) + da * (yN - yu)
    w1, w2 = dJ1, dJ2 - yN * dJ1
    t5 = -np.sum(cdot(a2 * (S2 * w1 + S1 * w2), a2 * (S1 * w1 + t * w2)), axis=1) * dt / (a4 * Delta)[:, 0]
    parts = tuple(q / model.x for q in (t1, t2, t3, t4, t5))
    return parts if terms else sum(parts)


def asian_weight_constant(model: Lifted2D, path: PathRecord, t: float) -> np.ndarray:
    """Reduced three-term weight for constant ``A1 = alpha``, ``t <= r``.

    Computed with literal double sums (O(N^2) per path) as an independent
    check of :func:`asian_weight_smalltime`::

        x G = (W S2 - S1 sum_j yhat_{j+1} dW_j) / (alpha Delta)
            + (2 / Delta^2) sum_j (S2 - yhat_{j+1} S1) DD_j dt
            - (1 / Delta) sum_j (E1_j - yhat_{j+1} E2_j) dt

    with ``DD_j = sum_s sum_{v>j+1} (yhat_v - yhat_{j+1})(yhat_v - yhat_s) dt^2``,
    ``E1_j = 2 sum_{v>j+1} yhat_v (yhat_v - yhat_{j+1}) dt`` and
    ``E2_j = sum_{v>j+1} (yhat_v - yhat_{j+1}) dt``.
    """
    if not model.a1.is_constant:
        raise ValueError("the reduced Asian weight needs a constant A1")
    g = path.grid
    N = g.step(t)
    if N > g.n_hist:
        raise ValueError("the reduced Asian weight needs t <= r")
    dt = g.dt
    alpha = float(model.a1(1.0))
    yu = path.values[:, g.n_hist + 1 : g.n_hist + N + 1, 1] - model.ytilde
    dw = path.increments[:, :N, 0]
    W = np.sum(dw, axis=1)
    S1 = np.sum(yu, axis=1) * dt
    S2 = np.sum(yu * yu, axis=1) * dt
    Delta = t * S2 - S1**2
    _degenerate_check(Delta, t * S2)
    later = np.triu(np.ones((N, N), dtype=bool), k=1)     # [j, v]: v after j
    diff = (yu[:, None, :] - yu[:, :, None]) * later      # yhat_v - yhat_{j+1}
    spread = yu[:, :, None] - yu[:, None, :]              # [v, s]: yhat_v - yhat_s
    DD = np.einsum("bjv,bvs->bj", diff, spread) * dt * dt
    E1 = 2.0 * np.einsum("bjv,bv->bj", diff, yu) * dt
    E2 = np.sum(diff, axis=2) * dt
    first = (W * S2 - S1 * np.sum(yu * dw, axis=1)) / (alpha * Delta)
    second = 2.0 / Delta**2 * np.sum((S2[:, None] - yu * S1[:, None]) * DD, axis=1) * dt
    third = -np.sum(E1 - yu * E2, axis=1) * dt / Delta
    return (first + second + third) / model.x


def asian_weight_general(model: Lifted2D, path: PathRecord, t: float, research: bool = False) -> np.ndarray:
    """Weight for payoffs on the average at any ``t`` (experimental beyond ``t <= r``).

    The integrand lives on the window ``[max(0, t - r), t)``, where the
    derivative of the lifted state in the direction of ``dW_k`` is
    ``U (1, -yhat_{k+1}) a_k``.  The 2x2 window Gram matrix
    ``Vw = sum c_k c_k^T dt`` is inverted path by path; its conditioning is
    only monitored, so ``t > r`` requires ``research=True``.
    """
    g = path.grid
    n, dt = g.n_hist, g.dt
    N = g.step(t)
    if N > n and not research:
        raise ValueError("the Asian weight for t > r is experimental; pass research=True")
    p = lifted_pieces(model, path, t)
    nw = min(N, n)
    w = slice(N - nw, N)
    a, gk = p.a[:, w], p.g[:, w]
    yu = p.yhat[:, 1:][:, w]
    dw = path.increments[:, w, 0]
    yN = p.yhat[:, -1:]
    J1, J2 = p.J1[:, -1:], p.J2[:, -1:]
    K1, K2 = J1, J2 - yN * J1
    a2 = a * a
    V11 = np.sum(a2, axis=1, keepdims=True) * dt
    V12 = -np.sum(a2 * yu, axis=1, keepdims=True) * dt
    V22 = np.sum(a2 * yu * yu, axis=1, keepdims=True) * dt
    det = V11 * V22 - V12**2
    _degenerate_check(det, V11 * V22)

    def solve(b1, b2):
        return (V22 * b1 - V12 * b2) / det, (V11 * b2 - V12 * b1) / det

    F1, F2 = solve(K1, K2)
    I1 = np.sum(a * dw, axis=1)
    I2 = -np.sum(a * yu * dw, axis=1)

    def tail(q):  # sum over j > k within the window
        c = np.cumsum(q[:, ::-1], axis=1)[:, ::-1]
        out = np.zeros_like(q)
        out[:, :-1] = c[:, 1:]
        return out

    A0, A1, A2 = tail(a2), tail(a2 * yu), tail(a2 * yu * yu)
    dV12 = -a * (A1 - yu * A0) * dt
    dV22 = 2.0 * a * (A2 - yu * A1) * dt
    J2nodes = p.J2[:, 1:][:, w]
    dJ1 = gk
    dJ2 = a * (J2 - J2nodes) + gk * (yN - yu)
    dyN = a * (yN - yu)
    dK1 = dJ1
    dK2 = dJ2 - dyN * J1 - yN * dJ1
    r1 = dK1 - dV12 * F2
    r2 = dK2 - (dV12 * F1 + dV22 * F2)
    dF1, dF2 = solve(r1, r2)
    corr = np.sum(a * (dF1 - yu * dF2), axis=1) * dt
    return (I1 * F1[:, 0] + I2 * F2[:, 0] - corr) / model.x


# --------------------------------------------------------------------------
# requests and estimators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GreekRequest:
    """What to estimate: Delta of ``E[exp(-R t) Phi(.)]`` in the initial price.

    ``asian`` applies the payoff to the running average of the lifted
    model; otherwise to ``X(t)`` of the delayed model.
    """

    model: object
    payoff: Payoff
    t: float
    grid: TimeGrid
    method: str = "malliavin-general"
    asian: bool = False
    scheme: str | None = None
    research: bool = False
    h: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r} (expected one of {METHODS})")
        N = self.grid.step(self.t)
        if N == 0:
            raise ValueError("maturity must be > 0")
        if self.method == "malliavin-smalltime" and N > self.grid.n_hist:
            raise ValueError(f"malliavin-smalltime needs t <= r (t={self.t}, r={self.grid.r})")
        if self.asian and not isinstance(self.model, Lifted2D):
            raise ValueError("asian requests need the lifted model")
        if not self.asian and not isinstance(self.model, DelayedBS):
            raise ValueError("European requests need the delayed Black-Scholes model")

    @property
    def discount(self) -> float:
        return math.exp(-getattr(self.model, "R", 0.0) * self.t)

    def weight(self, path: PathRecord) -> np.ndarray:
        m, t = self.model, self.t
        if self.asian:
            if self.method == "malliavin-smalltime":
                return asian_weight_smalltime(m, path, t)
            return asian_weight_general(m, path, t, self.research)
        if self.method == "malliavin-smalltime":
            return european_weight_smalltime(m, path, t)
        return european_weight_general(m, path, t)

    def job(self):
        scheme = self.scheme if self.scheme is not None else ("exact" if not self.asian else "euler")
        disc = self.discount

        def run(seed, ids):
            path = simulate(self.model, self.grid, seed, ids, scheme)
            return disc * self.payoff(observable(self.model, path, self.t, self.asian)) * self.weight(path)

        return run


def closed_form_delta(req: GreekRequest) -> float:
    m = req.model
    if req.asian or not isinstance(m, DelayedBS):
        raise ValueError("closed-form Delta exists only for the European constant-volatility case")
    if not m.a1.is_constant or not m.a0.is_constant or float(m.a0(1.0)) != m.R:
        raise ValueError("closed-form Delta needs constant A1 and a risk-neutral drift A0 = R")
    return oracles.bs_payoff_delta(req.payoff, m.x, float(m.a1(1.0)), m.R, req.t)


def delta_estimator(req: GreekRequest, n_paths: int, seed: int, threads: int | None = None) -> Estimate:
    """Monte Carlo Delta for a request, dispatching on ``req.method``."""
    if req.method == "finite-difference":
        return oracles.fd_delta(req.model, req.payoff, req.grid, req.t, n_paths, seed, h=req.h,
                                asian=req.asian, threads=threads, scheme=req.scheme)
    if req.method == "closed-form":
        return Estimate(closed_form_delta(req), 0.0, n_paths, seed, 0.0)
    return run_ensemble(req.job(), n_paths, seed, threads)
