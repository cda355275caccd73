"""Model specifications: general functional SDEs, the delayed Black-Scholes
equation and its two-dimensional log/average lift.

All coefficient evaluators work on batches.  A segment has shape
``(..., n_hist + 1, d)`` with index 0 at ``t - r`` and index -1 at ``t``;
drifts return ``(..., d)`` and diffusions ``(..., d, m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


# --------------------------------------------------------------------------
# scalar coefficient catalog
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Coefficient:
    """Scalar function of the lagged price with analytic derivatives.

    Built from a short text form, see :func:`parse_coefficient`.
    """

    kind: str
    params: tuple[float, ...]

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.kind == "const":
            return np.full_like(y, p[0])
        if self.kind == "tanh":
            a, b, s = p
            return a + b * np.tanh(y / s)
        if self.kind == "affine_clip":
            a, b, lo, hi = p
            return np.clip(a + b * y, lo, hi)
        raise AssertionError(self.kind)

    def deriv(self, y):
        y = np.asarray(y, dtype=float)
        p = self.params
        if self.kind == "const":
            return np.zeros_like(y)
        if self.kind == "tanh":
            a, b, s = p
            return (b / s) / np.cosh(y / s) ** 2
        if self.kind == "affine_clip":
            a, b, lo, hi = p
            z = a + b * y
            return np.where((z > lo) & (z < hi), b, 0.0)
        raise AssertionError(self.kind)

    def deriv2(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "tanh":
            a, b, s = self.params
            th = np.tanh(y / s)
            return -2.0 * (b / s**2) * th * (1.0 - th**2)
        return np.zeros_like(y)

    @property
    def is_constant(self) -> bool:
        return self.kind == "const" or (self.kind == "tanh" and self.params[1] == 0.0)

    @property
    def text(self) -> str:
        return f"{self.kind}:" + ",".join(repr(float(v)) for v in self.params)

    def __str__(self) -> str:
        return self.text


_ARITY = {"const": 1, "tanh": 3, "affine_clip": 4}


def parse_coefficient(text: str) -> Coefficient:
    """Parse ``const:s``, ``tanh:a,b,scale`` or ``affine_clip:a,b,lo,hi``.

    >>> float(parse_coefficient("tanh:0.2,0.05,100")(0.0))
    0.2
    """
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip()
    if kind not in _ARITY:
        raise ValueError(f"unknown coefficient form {kind!r} (expected one of {sorted(_ARITY)})")
    try:
        vals = tuple(float(v) for v in rest.split(",")) if rest.strip() else ()
    except ValueError as exc:
        raise ValueError(f"bad number in coefficient {text!r}") from exc
    if len(vals) != _ARITY[kind]:
        raise ValueError(f"{kind} takes {_ARITY[kind]} parameters, got {len(vals)}")
    if kind == "tanh" and vals[2] == 0:
        raise ValueError("tanh scale must be nonzero")
    if kind == "affine_clip" and not vals[2] < vals[3]:
        raise ValueError("affine_clip needs lo < hi")
    return Coefficient(kind, vals)


def _coef(c) -> Coefficient:
    if isinstance(c, Coefficient):
        return c
    if isinstance(c, str):
        return parse_coefficient(c)
    return Coefficient("const", (float(c),))


# --------------------------------------------------------------------------
# general functional equation
# --------------------------------------------------------------------------

Functional = Callable[[float, np.ndarray], np.ndarray]
Gradient = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GeneralSFDE:
    """``dX = A0(t, X_t) dt + sum_i A_i(t, X_t) dW^i`` with functional
    coefficients and their Frechet derivatives.

    Parameters
    ----------
    d, m : int
        State and noise dimensions.
    drift : callable ``(t, seg) -> (..., d)``
    diffusion : callable ``(t, seg) -> (..., d, m)``
    drift_grad : callable ``(t, seg, dseg) -> (..., d)``
        Directional derivative of the drift along the segment ``dseg``.
    diffusion_grad : callable ``(t, seg, dseg) -> (..., d, m)``
    eta : array_like
        History; either a constant state of length ``d`` or an array of
        shape ``(n_hist + 1, d)`` on the history nodes.

    Evaluators must broadcast over leading axes of ``seg`` and ``dseg``.
    """

    d: int
    m: int
    drift: Functional
    diffusion: Functional
    drift_grad: Gradient
    diffusion_grad: Gradient
    eta: np.ndarray = field(default_factory=lambda: np.zeros(1))
    name: str = "general"

    variant = "GeneralSFDE"

    def history(self, n_hist: int) -> np.ndarray:
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim <= 1:
            eta = np.broadcast_to(eta.reshape(-1) if eta.ndim else eta[None], (self.d,))
            return np.broadcast_to(eta, (n_hist + 1, self.d)).copy()
        if eta.shape != (n_hist + 1, self.d):
            raise ValueError(f"history of shape {eta.shape} does not fit grid ({n_hist + 1}, {self.d})")
        return eta.copy()

    def history_tangent(self, n_hist: int) -> np.ndarray:
        """Derivative of the history with respect to its value at time zero
        for a constant history (identity on every node)."""
        return np.broadcast_to(np.eye(self.d), (n_hist + 1, self.d, self.d)).copy()


def brownian_motion(d: int = 1, start=0.0) -> GeneralSFDE:
    """The ``d``-dimensional Brownian motion as a functional equation."""

    def drift(t, seg):
        return np.zeros(seg.shape[:-2] + (d,))

    def diffusion(t, seg):
        return np.broadcast_to(np.eye(d), seg.shape[:-2] + (d, d))

    def drift_grad(t, seg, dseg):
        return np.zeros(np.broadcast_shapes(seg.shape, dseg.shape)[:-2] + (d,))

    def diffusion_grad(t, seg, dseg):
        return np.zeros(np.broadcast_shapes(seg.shape, dseg.shape)[:-2] + (d, d))

    return GeneralSFDE(d, d, drift, diffusion, drift_grad, diffusion_grad,
                       eta=np.full(d, float(start)), name="bm")


# --------------------------------------------------------------------------
# delayed Black-Scholes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayedBS:
    """``dX = A0(X(t-r)) X dt + A1(X(t-r)) X dW`` with constant history ``x``.

    Parameters
    ----------
    a1 : Coefficient or str or float
        Volatility as a function of the lagged price.
    x : float
        Initial (and historical) price, > 0.
    R : float
        Interest rate used for discounting and the Girsanov weight.
    a0 : Coefficient or str or float
        Drift rate as a function of the lagged price (default 0).
    floor : float
        Declared lower bound ``c`` on ``A1(y)**2``.
    floor_range : (float, float)
        Range where the floor is checked by sampling.
    """

    a1: Coefficient
    x: float
    R: float = 0.0
    a0: Coefficient = Coefficient("const", (0.0,))
    floor: float = 0.0
    floor_range: tuple[float, float] = (1e-8, 1e4)

    variant = "DelayedBS"
    d = 1
    m = 1

    def __post_init__(self):
        object.__setattr__(self, "a1", _coef(self.a1))
        object.__setattr__(self, "a0", _coef(self.a0))
        if not self.x > 0:
            raise ValueError("initial price x must be positive")
        if self.R < 0:
            raise ValueError("rate R must be non-negative")
        if self.floor < 0:
            raise ValueError("ellipticity floor must be non-negative")
        if self.floor > 0:
            lo, hi = self.floor_range
            ys = np.concatenate([np.linspace(lo, hi, 4001), np.geomspace(max(lo, 1e-12), max(hi, 1e-12), 4001)])
            worst = float(np.min(self.a1(ys) ** 2))
            if worst < self.floor:
                raise ValueError(
                    f"A1^2 drops to {worst:.6g} below the declared floor {self.floor:.6g} on [{lo}, {hi}]"
                )

    def with_x(self, x: float) -> "DelayedBS":
        return DelayedBS(self.a1, x, self.R, self.a0, 0.0, self.floor_range)

    @property
    def sigma_floor(self) -> float:
        return float(np.sqrt(self.floor))

    # -- general-form evaluators -------------------------------------------
    def history(self, n_hist: int) -> np.ndarray:
        return np.full((n_hist + 1, 1), float(self.x))

    def history_tangent(self, n_hist: int) -> np.ndarray:
        return np.ones((n_hist + 1, 1, 1))

    def drift(self, t, seg):
        return self.a0(seg[..., 0, :]) * seg[..., -1, :]

    def diffusion(self, t, seg):
        return (self.a1(seg[..., 0, :]) * seg[..., -1, :])[..., None]

    def drift_grad(self, t, seg, dseg):
        lag, now = seg[..., 0, :], seg[..., -1, :]
        return self.a0.deriv(lag) * dseg[..., 0, :] * now + self.a0(lag) * dseg[..., -1, :]

    def diffusion_grad(self, t, seg, dseg):
        lag, now = seg[..., 0, :], seg[..., -1, :]
        return (self.a1.deriv(lag) * dseg[..., 0, :] * now + self.a1(lag) * dseg[..., -1, :])[..., None]

    # -- log-form pieces used by the exponential scheme ----------------------
    def log_drift(self, lag):
        return self.a0(lag) - 0.5 * self.a1(lag) ** 2

    def log_drift_deriv(self, lag):
        return self.a0.deriv(lag) - self.a1(lag) * self.a1.deriv(lag)

    def log_drift_deriv2(self, lag):
        return self.a0.deriv2(lag) - self.a1.deriv(lag) ** 2 - self.a1(lag) * self.a1.deriv2(lag)


# --------------------------------------------------------------------------
# two-dimensional lift (log price, running integral)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Lifted2D:
    """State ``(log X, int_0^t X ds + y0)`` for the delayed Black-Scholes
    model without drift.

    ``A1~(z) = A1(exp z)`` drives the first coordinate.  The drift is
    ``(-A1~(z_lag)^2 / 2, exp(z_now))`` and the diffusion ``(A1~(z_lag), 0)``.
    """

    a1: Coefficient
    x: float
    ytilde: float = 0.0

    variant = "Lifted2D"
    d = 2
    m = 1

    def __post_init__(self):
        object.__setattr__(self, "a1", _coef(self.a1))
        if not self.x > 0:
            raise ValueError("initial price x must be positive")

    @property
    def xtilde(self) -> float:
        return float(np.log(self.x))

    def with_x(self, x: float) -> "Lifted2D":
        return Lifted2D(self.a1, x, self.ytilde)

    def a1t(self, z):
        return self.a1(np.exp(z))

    def a1t_deriv(self, z):
        ez = np.exp(z)
        return self.a1.deriv(ez) * ez

    def a1t_deriv2(self, z):
        ez = np.exp(z)
        return self.a1.deriv2(ez) * ez**2 + self.a1.deriv(ez) * ez

    def history(self, n_hist: int) -> np.ndarray:
        return np.tile([self.xtilde, self.ytilde], (n_hist + 1, 1))

    def history_tangent(self, n_hist: int) -> np.ndarray:
        return np.broadcast_to(np.eye(2), (n_hist + 1, 2, 2)).copy()

    def drift(self, t, seg):
        lag = seg[..., 0, 0]
        now = seg[..., -1, 0]
        return np.stack([-0.5 * self.a1t(lag) ** 2, np.exp(now)], axis=-1)

    def diffusion(self, t, seg):
        lag = seg[..., 0, 0]
        a = self.a1t(lag)
        return np.stack([a, np.zeros_like(a)], axis=-1)[..., None]

    def drift_grad(self, t, seg, dseg):
        lag = seg[..., 0, 0]
        now = seg[..., -1, 0]
        g0 = -self.a1t(lag) * self.a1t_deriv(lag) * dseg[..., 0, 0]
        g1 = np.exp(now) * dseg[..., -1, 0]
        return np.stack(np.broadcast_arrays(g0, g1), axis=-1)

    def diffusion_grad(self, t, seg, dseg):
        lag = seg[..., 0, 0]
        g0 = self.a1t_deriv(lag) * dseg[..., 0, 0]
        return np.stack([g0, np.zeros_like(g0)], axis=-1)[..., None]
