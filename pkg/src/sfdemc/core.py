"""Time grids, stored paths and history-segment access."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class NumericalAbort(RuntimeError):
    """A path produced a non-finite or otherwise unusable state."""

    def __init__(self, message: str, path_index: int | None = None, step: int | None = None):
        super().__init__(message)
        self.path_index = path_index
        self.step = step

    def with_offset(self, path_ids) -> "NumericalAbort":
        """Translate a batch-local path index into a global one."""
        if self.path_index is None:
            return self
        gid = int(np.asarray(path_ids)[self.path_index])
        return NumericalAbort(f"path {gid}: {self.args[0]}", gid, self.step)


def _as_fraction(v: float) -> Fraction:
    return Fraction(v).limit_denominator(10**9)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[-r, T]`` whose step divides both ``r`` and ``T``.

    Node ``i`` sits at ``-r + i*dt``; node ``n_hist`` is time zero.  The forward
    step ``k`` (``0 <= k < n_fwd``) goes from node ``n_hist + k`` to
    ``n_hist + k + 1``.
    """

    r: float
    T: float
    n_hist: int
    n_fwd: int

    @property
    def dt(self) -> float:
        return self.r / self.n_hist

    @property
    def n_nodes(self) -> int:
        return self.n_hist + self.n_fwd + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.dt * (np.arange(self.n_nodes) - self.n_hist)

    @property
    def forward_times(self) -> np.ndarray:
        """Times ``0, dt, ..., T`` (forward nodes including zero)."""
        return self.dt * np.arange(self.n_fwd + 1)

    def index(self, t: float) -> int:
        """Node index of time ``t``; raises if ``t`` is not a node."""
        k = (t + self.r) / self.dt
        i = int(round(k))
        if abs(k - i) > 1e-9 * max(1.0, abs(k)) or not 0 <= i < self.n_nodes:
            raise ValueError(f"time {t!r} is not a node of the grid (dt={self.dt!r})")
        return i

    def step(self, t: float) -> int:
        """Number of forward steps from 0 to the node ``t`` (``t >= 0``)."""
        k = self.index(t) - self.n_hist
        if k < 0:
            raise ValueError(f"time {t!r} is before zero")
        return k

    def is_node(self, t: float) -> bool:
        try:
            self.index(t)
        except ValueError:
            return False
        return True


def build_grid(r: float, T: float, dt_target: float, max_refine: int = 1000) -> TimeGrid:
    """Choose a step no larger than ``dt_target`` that divides ``r`` and ``T``.

    Starts from ``dt = r / ceil(r / dt_target)`` and keeps refining ``r / n``
    until ``T`` is an integer multiple as well.

    Examples
    --------
    >>> g = build_grid(1.0, 2.0, 0.25)
    >>> g.dt, g.n_hist, g.n_fwd
    (0.25, 4, 8)
    >>> build_grid(1.0, 1.0, 0.3).dt
    0.25
    """
    if not (r > 0 and T > 0 and dt_target > 0):
        raise ValueError("r, T and dt_target must be positive")
    fr, fT = _as_fraction(r), _as_fraction(T)
    ratio = r / dt_target
    n0 = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 * ratio else math.ceil(ratio)
    n0 = max(n0, 1)
    for n in range(n0, max_refine * n0 + 1):
        m = fT * n / fr
        if m.denominator == 1:
            return TimeGrid(r=float(r), T=float(T), n_hist=n, n_fwd=int(m))
    raise ValueError(
        f"no common step for r={r!r}, T={T!r} within a {max_refine}x refinement of dt={dt_target!r}"
    )


@dataclass(frozen=True)
class PathRecord:
    """A batch of simulated trajectories on a grid.

    Attributes
    ----------
    values : ndarray, shape (n_paths, n_nodes, d)
        State at every node; the first ``n_hist + 1`` rows are the history.
    increments : ndarray, shape (n_paths, n_fwd, m)
        ``increments[:, k]`` drives the step that ends at forward node ``k+1``.
    scheme : str
        ``"euler"`` or ``"exact"``; the Malliavin routines differentiate the
        scheme that produced the path.
    """

    grid: TimeGrid
    values: np.ndarray
    increments: np.ndarray
    seed: int | None = None
    path_ids: np.ndarray | None = None
    scheme: str = "euler"
    x0: float | None = field(default=None, compare=False)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def at(self, t: float) -> np.ndarray:
        """State at node ``t``, shape (n_paths, d)."""
        return self.values[:, self.grid.index(t)]

    def brownian(self) -> np.ndarray:
        """W at forward nodes, shape (n_paths, n_fwd + 1, m)."""
        w = np.zeros((self.n_paths, self.grid.n_fwd + 1, self.increments.shape[2]))
        np.cumsum(self.increments, axis=1, out=w[:, 1:])
        return w


def segment_at(path: PathRecord, t: float) -> np.ndarray:
    """History window ``X(t+u), -r <= u <= 0`` as a view.

    Returns shape (n_paths, n_hist + 1, d); index 0 is ``t - r`` and index -1
    is ``t`` itself.
    """
    g = path.grid
    i = g.index(t)
    if i < g.n_hist:
        raise ValueError(f"segment anchor {t!r} must be >= 0")
    return path.values[:, i - g.n_hist : i + 1]


def evaluate_coefficient(model, which: str, t: float, seg) -> np.ndarray:
    """Evaluate the drift (``which="drift"``) or the ``i``-th diffusion column
    (``which="diffusion_i"`` with ``i`` starting at 1) on a segment.
    """
    seg = np.asarray(seg, dtype=float)
    if seg.ndim < 2 or seg.shape[-1] != model.d:
        raise ValueError(f"segment of shape {seg.shape} does not match model dimension {model.d}")
    if which == "drift":
        return model.drift(t, seg)
    if which.startswith("diffusion"):
        tail = which[len("diffusion"):].lstrip("_")
        i = int(tail) if tail else 1
        if not 1 <= i <= model.m:
            raise ValueError(f"diffusion index {i} out of range 1..{model.m}")
        return model.diffusion(t, seg)[..., i - 1]
    raise ValueError(f"unknown coefficient {which!r}")
