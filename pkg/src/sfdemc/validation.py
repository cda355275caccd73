"""Acceptance checks shared by the ``validate`` subcommand and the test suite.

Each check returns a :class:`CheckResult` with the observed deviation, the
allowed one and every Monte Carlo number it produced (for the determinism
check, which re-runs the others with a different thread count).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import greeks as G
from .core import build_grid
from .linalg import jacobi_eigvals
from .malliavin import (catalog_value, covariance_average, covariance_joint, covariance_single,
                        discrete_malliavin_derivative)
from .models import DelayedBS, Lifted2D, brownian_motion
from .montecarlo import Estimate, collect, combined_stderr, loglog_slope, run_ensemble_multi
from .oracles import default_fd_step, fd_job, gaussian_joint_density, kde_estimate
from .payoffs import call, constant, digital, identity
from .solver import identity_average, observable, simulate

TANH = "tanh:0.2,0.05,100"


@dataclass
class CheckResult:
    name: str
    observed: str
    allowed: str
    passed: bool
    detail: str = ""
    estimates: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: observed {self.observed}; allowed {self.allowed}"

    def fingerprint(self) -> tuple:
        """Bytes of every number the check produced, elapsed times excluded."""
        est = tuple((np.float64(e.mean).tobytes(), np.float64(e.stderr).tobytes(), e.n_paths, e.seed)
                    for e in self.estimates)
        vals = tuple(np.ascontiguousarray(v, dtype=float).tobytes() for v in self.values)
        return est + vals


def _n(n_paths, default):
    return default if n_paths is None else int(n_paths)


def _zscore(a: Estimate, b: Estimate) -> float:
    se = combined_stderr(a, b)
    return abs(a.mean - b.mean) / se if se > 0 else (0.0 if a.mean == b.mean else math.inf)


# 1 ------------------------------------------------------------------------
def check_joint_density(n_paths=None, seed=11, threads=1) -> CheckResult:
    """KDE of Brownian motion at (0.5, 1.0) against the Gaussian product kernel."""
    n = _n(n_paths, 10**6)
    grid = build_grid(0.5, 1.0, 0.5)
    bm = brownian_motion()
    times = (0.5, 1.0)

    def job(seed, ids):
        p = simulate(bm, grid, seed, ids)
        return np.stack([p.at(t)[:, 0] for t in times], axis=1)

    samples = collect(job, n, seed, threads)
    pts = np.array([(a, b) for a in (-1.0, 0.0, 1.0) for b in (-1.0, 0.0, 1.0)])
    try:
        kde = kde_estimate(samples, pts)
    except ValueError as exc:
        return CheckResult("1 joint density", f"error: {exc}", "max abs err < 0.02", False)
    err = np.abs(kde - gaussian_joint_density(times, pts))
    return CheckResult("1 joint density", f"max abs err {err.max():.4g} ({n} paths)", "< 0.02",
                       bool(err.max() < 0.02), values=(kde,))


# 2 ------------------------------------------------------------------------
def check_classical_delta(n_paths=None, seed=12, threads=1) -> CheckResult:
    n = _n(n_paths, 10**5)
    model = DelayedBS(0.2, 100.0)
    req = G.GreekRequest(model, call(100.0), 1.0, build_grid(1.0, 1.0, 0.01), "malliavin-smalltime")
    e = G.delta_estimator(req, n, seed, threads)
    target = 0.539828
    ok = e.within(target) and e.stderr < 0.01
    return CheckResult("2 classical delta", f"{e.mean:.5f} +- {e.stderr:.5f} (|diff|={abs(e.mean - target):.4g})",
                       f"|diff| <= 4 se = {4 * e.stderr:.4g}, se < 0.01", ok, estimates=(e,))


# 3 ------------------------------------------------------------------------
def _multi_weight_job(req_list):
    """All requests share the model, grid, maturity and weight: one pass per path."""
    r0 = req_list[0]

    def job(seed, ids):
        path = simulate(r0.model, r0.grid, seed, ids, r0.scheme)
        w = r0.discount * r0.weight(path)
        obs = observable(r0.model, path, r0.t, r0.asian)
        return np.stack([r.payoff(obs) * w for r in req_list], axis=1)

    return job


def _fd_multi_job(model, payoffs, grid, t, asian):
    jobs = [fd_job(model, p, grid, t, default_fd_step(p, model.x), asian) for p in payoffs]
    return lambda seed, ids: np.stack([j(seed, ids) for j in jobs], axis=1)


def _malliavin_vs_fd(name, model, payoffs, grid, t, method, asian, n, seed, threads):
    reqs = [G.GreekRequest(model, p, t, grid, method, asian=asian) for p in payoffs]
    mal = run_ensemble_multi(_multi_weight_job(reqs), n, seed, threads)
    fd = run_ensemble_multi(_fd_multi_job(model, payoffs, grid, t, asian), n, seed + 1000, threads)
    zs = [_zscore(a, b) for a, b in zip(mal, fd)]
    obs = ", ".join(f"{p.name}: {a.mean:.4f}/{b.mean:.4f} z={z:.2f}" for p, a, b, z in zip(payoffs, mal, fd, zs))
    return CheckResult(name, obs, "z <= 4 for each payoff", all(z <= 4 for z in zs),
                       estimates=tuple(mal) + tuple(fd))


def check_delayed_delta(n_paths=None, seed=13, threads=1) -> CheckResult:
    model = DelayedBS(TANH, 100.0)
    grid = build_grid(1.0, 0.5, 0.01)
    return _malliavin_vs_fd("3 delayed delta", model, [call(100.0), digital(100.0), identity()], grid, 0.5,
                            "malliavin-general", False, _n(n_paths, 10**5), seed, threads)


# 4 ------------------------------------------------------------------------
def check_smalltime_agreement(n_paths=None, seed=14, threads=1) -> CheckResult:
    """General window weight against the closed form for t <= r."""
    n = _n(n_paths, 10**4)
    model = DelayedBS(TANH, 100.0)
    r, t = 1.0, 0.5
    levels = [r * 2.0**-k for k in range(4, 8)]
    diffs, scales, euler = [], [], []
    for dt in levels:
        grid = build_grid(r, t, dt)

        def job(seed, ids, grid=grid):
            p = simulate(model, grid, seed, ids, "exact")
            pe = simulate(model, grid, seed, ids, "euler")
            small = G.european_weight_smalltime(model, p, t)
            return np.stack([np.abs(G.european_weight_general(model, p, t) - small), np.abs(small),
                             np.abs(G.european_weight_general(model, pe, t, "euler") - small)], axis=1)

        d, s, e = run_ensemble_multi(job, n, seed, threads)
        diffs.append(d)
        scales.append(s)
        euler.append(e)
    md = np.array([d.mean for d in diffs])
    rel = md / np.array([s.mean for s in scales])
    euler_slope = loglog_slope(levels, [e.mean for e in euler])
    detail = f"euler-recursion weight slope {euler_slope:.3f}" if euler_slope is not None else ""
    ests = tuple(diffs) + tuple(scales) + tuple(euler)
    if np.all(rel < 1e-12):
        return CheckResult("4 small-time closed form",
                           f"mean |diff| {md.max():.3g} at every dt (relative {rel.max():.2g}): identical to rounding",
                           "slope >= 0.8 (difference vanishes identically)", True, detail, ests)
    slope = loglog_slope(levels, md)
    return CheckResult("4 small-time closed form", f"slope {slope}", ">= 0.8",
                       slope is not None and slope >= 0.8, detail, ests)


# 5 ------------------------------------------------------------------------
def check_asian(n_paths=None, seed=15, threads=1) -> CheckResult:
    n = _n(n_paths, 10**5)
    grid = build_grid(1.0, 0.5, 0.01)
    model = Lifted2D(TANH, 100.0)
    res = _malliavin_vs_fd("5 asian small-time", model, [identity(), call(100.0)], grid, 0.5,
                           "malliavin-smalltime", True, n, seed, threads)
    const = Lifted2D(0.2, 100.0)
    p = simulate(const, grid, seed, np.arange(min(n, 2000)))
    gap = float(np.max(np.abs(G.asian_weight_smalltime(const, p, 0.5) - G.asian_weight_constant(const, p, 0.5))))
    res.observed += f"; constant-case max |five-term - reduced| = {gap:.3g}"
    res.allowed += "; reduced form within 1e-10"
    res.passed = res.passed and gap <= 1e-10
    res.values = (np.array([gap]),)
    return res


# 6 ------------------------------------------------------------------------
def _duality_pairs():
    gd = build_grid(0.5, 1.5, 0.05)
    delayed = DelayedBS(TANH, 100.0)
    lifted = Lifted2D(TANH, 100.0)
    one = lambda w: np.ones_like(w)  # noqa: E731
    ident = lambda w: w              # noqa: E731
    return gd, [
        ("X(1.5), u=1", delayed, "X", 1.5, one),
        ("dxX(1.5), u=W", delayed, "dxX", 1.5, ident),
        ("Lambda(1.5), u=1", delayed, "Lambda", 1.5, one),
        ("Ytilde(1.0), u=cos W", lifted, "Ytilde", 1.0, np.cos),
        ("detVcheck(0.5), u=1", lifted, "detVcheck", 0.5, one),
        ("Theta12(0.5), u=W", lifted, "Theta12", 0.5, ident),
    ]


def check_duality(n_paths=None, seed=16, threads=1) -> CheckResult:
    n = _n(n_paths, 10**4)
    grid, pairs = _duality_pairs()
    out, ests, ok = [], [], True
    for label, model, name, t, ufun in pairs:
        def job(seed, ids, model=model, name=name, t=t, ufun=ufun):
            p = simulate(model, grid, seed, ids)
            N = grid.step(t)
            W = p.brownian()[:, :N, 0]       # W(t_k), adapted to step k
            u = ufun(W)
            F = catalog_value(name, model, p, t)
            DF = discrete_malliavin_derivative(name, model, p, t)
            lhs = np.sum(DF * u, axis=1) * grid.dt
            rhs = F * np.sum(u * p.increments[:, :N, 0], axis=1)
            return np.stack([lhs, rhs], axis=1)

        a, b = run_ensemble_multi(job, n, seed, threads)
        z = _zscore(a, b)
        ok &= z <= 4
        out.append(f"{label} z={z:.2f}")
        ests += [a, b]

    def ito(seed, ids):
        p = simulate(brownian_motion(), grid, seed, ids)
        W = p.brownian()[:, :-1, 0]
        return np.stack([np.sum(W * p.increments[:, :, 0], axis=1)], axis=1)

    (d,) = run_ensemble_multi(ito, n, seed + 1, threads)
    zd = abs(d.mean) / d.stderr
    ok &= zd <= 4
    out.append(f"E[delta(W)] z={zd:.2f}")
    return CheckResult("6 duality", "; ".join(out), "z <= 4 for every pair", bool(ok),
                       estimates=tuple(ests) + (d,))


# 7 ------------------------------------------------------------------------
def check_covariance(n_paths=None, seed=17, threads=1) -> CheckResult:
    n = _n(n_paths, 10**3)
    gb = build_grid(0.25, 1.0, 0.05)
    bm2 = brownian_motion(2)
    pb = simulate(bm2, gb, seed, np.arange(8))
    times = (0.25, 0.5, 1.0)
    Vj = covariance_joint(bm2, pb, times)
    expect = np.kron(np.minimum.outer(times, times), np.eye(2))
    errj = float(np.max(np.abs(Vj - expect)))
    errs = float(np.max(np.abs(covariance_single(bm2, pb, 1.0) - np.eye(2))))
    model = DelayedBS(TANH, 100.0, floor=0.15**2)
    gd = build_grid(1.0, 1.5, 0.01)
    td = (0.5, 1.0, 1.5)

    def job(seed, ids):
        p = simulate(model, gd, seed, ids)
        V = covariance_joint(model, p, td)
        return jacobi_eigvals(V)[:, 0] / np.trace(V, axis1=1, axis2=2)

    mins = collect(job, n, seed, threads)
    frac = float(np.mean(mins > 0))
    ok = errj <= 1e-12 and errs <= 1e-12 and frac == 1.0
    return CheckResult("7 covariance structure",
                       f"BM block error {max(errj, errs):.3g}; delayed min-eig > 0 on {100 * frac:.1f}% of {n} paths "
                       f"(min relative eig {mins.min():.3g})",
                       "BM error <= 1e-12; 100% positive", ok, values=(mins, Vj))


# 8 ------------------------------------------------------------------------
def check_averaged(n_paths=None, seed=18, threads=1) -> CheckResult:
    grid = build_grid(0.01, 1.0, 1e-3)
    bm = brownian_motion()
    p = simulate(bm, grid, seed, np.arange(4))
    vt = covariance_average(bm, p, identity_average(1.0))
    rel = float(np.max(np.abs(vt - 1.0 / 3.0)) * 3.0)
    model = DelayedBS(TANH, 100.0)
    gd = build_grid(1.0, 1.0, 0.02)
    pd = simulate(model, gd, seed, np.arange(min(_n(n_paths, 10**3), 10**3)))
    vd = covariance_average(model, pd, identity_average(1.0))
    ok = rel < 0.01 and bool(np.all(vd >= 0))
    return CheckResult("8 averaged covariance", f"BM relative error {rel:.3g}; delayed min {vd.min():.4g}",
                       "< 1%; >= 0 on every path", ok, values=(vt, vd))


# 9 ------------------------------------------------------------------------
def check_mean_zero(n_paths=None, seed=19, threads=1) -> CheckResult:
    n = _n(n_paths, 10**5)
    ge = build_grid(1.0, 0.5, 0.01)
    cases = [
        ("E const", G.GreekRequest(DelayedBS(0.2, 100.0), constant(1.0), 0.5, ge, "malliavin-general")),
        ("E tanh", G.GreekRequest(DelayedBS(TANH, 100.0), constant(1.0), 0.5, ge, "malliavin-general")),
        ("A const", G.GreekRequest(Lifted2D(0.2, 100.0), constant(1.0), 0.5, ge, "malliavin-smalltime", asian=True)),
        ("A tanh", G.GreekRequest(Lifted2D(TANH, 100.0), constant(1.0), 0.5, ge, "malliavin-smalltime", asian=True)),
    ]
    ests, parts, ok = [], [], True
    for label, req in cases:
        e = G.delta_estimator(req, n, seed, threads)
        z = abs(e.mean) / e.stderr
        ok &= z <= 4
        parts.append(f"{label} {e.mean:.3g} z={z:.2f}")
        ests.append(e)
    return CheckResult("9 weight mean zero", "; ".join(parts), "z <= 4", bool(ok), estimates=tuple(ests))


CHECKS = {
    1: check_joint_density,
    2: check_classical_delta,
    3: check_delayed_delta,
    4: check_smalltime_agreement,
    5: check_asian,
    6: check_duality,
    7: check_covariance,
    8: check_averaged,
    9: check_mean_zero,
}


# 10 -----------------------------------------------------------------------
def check_determinism(first: dict[int, CheckResult], n_paths=None, threads=(1, 8)) -> CheckResult:
    """Re-run every check in ``first`` (computed with ``threads[0]``) with
    ``threads[1]`` and compare every number bit for bit."""
    bad = []
    for k, res in first.items():
        again = CHECKS[k](n_paths=n_paths, threads=threads[1])
        if again.fingerprint() != res.fingerprint():
            bad.append(str(k))
    return CheckResult("10 determinism",
                       f"{len(first) - len(bad)}/{len(first)} checks bit-identical" + (f" (differ: {','.join(bad)})" if bad else ""),
                       f"all identical for threads {threads[0]} vs {threads[1]}", not bad)


def run_all(n_paths=None, criteria=None, threads=(1, 8)) -> list[CheckResult]:
    """Run the selected criteria (all by default) and the determinism check."""
    sel = sorted(criteria) if criteria else list(range(1, 11))
    first = {k: CHECKS[k](n_paths=n_paths, threads=threads[0]) for k in sel if k in CHECKS}
    out = [first[k] for k in sel if k in first]
    if 10 in sel:
        out.append(check_determinism(first, n_paths, threads))
    return out
