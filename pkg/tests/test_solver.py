import numpy as np
import pytest

from sfdemc.core import NumericalAbort, build_grid
from sfdemc.models import DelayedBS, GeneralSFDE, Lifted2D, brownian_motion
from sfdemc.montecarlo import convergence_scan, run_ensemble
from sfdemc.solver import (AveragedFunctional, average_functional, euler_solve, exact_exponential_solve,
                           girsanov_weight, identity_average, increments_for, observable, simulate)


def test_zero_volatility_zero_noise_stays_flat():
    g = build_grid(1.0, 2.0, 0.1)
    m = DelayedBS("const:0.0", 100.0)
    p = euler_solve(m, None, g, np.zeros((3, g.n_fwd, 1)))
    assert np.all(p.values == 100.0)


def test_euler_bm_reproduces_increments():
    g = build_grid(1.0, 1.0, 0.1)
    inc = increments_for(1, np.arange(4), g)
    p = euler_solve(brownian_motion(), None, g, inc)
    np.testing.assert_allclose(p.values[:, g.n_hist:, 0], np.concatenate([np.zeros((4, 1)), np.cumsum(inc[..., 0], 1)], 1),
                               atol=1e-14)


def test_exponential_scheme_constant_sigma():
    g = build_grid(1.0, 2.0, 0.05)
    inc = increments_for(3, np.arange(5), g)
    p = exact_exponential_solve(DelayedBS(0.2, 100.0), g, inc)
    W = p.brownian()[..., 0]
    t = g.forward_times
    np.testing.assert_allclose(p.values[:, g.n_hist:, 0], 100 * np.exp(0.2 * W - 0.02 * t), rtol=1e-12)
    assert p.scheme == "exact"


def test_exponential_scheme_is_positive_under_wild_noise():
    g = build_grid(0.5, 3.0, 0.05)
    inc = 5 * increments_for(3, np.arange(50), g)
    p = exact_exponential_solve(DelayedBS("tanh:0.6,0.3,100", 100.0), g, inc)
    assert np.all(p.values > 0)


def test_nonfinite_state_raises():
    g = build_grid(1.0, 1.0, 0.1)
    inc = np.zeros((3, g.n_fwd, 1))
    inc[1, 4] = np.inf
    with pytest.raises(NumericalAbort) as ei:
        euler_solve(brownian_motion(), None, g, inc)
    assert ei.value.path_index == 1 and ei.value.step == 4


def test_solver_shape_checks():
    g = build_grid(1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        euler_solve(brownian_motion(), None, g, np.zeros((2, 3, 1)))
    with pytest.raises(TypeError):
        exact_exponential_solve(brownian_motion(), g, np.zeros((2, g.n_fwd, 1)))
    with pytest.raises(ValueError):
        simulate(brownian_motion(), g, 1, [0], scheme="midpoint")


def test_history_matters():
    # dX = X(t - r) dt with constant history 1: X(t) = 1 + t on [0, r]
    def drift(t, s):
        return s[..., 0, :]

    def diffusion(t, s):
        return np.zeros(s.shape[:-2] + (1, 1))

    m = GeneralSFDE(1, 1, drift, diffusion, None, None, eta=np.array([1.0]))
    g = build_grid(1.0, 2.0, 0.01)
    p = euler_solve(m, None, g, np.zeros((1, g.n_fwd, 1)))
    assert p.at(1.0)[0, 0] == pytest.approx(2.0, abs=1e-12)
    # second interval: 2 + (t-1) + (t-1)^2/2 at t = 2 -> 3.5
    assert p.at(2.0)[0, 0] == pytest.approx(3.5, abs=0.02)


def test_average_functional_examples():
    g = build_grid(1.0, 1.0, 0.01)
    m = GeneralSFDE(1, 1, lambda t, s: np.ones(s.shape[:-2] + (1,)), lambda t, s: np.zeros(s.shape[:-2] + (1, 1)),
                    None, None)
    p = euler_solve(m, None, g, np.zeros((1, g.n_fwd, 1)))  # X(s) = s
    assert average_functional(p, identity_average(1.0))[0] == pytest.approx(0.5, abs=1e-12)
    sq = AveragedFunctional(lambda y: y * y, lambda y: 2 * y, 1.0)
    assert average_functional(p, sq)[0] == pytest.approx(1 / 3, abs=1e-4)
    with pytest.raises(ValueError):
        average_functional(p, identity_average(0.0))


def test_girsanov_weight_is_one_when_drift_is_rate():
    g = build_grid(1.0, 1.0, 0.05)
    m = DelayedBS(0.2, 100.0, R=0.03, a0=0.03)
    p = simulate(m, g, 1, np.arange(10))
    assert np.all(girsanov_weight(m, p, 1.0) == 1.0)


def test_girsanov_weight_has_unit_mean():
    g = build_grid(1.0, 2.0, 0.05)
    m = DelayedBS("tanh:0.2,0.05,100", 100.0, R=0.01, a0="tanh:0.05,0.02,100")

    def job(seed, ids):
        return girsanov_weight(m, simulate(m, g, seed, ids), 2.0)

    e = run_ensemble(job, 20_000, 4, threads=1)
    assert abs(e.mean - 1.0) < 4 * e.stderr


def test_girsanov_floor_abort():
    g = build_grid(1.0, 1.0, 0.1)
    m = DelayedBS("affine_clip:-1,0.01,0.0,1.0", 100.0, a0=0.01)
    p = simulate(m, g, 1, np.arange(3))
    with pytest.raises(NumericalAbort, match="floor"):
        girsanov_weight(m, p, 1.0)


def test_observables():
    g = build_grid(1.0, 1.0, 0.1)
    lm = Lifted2D("const:0.2", 100.0, ytilde=3.0)
    p = simulate(lm, g, 1, np.arange(4))
    np.testing.assert_allclose(observable(lm, p, 1.0), np.exp(p.at(1.0)[:, 0]))
    np.testing.assert_allclose(observable(lm, p, 1.0, asian=True), p.at(1.0)[:, 1] - 3.0)
    with pytest.raises(ValueError):
        observable(DelayedBS(0.2, 100.0), p, 1.0, asian=True)


def test_lifted_log_coordinate_matches_exponential_scheme():
    g = build_grid(1.0, 2.0, 0.05)
    inc = increments_for(8, np.arange(6), g)
    lp = euler_solve(Lifted2D("tanh:0.2,0.05,100", 100.0), None, g, inc)
    dp = exact_exponential_solve(DelayedBS("tanh:0.2,0.05,100", 100.0), g, inc)
    np.testing.assert_allclose(np.exp(lp.values[:, :, 0]), dp.values[:, :, 0], rtol=1e-12)


def test_euler_approaches_exponential_scheme_at_first_order():
    model = DelayedBS("tanh:0.2,0.05,100", 100.0, a0=0.5)

    def family(dt):
        g = build_grid(1.0, 1.0, dt)

        def job(seed, ids):
            inc = increments_for(seed, ids, g)
            return euler_solve(model, None, g, inc).at(1.0)[:, 0] - exact_exponential_solve(model, g, inc).at(1.0)[:, 0]

        return job

    scan = convergence_scan(family, [2.0**-k for k in range(3, 8)], 20_000, 5, threads=1, reference=0.0)
    assert scan.available and scan.slope >= 0.8
