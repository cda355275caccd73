import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfdemc.core import NumericalAbort, build_grid
from sfdemc.montecarlo import (Estimate, collect, combined_stderr, convergence_scan, default_threads,
                               loglog_slope, mean_stderr, pairwise_sum, run_ensemble, run_ensemble_multi)
from sfdemc.solver import increments_for


def _normal_job(seed, ids):
    g = build_grid(1.0, 1.0, 0.01)
    return increments_for(seed, ids, g)[:, :, 0].sum(axis=1)


def test_constant_job():
    e = run_ensemble(lambda s, ids: np.ones(ids.size), 5000, 1, threads=1)
    assert (e.mean, e.stderr, e.n_paths) == (1.0, 0.0, 5000)


def test_results_independent_of_thread_count():
    a = run_ensemble(_normal_job, 5000, 7, threads=1)
    for th in (2, 3, 8):
        assert run_ensemble(_normal_job, 5000, 7, threads=th).same_as(a)
    assert np.array_equal(collect(_normal_job, 3000, 7, threads=1), collect(_normal_job, 3000, 7, threads=4))


def test_collect_keeps_path_order():
    out = collect(lambda s, ids: ids.astype(float), 2500, 0, threads=3)
    assert out.tolist() == list(range(2500))


def test_abort_reports_global_index():
    def job(seed, ids):
        if 2000 in ids:
            raise NumericalAbort("boom", int(np.flatnonzero(ids == 2000)[0]), 3)
        return np.zeros(ids.size)

    with pytest.raises(NumericalAbort) as ei:
        run_ensemble(job, 3000, 0, threads=2)
    assert ei.value.path_index == 2000 and ei.value.step == 3


def test_argument_errors():
    with pytest.raises(ValueError):
        run_ensemble(_normal_job, 1, 0)
    with pytest.raises(ValueError):
        collect(_normal_job, 10, 0, threads=0)
    with pytest.raises(ValueError):
        run_ensemble(lambda s, ids: np.ones((ids.size, 2)), 10, 0, threads=1)
    with pytest.raises(ValueError):
        collect(lambda s, ids: np.ones(3), 10, 0, threads=1)


def test_multi_matches_single():
    job2 = lambda s, ids: np.stack([_normal_job(s, ids), 2 * _normal_job(s, ids)], axis=1)  # noqa: E731
    a, b = run_ensemble_multi(job2, 3000, 2, threads=2)
    single = run_ensemble(_normal_job, 3000, 2, threads=1)
    assert a.mean == single.mean and b.mean == pytest.approx(2 * single.mean)


def test_coverage_over_seeds():
    # 50 independent ensembles of a N(0, 1) job; a 3-sigma band should
    # rarely be missed
    outside = 0
    for seed in range(50):
        e = run_ensemble(_normal_job, 2000, seed, threads=1)
        outside += not e.within(0.0, k=3.0)
    assert outside <= 3


def test_stderr_value():
    e = run_ensemble(_normal_job, 20_000, 11, threads=1)
    assert e.stderr == pytest.approx(1 / math.sqrt(20_000), rel=0.05)
    assert combined_stderr(e, e) == pytest.approx(math.sqrt(2) * e.stderr)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5000))
@settings(max_examples=40, deadline=None)
def test_pairwise_sum_accuracy(xs):
    x = np.asarray(xs)
    assert pairwise_sum(x) == pytest.approx(math.fsum(xs), rel=1e-12, abs=1e-6)
    assert pairwise_sum(x) == pairwise_sum(x.copy())


def test_mean_stderr_two_pass():
    x = 1e9 + np.array([1.0, 2.0, 3.0, 4.0])
    m, se = mean_stderr(x)
    assert m == 1e9 + 2.5 and se == pytest.approx(math.sqrt(5 / 3 / 4))


def test_default_threads_env(monkeypatch):
    monkeypatch.setenv("SFDEMC_THREADS", "3")
    assert default_threads() == 3


def test_estimate_comparison():
    a = Estimate(1.0, 0.1, 10, 1, 0.5)
    assert a.same_as(Estimate(1.0, 0.1, 10, 1, 9.0))
    assert not a.same_as(Estimate(1.0 + 1e-16 * 2, 0.1, 10, 1))
    assert a.within(1.3) and not a.within(1.5)


def test_convergence_scan_synthetic_first_order():
    def family(dt):
        return lambda seed, ids: 2.0 + dt + 1e-3 * _normal_job(seed, ids)

    scan = convergence_scan(family, [0.5, 0.25, 0.125, 0.0625, 1e-4], 2000, 1, threads=1)
    assert scan.available and scan.slope == pytest.approx(1.0, abs=0.05)
    assert len(scan.rows) == 5


def test_convergence_scan_flat_family():
    scan = convergence_scan(lambda dt: (lambda s, ids: np.ones(ids.size)), [0.1, 0.05, 0.025], 10, 0, threads=1)
    assert not scan.available and "unavailable" in scan.note
    with pytest.raises(ValueError):
        convergence_scan(lambda dt: None, [0.1, 0.05], 10, 0)


def test_loglog_slope():
    assert loglog_slope([1, 2, 4], [1, 4, 16]) == pytest.approx(2.0)
    assert loglog_slope([1, 2], [0, 0]) is None
