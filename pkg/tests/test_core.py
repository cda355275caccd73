from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfdemc.core import NumericalAbort, PathRecord, TimeGrid, build_grid, evaluate_coefficient, segment_at
from sfdemc.models import DelayedBS, GeneralSFDE, Lifted2D, brownian_motion
from sfdemc.solver import euler_solve, simulate


def test_build_grid_exact_divisors():
    g = build_grid(1.0, 2.0, 0.25)
    assert (g.dt, g.n_hist, g.n_fwd) == (0.25, 4, 8)


def test_build_grid_shrinks_to_common_step():
    assert build_grid(1.0, 1.0, 0.3).dt == 0.25


def test_build_grid_delay_not_dividing_target():
    # r/ceil(r/0.1) = 0.1 already divides both 0.7 and 1.0
    g = build_grid(0.7, 1.0, 0.1)
    assert (g.n_hist, g.n_fwd) == (7, 10)
    assert g.dt == pytest.approx(0.1)


def test_build_grid_needs_refinement():
    g = build_grid(0.3, 1.0, 0.25)   # r/2 = 0.15 does not divide 1; 0.1 does
    assert g.n_hist == 3 and g.n_fwd == 10


def test_build_grid_rejects_incommensurable():
    with pytest.raises(ValueError, match="no common step"):
        build_grid(1.0, 2**0.5, 0.1)
    with pytest.raises(ValueError):
        build_grid(-1.0, 1.0, 0.1)


@given(st.integers(1, 20), st.integers(1, 40), st.integers(1, 8), st.floats(0.3, 1.0))
@settings(max_examples=60, deadline=None)
def test_grid_alignment(p, q, den, shrink):
    r, T = p / den, q / den
    g = build_grid(r, T, shrink * r)
    assert g.dt <= shrink * r * (1 + 1e-12)
    assert Fraction(g.n_fwd * p, g.n_hist * den) == Fraction(q, den)
    for t in g.forward_times:
        assert g.index(t - r) == g.index(t) - g.n_hist


def test_index_rejects_non_nodes():
    g = build_grid(1.0, 1.0, 0.25)
    with pytest.raises(ValueError, match="not a node"):
        g.index(0.37)
    assert g.is_node(0.75) and not g.is_node(0.37)


def _const_history_path(value=5.0):
    g = build_grid(1.0, 2.0, 0.25)
    m = GeneralSFDE(1, 1, lambda t, s: np.zeros(s.shape[:-2] + (1,)),
                    lambda t, s: np.zeros(s.shape[:-2] + (1, 1)),
                    lambda t, s, d: np.zeros(np.broadcast_shapes(s.shape, d.shape)[:-2] + (1,)),
                    lambda t, s, d: np.zeros(np.broadcast_shapes(s.shape, d.shape)[:-2] + (1, 1)),
                    eta=np.array([value]))
    return euler_solve(m, None, g, np.zeros((2, g.n_fwd, 1)))


def test_segment_of_constant_history():
    p = _const_history_path()
    assert np.all(segment_at(p, 0.0) == 5.0)
    assert segment_at(p, 0.0).shape == (2, p.grid.n_hist + 1, 1)


def test_segment_at_r_is_first_forward_window():
    g = build_grid(1.0, 2.0, 0.25)
    p = simulate(brownian_motion(), g, 1, np.arange(3))
    assert np.array_equal(segment_at(p, 1.0), p.values[:, g.n_hist : 2 * g.n_hist + 1])


def test_segment_rejects_non_node_and_negative():
    p = _const_history_path()
    with pytest.raises(ValueError):
        segment_at(p, 0.37)
    with pytest.raises(ValueError):
        segment_at(p, -0.5)


def test_adjacent_segments_overlap():
    g = build_grid(1.0, 2.0, 0.25)
    p = simulate(brownian_motion(), g, 1, np.arange(2))
    a, b = segment_at(p, 0.5), segment_at(p, 0.75)
    assert np.array_equal(a[:, 1:], b[:, :-1]) and a.shape[1] - 1 == g.n_hist


def test_evaluate_coefficient_delayed():
    m = DelayedBS(0.2, 100.0)
    seg = np.full((5, 1), 100.0)
    assert evaluate_coefficient(m, "diffusion_1", 0.0, seg) == pytest.approx(20.0)
    m2 = DelayedBS("tanh:0.2,0.1,1", 100.0)
    seg = np.zeros((5, 1))
    seg[0], seg[-1] = 0.0, 50.0
    assert evaluate_coefficient(m2, "diffusion", 0.0, seg) == pytest.approx(10.0)


def test_evaluate_coefficient_lifted():
    m = Lifted2D("tanh:0.2,0.05,100", 100.0)
    seg = np.tile([np.log(80.0), 3.0], (5, 1))
    seg[0, 0] = np.log(120.0)
    a = evaluate_coefficient(m, "diffusion_1", 0.0, seg)
    assert a[0] == pytest.approx(0.2 + 0.05 * np.tanh(1.2)) and a[1] == 0.0
    a0 = evaluate_coefficient(m, "drift", 0.0, seg)
    assert a0[1] == pytest.approx(80.0)


def test_evaluate_coefficient_errors():
    m = DelayedBS(0.2, 100.0)
    with pytest.raises(ValueError, match="dimension"):
        evaluate_coefficient(m, "drift", 0.0, np.zeros((5, 2)))
    with pytest.raises(ValueError):
        evaluate_coefficient(m, "diffusion_2", 0.0, np.zeros((5, 1)))


def test_coefficient_evaluation_is_deterministic():
    m = DelayedBS("tanh:0.2,0.05,100", 100.0)
    seg = np.linspace(50, 150, 12).reshape(-1, 1)
    assert evaluate_coefficient(m, "diffusion_1", 0.0, seg).tobytes() == \
        evaluate_coefficient(m, "diffusion_1", 0.0, seg.copy()).tobytes()


def test_abort_offset_translation():
    e = NumericalAbort("bad", 2, 5).with_offset(np.array([10, 11, 12]))
    assert e.path_index == 12 and e.step == 5 and "path 12" in str(e)


def test_path_record_brownian():
    g = build_grid(1.0, 1.0, 0.25)
    inc = np.arange(4.0).reshape(1, 4, 1)
    p = PathRecord(g, np.zeros((1, g.n_nodes, 1)), inc)
    assert p.brownian()[0, :, 0].tolist() == [0, 0, 1, 3, 6]
    assert isinstance(p.grid, TimeGrid)
