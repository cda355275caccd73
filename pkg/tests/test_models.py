import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfdemc.models import DelayedBS, Lifted2D, brownian_motion, parse_coefficient

COEFS = st.sampled_from(["const:0.3", "tanh:0.2,0.05,100", "tanh:0.3,-0.1,20", "affine_clip:0.1,0.002,0.05,0.5"])


def test_parse_coefficient_forms():
    assert parse_coefficient("const:0.3")(np.array([1.0, 2.0])).tolist() == [0.3, 0.3]
    assert float(parse_coefficient("tanh:0.2,0.05,100")(100.0)) == pytest.approx(0.2 + 0.05 * np.tanh(1.0))
    c = parse_coefficient("affine_clip:0,1,0.1,0.5")
    assert c(np.array([0.0, 0.3, 9.0])).tolist() == [0.1, 0.3, 0.5]


@pytest.mark.parametrize("bad", ["foo:1", "tanh:1,2", "tanh:1,2,0", "affine_clip:0,1,0.5,0.1", "const:x"])
def test_parse_coefficient_rejects(bad):
    with pytest.raises(ValueError):
        parse_coefficient(bad)


def test_coefficient_text_round_trip():
    c = parse_coefficient("tanh:0.2,0.05,100")
    assert parse_coefficient(c.text) == c


@given(COEFS, st.floats(1.0, 300.0))
@settings(max_examples=60, deadline=None)
def test_coefficient_derivatives_match_differences(text, y):
    c = parse_coefficient(text)
    h = 1e-4 * max(1.0, y)
    fd1 = (c(y + h) - c(y - h)) / (2 * h)
    fd2 = (c.deriv(y + h) - c.deriv(y - h)) / (2 * h)
    if text.startswith("affine_clip") and min(abs(0.1 + 0.002 * y - 0.05), abs(0.1 + 0.002 * y - 0.5)) < 1e-3:
        return  # kink of the clip
    assert c.deriv(y) == pytest.approx(fd1, abs=1e-8)
    assert c.deriv2(y) == pytest.approx(fd2, abs=1e-7)


def test_delayed_model_validation():
    with pytest.raises(ValueError, match="positive"):
        DelayedBS(0.2, -1.0)
    with pytest.raises(ValueError):
        DelayedBS(0.2, 100.0, R=-0.1)
    with pytest.raises(ValueError, match="floor"):
        DelayedBS("tanh:0.2,0.05,100", 100.0, floor=0.21**2)
    m = DelayedBS("tanh:0.2,0.05,100", 100.0, floor=0.15**2)
    assert m.sigma_floor == pytest.approx(0.15)


def test_with_x_keeps_coefficients():
    m = DelayedBS("tanh:0.2,0.05,100", 100.0, R=0.03).with_x(101.0)
    assert m.x == 101.0 and m.R == 0.03 and m.a1.text == "tanh:0.2,0.05,100.0"
    assert Lifted2D("const:0.2", 100.0).with_x(90.0).xtilde == pytest.approx(np.log(90.0))


@pytest.mark.parametrize("model", [DelayedBS("tanh:0.2,0.05,100", 100.0, a0="tanh:0.01,0.02,50"),
                                   Lifted2D("tanh:0.2,0.05,100", 100.0), brownian_motion(2)])
def test_gradients_are_directional_derivatives(model, rng):
    n = 6
    seg = rng.uniform(3.0, 5.0, (4, n + 1, model.d))
    if getattr(model, "variant", None) == "DelayedBS":
        seg = np.exp(seg)
    dseg = rng.normal(size=seg.shape)
    eps = 1e-6
    fd_b = (model.drift(0.0, seg + eps * dseg) - model.drift(0.0, seg - eps * dseg)) / (2 * eps)
    fd_s = (model.diffusion(0.0, seg + eps * dseg) - model.diffusion(0.0, seg - eps * dseg)) / (2 * eps)
    np.testing.assert_allclose(model.drift_grad(0.0, seg, dseg), fd_b, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(model.diffusion_grad(0.0, seg, dseg), fd_s, rtol=1e-6, atol=1e-8)


def test_lifted_coefficients():
    m = Lifted2D("tanh:0.2,0.05,100", 100.0, ytilde=2.0)
    h = m.history(4)
    assert h.shape == (5, 2) and np.allclose(h[:, 0], np.log(100.0)) and np.all(h[:, 1] == 2.0)
    assert float(m.a1t(np.log(100.0))) == pytest.approx(0.2 + 0.05 * np.tanh(1.0))
