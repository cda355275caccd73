import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfdemc.config import ConfigError, parse_config
from sfdemc.models import DelayedBS, Lifted2D

BASE = """\
model = delayed_bs
x = 100
a1 = tanh:0.2,0.05,100
r = 1
T = 2
dt = 0.05
n_paths = 1000
"""


def test_defaults_and_aliases():
    cfg = parse_config(BASE)
    assert cfg["seed"] == 1 and cfg["format"] == "csv" and cfg["output.path"] == "-"
    assert cfg["threads"] >= 1
    assert cfg["model.x"] == cfg["x"] == 100.0
    assert isinstance(cfg.model(), DelayedBS) and cfg.grid().n_fwd == 40


def test_dotted_keys_and_comments():
    cfg = parse_config("model.variant = lifted  # two-dimensional\nmodel.x = 90\nmodel.a1 = const:0.3\n"
                       "grid.r = 1\ngrid.T = 1\ngrid.dt = 0.1\nmc.n_paths = 10\n\n# done\n")
    assert isinstance(cfg.model(), Lifted2D) and cfg.model().x == 90.0


@pytest.mark.parametrize("text, line, msg", [
    (BASE + "sigma = 0.2\n", 8, "unknown key"),
    (BASE + "x = 3\n", 8, "duplicate"),
    (BASE + "seed = abc\n", 8, "bad value"),
    (BASE + "t_eval = 0.37\n", 8, "not a forward node"),
    (BASE + "format = xml\n", 8, "bad value"),
    (BASE.replace("n_paths = 1000", "n_paths = 1"), 7, "n_paths"),
    (BASE + "just text\n", 8, "key = value"),
    (BASE.replace("tanh:0.2,0.05,100", "tanh:0.2"), 3, "bad value"),
])
def test_errors_carry_line_numbers(text, line, msg):
    with pytest.raises(ConfigError, match=msg) as ei:
        parse_config(text)
    assert ei.value.line == line and str(ei.value).startswith(f"line {line}:")


def test_missing_keys():
    with pytest.raises(ConfigError, match="grid.dt"):
        parse_config(BASE.replace("dt = 0.05\n", ""))
    with pytest.raises(ConfigError, match="model.x"):
        parse_config(BASE.replace("x = 100\n", ""))
    assert parse_config("model = bm\nr = 1\nT = 1\ndt = 0.1\nn_paths = 5\n").variant == "bm"


def test_model_and_grid_errors():
    with pytest.raises(ConfigError, match="invalid model"):
        parse_config(BASE + "floor = 0.09\n")
    with pytest.raises(ConfigError, match="common step"):
        parse_config(BASE.replace("T = 2", "T = 1.41421356237"))


def test_overrides():
    cfg = parse_config(BASE).with_overrides(seed=9, threads=None, format="json")
    assert cfg["seed"] == 9 and cfg["format"] == "json"


nums = st.floats(0.01, 500, allow_nan=False).map(lambda v: float(f"{v:.6g}"))


@given(x=nums, a=st.floats(0.05, 0.5), b=st.floats(0.0, 0.04), R=st.floats(0, 0.1), seed=st.integers(0, 2**31),
       n=st.integers(2, 10**7), fmt=st.sampled_from(["csv", "json"]), asian=st.booleans(),
       payoffs=st.lists(st.sampled_from(["call:100", "put:95", "digital:100", "identity"]), min_size=1, max_size=3),
       variant=st.sampled_from(["delayed_bs", "lifted"]))
@settings(max_examples=60, deadline=None)
def test_emit_round_trip(x, a, b, R, seed, n, fmt, asian, payoffs, variant):
    text = (f"model = {variant}\nx = {x!r}\na1 = tanh:{a!r},{b!r},100\nR = {R!r}\nr = 1\nT = 2\ndt = 0.05\n"
            f"n_paths = {n}\nseed = {seed}\nformat = {fmt}\nasian = {str(asian).lower()}\n"
            f"payoffs = {','.join(payoffs)}\ntimes = 0.5,1.0,2.0\npoints = 0,1,2;1,1,1\n")
    cfg = parse_config(text)
    again = parse_config(cfg.emit())
    assert again == cfg
    assert again.emit() == cfg.emit()
    assert np.isclose(again["x"], x)
