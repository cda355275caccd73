"""``key = value`` run configuration with dotted sections.

Lines are ``key = value``; ``#`` starts a comment.  Keys are canonical
dotted names (``model.x``) or their unambiguous leaf (``x``).  Lists use
commas, and lists of points separate points with ``;``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

from .core import TimeGrid, build_grid
from .models import DelayedBS, Lifted2D, brownian_motion, parse_coefficient
from .payoffs import parse_payoff

VARIANTS = ("delayed_bs", "lifted", "bm")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _floats(s):
    return tuple(float(v) for v in s.split(",") if v.strip())


def _strs(s):
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _points(s):
    return tuple(_floats(p) for p in s.split(";") if p.strip())


def _variant(s):
    s = s.strip()
    if s not in VARIANTS:
        raise ValueError(f"unknown model {s!r} (expected one of {', '.join(VARIANTS)})")
    return s


def _coefficient(s):
    return parse_coefficient(s).text


def _payoffs(s):
    out = _strs(s)
    for p in out:
        parse_payoff(p)
    return out


def _choice(*opts):
    def conv(s):
        s = s.strip()
        if s not in opts:
            raise ValueError(f"{s!r} is not one of {', '.join(opts)}")
        return s
    return conv


_METHOD_NAMES = ("malliavin", "malliavin-general", "malliavin-smalltime", "malliavin_general",
                 "malliavin_smalltime", "finite-difference", "finite_difference", "fd",
                 "closed-form", "closed_form")


def _methods(s):
    out = _strs(s)
    for m in out:
        if m not in _METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}")
    return out


def _fmt_float(v):
    return repr(float(v))


def _fmt_list(v):
    return ",".join(_fmt_float(x) for x in v)


def _fmt_strs(v):
    return ",".join(v)


def _fmt_points(v):
    return ";".join(_fmt_list(p) for p in v)


def _fmt_plain(v):
    return str(v)


def _fmt_bool(v):
    return "true" if v else "false"


# canonical key -> (parser, formatter)
SCHEMA = {
    "model.variant": (_variant, _fmt_plain),
    "model.x": (_float, _fmt_float),
    "model.a1": (_coefficient, _fmt_plain),
    "model.a0": (_coefficient, _fmt_plain),
    "model.R": (_float, _fmt_float),
    "model.floor": (_float, _fmt_float),
    "model.floor_range": (_floats, _fmt_list),
    "model.dim": (_int, _fmt_plain),
    "model.ytilde": (_float, _fmt_float),
    "grid.r": (_float, _fmt_float),
    "grid.T": (_float, _fmt_float),
    "grid.dt": (_float, _fmt_float),
    "mc.n_paths": (_int, _fmt_plain),
    "mc.seed": (_int, _fmt_plain),
    "mc.threads": (_int, _fmt_plain),
    "output.format": (_choice("csv", "json"), _fmt_plain),
    "output.path": (str.strip, _fmt_plain),
    "experiment.t_eval": (_float, _fmt_float),
    "experiment.times": (_floats, _fmt_list),
    "experiment.payoffs": (_payoffs, _fmt_strs),
    "experiment.methods": (_methods, _fmt_strs),
    "experiment.points": (_points, _fmt_points),
    "experiment.asian": (_bool, _fmt_bool),
    "experiment.h": (_float, _fmt_float),
    "experiment.scheme": (_choice("exact", "euler"), _fmt_plain),
    "experiment.research": (_bool, _fmt_bool),
    "experiment.criteria": (lambda s: tuple(_int(v) for v in _strs(s)), lambda v: ",".join(map(str, v))),
}

ALIASES = {"model": "model.variant"}
for _k in SCHEMA:
    _leaf = _k.split(".", 1)[1]
    if _leaf != "variant":
        ALIASES[_leaf] = _k

DEFAULTS = {
    "model.a0": "const:0.0",
    "model.R": 0.0,
    "model.floor": 0.0,
    "model.floor_range": (1e-8, 1e4),
    "model.dim": 1,
    "model.ytilde": 0.0,
    "mc.seed": 1,
    "output.format": "csv",
    "output.path": "-",
}

REQUIRED = ("model.variant", "grid.r", "grid.T", "grid.dt", "mc.n_paths")
NEEDS_PRICE = ("model.x", "model.a1")
TIME_KEYS = ("experiment.t_eval", "experiment.times")


@dataclass
class RunConfig:
    """Validated configuration with defaults filled in."""

    values: dict
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def __getitem__(self, key):
        return self.values[ALIASES.get(key, key)]

    def get(self, key, default=None):
        return self.values.get(ALIASES.get(key, key), default)

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    @property
    def variant(self) -> str:
        return self.values["model.variant"]

    def grid(self) -> TimeGrid:
        v = self.values
        return build_grid(v["grid.r"], v["grid.T"], v["grid.dt"])

    def model(self):
        v = self.values
        if self.variant == "bm":
            return brownian_motion(v["model.dim"])
        if self.variant == "delayed_bs":
            return DelayedBS(v["model.a1"], v["model.x"], v["model.R"], v["model.a0"],
                             v["model.floor"], tuple(v["model.floor_range"]))
        return Lifted2D(v["model.a1"], v["model.x"], v["model.ytilde"])

    def emit(self) -> str:
        """Canonical text that parses back to an equal configuration."""
        return "".join(f"{k} = {SCHEMA[k][1](self.values[k])}\n" for k in SCHEMA if k in self.values)

    def with_overrides(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                vals[ALIASES.get(k, k)] = v
        return RunConfig(vals, self.lines)


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text.

    >>> cfg = parse_config("model = bm\\nr = 1\\nT = 1\\ndt = 0.25\\nn_paths = 10\\n")
    >>> cfg["seed"], cfg["format"]
    (1, 'csv')
    """
    values, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", no)
        canon = key if key in SCHEMA else ALIASES.get(key)
        if canon is None:
            raise ConfigError(f"unknown key {key!r}", no)
        if canon in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[canon]})", no)
        try:
            values[canon] = SCHEMA[canon][0](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", no) from None
        lines[canon] = no
    for k in REQUIRED:
        if k not in values:
            raise ConfigError(f"missing required key {k!r}")
    if values["model.variant"] in ("delayed_bs", "lifted"):
        for k in NEEDS_PRICE:
            if k not in values:
                raise ConfigError(f"missing required key {k!r} for model {values['model.variant']}")
    for k, v in DEFAULTS.items():
        values.setdefault(k, v)
    values.setdefault("mc.threads", os.cpu_count() or 1)
    cfg = RunConfig(values, lines)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    v, ln = cfg.values, cfg.lines
    try:
        grid = cfg.grid()
    except ValueError as exc:
        raise ConfigError(str(exc), ln.get("grid.dt")) from None
    try:
        cfg.model()
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}", ln.get("model.variant")) from None
    for k in TIME_KEYS:
        if k not in v:
            continue
        ts = v[k] if isinstance(v[k], tuple) else (v[k],)
        for t in ts:
            if not grid.is_node(t) or t < 0:
                raise ConfigError(f"{k.split('.')[1]}={t!r} is not a forward node of the grid (dt={grid.dt!r})",
                                  ln.get(k))
    if v["mc.n_paths"] < 2:
        raise ConfigError("n_paths must be >= 2", ln.get("mc.n_paths"))
    if v["mc.threads"] < 1:
        raise ConfigError("threads must be >= 1", ln.get("mc.threads"))
    if len(v["model.floor_range"]) != 2:
        raise ConfigError("floor_range takes two numbers lo,hi", ln.get("model.floor_range"))
