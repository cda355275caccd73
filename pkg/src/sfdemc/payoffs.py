"""Piecewise payoffs ``sum_k alpha_k f_k(y) 1_[a_k, b_k)(y)`` with linear-growth pieces."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF = math.inf


@dataclass(frozen=True)
class Term:
    """``alpha * f(y) * 1_[lo, hi)(y)`` with ``f(y) = y - K`` (``kind="linear"``)
    or ``f(y) = 1`` (``kind="one"``)."""

    alpha: float
    kind: str
    K: float = 0.0
    lo: float = -INF
    hi: float = INF

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        f = y - self.K if self.kind == "linear" else np.ones_like(y)
        return self.alpha * f * ((y >= self.lo) & (y < self.hi))

    @property
    def jumps(self) -> bool:
        """True when the term is discontinuous at a finite endpoint."""
        for e in (self.lo, self.hi):
            if math.isfinite(e) and (self.kind == "one" or e != self.K):
                return True
        return False


@dataclass(frozen=True)
class Payoff:
    terms: tuple[Term, ...]
    name: str = "payoff"

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for t in self.terms:
            out = out + t(y)
        return out

    @property
    def discontinuous(self) -> bool:
        return any(t.jumps for t in self.terms)

    @property
    def single(self) -> tuple[str, float] | None:
        """``(kind, K)`` when this is one built-in payoff, else None."""
        kind, _, k = self.name.partition(":")
        if kind in ("call", "put", "digital") and "+" not in self.name:
            return kind, float(k)
        if kind in ("identity", "const"):
            return kind, float(k) if k else 0.0
        return None

    def __add__(self, other: "Payoff") -> "Payoff":
        return Payoff(self.terms + other.terms, f"{self.name}+{other.name}")


def call(K: float) -> Payoff:
    return Payoff((Term(1.0, "linear", K, K, INF),), f"call:{K:g}")


def put(K: float) -> Payoff:
    return Payoff((Term(-1.0, "linear", K, -INF, K),), f"put:{K:g}")


def digital(K: float) -> Payoff:
    """``1`` on ``[K, inf)``."""
    return Payoff((Term(1.0, "one", 0.0, K, INF),), f"digital:{K:g}")


def identity() -> Payoff:
    return Payoff((Term(1.0, "linear"),), "identity")


def constant(c: float) -> Payoff:
    return Payoff((Term(float(c), "one"),), f"const:{c:g}")


_BUILTIN = {"call": call, "put": put, "digital": digital, "const": constant}


def parse_payoff(text: str) -> Payoff:
    """Parse ``call:K``, ``put:K``, ``digital:K``, ``const:c`` or ``identity``;
    ``+`` joins several.

    >>> parse_payoff("call:100")(np.array([90.0, 110.0]))
    array([ 0., 10.])
    """
    parts = [p.strip() for p in text.split("+")]
    out = None
    for p in parts:
        kind, _, arg = p.partition(":")
        kind = kind.strip()
        if kind == "identity" and not arg:
            po = identity()
        elif kind in _BUILTIN:
            try:
                po = _BUILTIN[kind](float(arg))
            except ValueError as exc:
                raise ValueError(f"payoff {p!r} needs a numeric argument") from exc
        else:
            raise ValueError(f"unknown payoff {p!r} (expected call:K, put:K, digital:K, const:c or identity)")
        out = po if out is None else out + po
    return out
