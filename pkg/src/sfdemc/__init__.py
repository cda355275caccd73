"""Malliavin calculus for stochastic functional differential equations on a
uniform grid: simulation, tangent processes, covariance matrices and
Malliavin-weight Delta estimators for a delayed Black-Scholes market."""
from .core import NumericalAbort, PathRecord, TimeGrid, build_grid, evaluate_coefficient, segment_at
from .models import Coefficient, DelayedBS, GeneralSFDE, Lifted2D, brownian_motion, parse_coefficient
from .montecarlo import Estimate, convergence_scan, run_ensemble, run_ensemble_multi
from .payoffs import Payoff, parse_payoff
from .rng import RngStream
from .solver import (AveragedFunctional, average_functional, euler_solve, exact_exponential_solve,
                     girsanov_weight, sample_increments, simulate)

__version__ = "0.1.0"

__all__ = [
    "AveragedFunctional", "Coefficient", "DelayedBS", "Estimate", "GeneralSFDE", "Lifted2D",
    "NumericalAbort", "PathRecord", "Payoff", "RngStream", "TimeGrid", "average_functional",
    "brownian_motion", "build_grid", "convergence_scan", "euler_solve", "evaluate_coefficient",
    "exact_exponential_solve", "girsanov_weight", "parse_coefficient", "parse_payoff", "run_ensemble",
    "run_ensemble_multi", "sample_increments", "segment_at", "simulate",
]
