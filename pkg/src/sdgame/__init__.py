"""Numerical laboratory for two-player zero-sum recursive stochastic differential games."""

from .coefficients import parse_expr
from .corpus import analytic_solution, build_example
from .errors import (CFLError, ConfigError, DomainError, NumericalAbort, RegimeError,
                     SDGameError, ValidationError)
from .problem import (LOWER, UPPER, ControlSet, GridSpec, ProblemSpec, ValueField,
                      validate_problem)
from .solver import cfl_check, cfl_grid, solve

__version__ = "0.1.0"

__all__ = [
    "LOWER", "UPPER", "CFLError", "ConfigError", "ControlSet", "DomainError", "GridSpec",
    "NumericalAbort", "ProblemSpec", "RegimeError", "SDGameError", "ValidationError",
    "ValueField", "analytic_solution", "build_example", "cfl_check", "cfl_grid",
    "parse_expr", "solve", "validate_problem",
]
