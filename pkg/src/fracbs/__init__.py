"""Two-asset time-fractional Black-Scholes pricing by Sumudu series."""

from .expr import (
    DomainError,
    EvaluationError,
    Expr,
    ParseError,
    compile_expr,
    differentiate,
    eval_expr,
    parse_expr,
    simplify,
    strip_max,
    to_text,
)
from .oracle import GridSpec, OracleError, l1_weights, solve_fd
from .pricing import PriceTable, ReconciliationReport, Scenario, load_builtin, price_grid, reconcile
from .solver import ModelParams, SeriesGrowthError, SeriesSolution, build_series, eval_series, spatial_operator
from .specfun import gamma, mittag_leffler
from .sumudu import caputo_derivative, identity_suite, riemann_liouville_integral, sumudu_transform

__version__ = "0.1.0"

__all__ = [
    "DomainError", "EvaluationError", "Expr", "GridSpec", "ModelParams", "OracleError", "ParseError",
    "PriceTable", "ReconciliationReport", "Scenario", "SeriesGrowthError", "SeriesSolution",
    "build_series", "caputo_derivative", "compile_expr", "differentiate", "eval_expr", "eval_series",
    "gamma", "identity_suite", "l1_weights", "load_builtin", "mittag_leffler", "parse_expr", "price_grid",
    "reconcile", "riemann_liouville_integral", "simplify", "solve_fd", "spatial_operator", "strip_max",
    "sumudu_transform", "to_text",
]
