"""Series solution of the two-asset time-fractional Black-Scholes equation.

The price solves

    D_t^alpha c = -L c,    c(., 0) = g0,

where L is the spatial Black-Scholes operator, either in log-price
coordinates (u, v) or in raw asset prices (s1, s2). Taking the Sumudu
transform, solving for S[c] and inverting term by term gives

    c(., t) = sum_n g_n t^(n alpha) / Gamma(1 + n alpha),   g_{n+1} = -L g_n,

which is what this module builds symbolically and evaluates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import expr as ex
from .expr import Add, Const, Expr, Mul, Pow, Var
from .specfun import log_gamma, series_weight

LOG = "log"
ASSET = "asset"
SPACE_VARIABLES = {LOG: ("u", "v"), ASSET: ("s1", "s2")}

DEFAULT_TERMS = 25
MAX_TERM_NODES = 20_000
SUP_SAMPLES = 33

Box = tuple[tuple[float, float], tuple[float, float]]


class SeriesGrowthError(RuntimeError):
    """A series term outgrew the node budget."""


@dataclass(frozen=True)
class ModelParams:
    """Market and model parameters. Rates and volatilities are annual,
    ``maturity`` is in years."""

    sigma1: float
    sigma2: float
    r: float
    rho: float
    alpha: float
    w1: float = 1.0
    w2: float = 1.0
    strike: float = 0.0
    maturity: float = 1.0
    space_mode: str = LOG

    def __post_init__(self):
        checks = [
            ("sigma1", self.sigma1 >= 0, "sigma1 >= 0"),
            ("sigma2", self.sigma2 >= 0, "sigma2 >= 0"),
            ("rho", abs(self.rho) <= 1, "|rho| <= 1"),
            ("alpha", 0 < self.alpha <= 1, "0 < alpha <= 1"),
            ("maturity", self.maturity > 0, "maturity > 0"),
            ("strike", self.strike >= 0, "strike >= 0"),
            ("space_mode", self.space_mode in SPACE_VARIABLES, "space_mode in {log, asset}"),
        ]
        for name, ok, rule in checks:
            if not ok:
                raise ValueError(f"{name}: must satisfy {rule}, got {getattr(self, name)!r}")
        for name in ("sigma1", "sigma2", "r", "rho", "alpha", "w1", "w2", "strike", "maturity"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name}: must be finite")

    @property
    def variables(self) -> tuple[str, str]:
        return SPACE_VARIABLES[self.space_mode]

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


def to_log_space(s1, s2, t, p: ModelParams):
    """u = ln s1 - (r - sigma1^2/2) t, v = ln s2 - (r - sigma2^2/2) t."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if np.any(s1 <= 0) or np.any(s2 <= 0):
        raise ValueError("asset prices must be positive for the log-price transform")
    u = np.log(s1) - (p.r - 0.5 * p.sigma1**2) * t
    v = np.log(s2) - (p.r - 0.5 * p.sigma2**2) * t
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def from_log_space(u, v, t, p: ModelParams):
    s1 = np.exp(np.asarray(u, dtype=float) + (p.r - 0.5 * p.sigma1**2) * t)
    s2 = np.exp(np.asarray(v, dtype=float) + (p.r - 0.5 * p.sigma2**2) * t)
    if s1.ndim == 0:
        return float(s1), float(s2)
    return s1, s2


def _check_mode(g: Expr, p: ModelParams) -> None:
    extra = ex.variables(g) - set(p.variables)
    if extra:
        raise ValueError(
            f"expression uses {sorted(extra)} but {p.space_mode} mode works in {list(p.variables)}"
        )
    if ex.contains_max(g):
        raise ValueError("series terms must be max-free; strip the payoff first")


def spatial_operator(g: Expr, p: ModelParams) -> Expr:
    """Apply the Black-Scholes spatial operator L to ``g``.

    log mode:   (s1^2/2) g_uu + (s2^2/2) g_vv + rho s1 s2 g_uv - r g
    asset mode: (s1^2/2) x^2 g_xx + (s2^2/2) y^2 g_yy + rho s1 s2 x y g_xy
                + r x g_x + r y g_y - r g        (x = s1, y = s2)
    with s1, s2 standing for the volatilities sigma1, sigma2.
    """
    _check_mode(g, p)
    a, b = p.variables
    d = ex.differentiate
    terms: list[Expr] = []

    def add(coef: float, *factors: Expr) -> None:
        if coef != 0.0:
            terms.append(Mul((Const(coef), *factors)))

    g_a = d(g, a)
    g_b = d(g, b)
    if p.space_mode == LOG:
        add(0.5 * p.sigma1**2, d(g_a, a))
        add(0.5 * p.sigma2**2, d(g_b, b))
        add(p.rho * p.sigma1 * p.sigma2, d(g_a, b))
    else:
        x, y = Var(a), Var(b)
        add(0.5 * p.sigma1**2, Pow(x, Const(2.0)), d(g_a, a))
        add(0.5 * p.sigma2**2, Pow(y, Const(2.0)), d(g_b, b))
        add(p.rho * p.sigma1 * p.sigma2, x, y, d(g_a, b))
        add(p.r, x, g_a)
        add(p.r, y, g_b)
    add(-p.r, g)
    if not terms:
        return Const(0.0)
    return ex.simplify(terms[0] if len(terms) == 1 else Add(tuple(terms)))


DIRECTIONS = ("series", "diffusive")


def next_term(g_n: Expr, p: ModelParams, direction: str = "series") -> Expr:
    """g_{n+1} = -L g_n, or +L g_n for ``direction="diffusive"``."""
    Lg = spatial_operator(g_n, p)
    return Lg if direction == "diffusive" else ex.simplify(Mul((Const(-1.0), Lg)))


@dataclass(frozen=True)
class SeriesSolution:
    alpha: float
    terms: tuple[Expr, ...]
    space_mode: str
    variables: tuple[str, str]
    box: Box
    maturity: float
    sup_last: float
    tail: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "tail", truncation_estimate(self, self.maturity))

    @property
    def order(self) -> int:
        """Index N of the last included term."""
        return len(self.terms) - 1


def sup_norm(g: Expr, box: Box, names: Sequence[str], samples: int = SUP_SAMPLES) -> float:
    """max |g| over a samples x samples lattice of the box."""
    (a0, a1), (b0, b1) = box
    if not (math.isfinite(a0) and math.isfinite(a1) and math.isfinite(b0) and math.isfinite(b1)):
        raise ValueError("sup-norm box must be bounded")
    A, B = np.meshgrid(np.linspace(a0, a1, samples), np.linspace(b0, b1, samples), indexing="ij")
    values = ex.compile_expr(g, names)(**{names[0]: A, names[1]: B})
    return float(np.max(np.abs(values)))


def build_series(
    g0: Expr,
    p: ModelParams,
    N: int = DEFAULT_TERMS,
    box: Optional[Box] = None,
    *,
    source: Optional[Expr] = None,
    max_nodes: int = MAX_TERM_NODES,
    direction: str = "series",
) -> SeriesSolution:
    """Terms g_0 ... g_N of the series for payoff ``g0``.

    ``box`` is the region (in solution coordinates) over which the tail
    bound sup|g_N| T^(N alpha)/Gamma(1 + N alpha) is sampled; it defaults to
    [-1, 1]^2 in log mode and [0.5, 2]^2 in asset mode.

    ``source`` is a time-independent forcing f added to the first step only
    (g_1 = f - L g_0). It is an unvalidated extension point; the pricing
    scenarios never set it.

    ``direction="diffusive"`` builds the series of D^alpha c = +L c, the
    well-posed companion problem used to validate the finite-difference
    oracle.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    g0 = ex.simplify(g0)
    _check_mode(g0, p)
    if box is None:
        box = ((-1.0, 1.0), (-1.0, 1.0)) if p.space_mode == LOG else ((0.5, 2.0), (0.5, 2.0))
    terms = [g0]
    for n in range(N):
        g = next_term(terms[-1], p, direction)
        if n == 0 and source is not None:
            _check_mode(source, p)
            g = ex.simplify(Add((source, g)))
        size = ex.node_count(g)
        if size > max_nodes:
            raise SeriesGrowthError(
                f"term g_{n + 1} has {size} nodes after simplification (limit {max_nodes}); "
                "reduce N or simplify the payoff"
            )
        terms.append(g)
    sup_last = sup_norm(terms[-1], box, p.variables)
    return SeriesSolution(p.alpha, tuple(terms), p.space_mode, p.variables, box, p.maturity, sup_last)


def _compensated_sum(parts: Sequence[np.ndarray]) -> np.ndarray:
    # Neumaier summation, elementwise
    total = np.zeros_like(parts[0])
    comp = np.zeros_like(parts[0])
    for x in parts:
        t = total + x
        big = np.abs(total) >= np.abs(x)
        comp += np.where(big, (total - t) + x, (x - t) + total)
        total = t
    return total + comp


def eval_series(s: SeriesSolution, point: Mapping[str, object], t):
    """sum_n g_n(point) t^(n alpha) / Gamma(1 + n alpha).

    ``point`` maps the solution variables to scalars or arrays; ``t`` may be
    a scalar or an array broadcastable against them.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
        raise ValueError(f"t must be finite and non-negative, got {t!r}")
    env = {name: np.asarray(point[name], dtype=float) for name in s.variables}
    parts = []
    for n, g in enumerate(s.terms):
        if t_arr.ndim == 0:
            w = series_weight(n, s.alpha, float(t_arr))
            if w == 0.0 and n > 0:
                continue
        else:
            w = _weights(n, s.alpha, t_arr)
        parts.append(w * ex.compile_expr(g, s.variables)(**env))
    out = _compensated_sum(parts)
    if not np.all(np.isfinite(out)):
        raise ex.DomainError("series value is not finite")
    return float(out) if out.ndim == 0 else out


def _weights(n: int, alpha: float, t: np.ndarray) -> np.ndarray:
    # series_weight over an array of times
    if n == 0:
        return np.ones_like(t)
    positive = t > 0
    safe = np.where(positive, t, 1.0)
    log_w = n * alpha * np.log(safe) - (math.lgamma(n + 1.0) if alpha == 1.0 else log_gamma(1.0 + n * alpha))
    return np.where(positive, np.exp(log_w), 0.0)


def truncation_estimate(s: SeriesSolution, t: float) -> float:
    """sup_box |g_N| t^(N alpha) / Gamma(1 + N alpha): the size of the last
    included term, reported as the truncation bound."""
    if t == 0.0:
        return 0.0
    return s.sup_last * series_weight(s.order, s.alpha, t)
