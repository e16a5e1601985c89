"""Numerical Sumudu transform, Caputo derivative and Riemann-Liouville
integral, plus the identity suite that ties them together.

The series solver never calls these at run time; they exist to check, by
quadrature, the transform rules from which the series recursion is derived:

    S[D^a f](w) = w^-a (S[f](w) - f(0))
    S[I^a g](w) = w^a S[g](w)
    S[t^n](w)   = n! w^n

The transform variable is called ``w`` throughout, since ``u`` is already
the log-price coordinate.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

from scipy.integrate import IntegrationWarning, quad

from .specfun import gamma


class QuadratureError(ArithmeticError):
    pass


class GrowthBoundError(ValueError):
    pass


@dataclass(frozen=True)
class SampledFunction:
    """A time profile f(t), t >= 0, with |f(t)| <= bound * exp(rate * t)."""

    func: Callable[[float], float]
    bound: float = 1.0
    rate: float = 0.0
    derivative: Optional[Callable[[float], float]] = None
    name: str = "f"

    def __call__(self, t: float) -> float:
        return self.func(t)

    def deriv(self, t: float) -> float:
        if self.derivative is not None:
            return self.derivative(t)
        h = 1e-5 * max(1.0, abs(t))
        if t - h < 0.0:
            return (-3 * self.func(t) + 4 * self.func(t + h) - self.func(t + 2 * h)) / (2 * h)
        return (self.func(t + h) - self.func(t - h)) / (2 * h)


def _integrate(g: Callable[[float], float], a: float, b: float, tol: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, err = quad(g, a, b, epsabs=tol, epsrel=tol, limit=200)
        except IntegrationWarning as w:
            raise QuadratureError(str(w)) from None
    if not math.isfinite(value) or err > 100 * max(tol, tol * abs(value)):
        raise QuadratureError(f"quadrature did not converge (error estimate {err:.3g})")
    return value


def sumudu_transform(f: SampledFunction, w: float, *, tol: float = 1e-11) -> float:
    """S[f](w) = int_0^inf f(w t) e^-t dt.

    Integrates adaptively on [0, 40] and extends the range until the growth
    bound puts the discarded tail below 1e-12.
    """
    if not w > 0.0:
        raise ValueError(f"Sumudu variable must be positive, got {w!r}")
    decay = 1.0 - f.rate * w
    if decay <= 0.0:
        raise GrowthBoundError(f"growth rate {f.rate} times w={w} must be below 1")
    upper = 40.0
    tail = f.bound * math.exp(-decay * upper) / decay
    if tail > 1e-12:
        upper = math.log(f.bound / (decay * 1e-12)) / decay
    return _integrate(lambda t: f(w * t) * math.exp(-t), 0.0, upper, tol)


def caputo_derivative(f: SampledFunction, alpha: float, t: float, *, tol: float = 1e-11) -> float:
    """Caputo derivative of order 0 < alpha < 1 at time t > 0.

    The kernel singularity is removed by tau = t (1 - s^(1/(1-alpha))), which
    turns the integral into t^(1-alpha)/(1-alpha) * int_0^1 f'(tau(s)) ds.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t!r}")
    p = 1.0 / (1.0 - alpha)
    integral = _integrate(lambda s: f.deriv(t * (1.0 - s**p)), 0.0, 1.0, tol)
    return t ** (1.0 - alpha) * p * integral / gamma(1.0 - alpha)


def riemann_liouville_integral(g: SampledFunction, alpha: float, t: float, *, tol: float = 1e-11) -> float:
    """I^alpha g(t) = 1/Gamma(alpha) int_0^t (t - tau)^(alpha - 1) g(tau) dtau."""
    if not alpha > 0.0:
        raise ValueError(f"alpha must be positive, got {alpha!r}")
    if t < 0.0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    if t == 0.0:
        return 0.0
    q = 1.0 / alpha
    integral = _integrate(lambda s: g(t * (1.0 - s**q)), 0.0, 1.0, tol)
    return t**alpha * integral / gamma(1.0 + alpha)


def caputo_of(f: SampledFunction, alpha: float) -> SampledFunction:
    """D^alpha f as a sampled function (same growth bound, up to a constant)."""

    def d(t: float) -> float:
        return 0.0 if t == 0.0 else caputo_derivative(f, alpha, t, tol=1e-12)

    return SampledFunction(d, bound=10.0 * f.bound, rate=f.rate, name=f"D^{alpha} {f.name}")


def rl_integral_of(g: SampledFunction, alpha: float) -> SampledFunction:
    def i(t: float) -> float:
        return riemann_liouville_integral(g, alpha, t, tol=1e-12)

    return SampledFunction(i, bound=10.0 * g.bound, rate=g.rate + 1.0 / 40.0, name=f"I^{alpha} {g.name}")


# ---------------------------------------------------------------------------
# identity suite

ALPHAS = (0.3, 0.5, 0.8)
WS = (0.1, 0.25, 0.5)


def power(n: int) -> SampledFunction:
    if n == 0:
        return SampledFunction(lambda t: 1.0, derivative=lambda t: 0.0, name="1")
    return SampledFunction(
        lambda t: t**n,
        bound=math.factorial(n),
        rate=1.0,
        derivative=lambda t: n * t ** (n - 1),
        name=f"t^{n}",
    )


def exponential(rate: float) -> SampledFunction:
    return SampledFunction(
        lambda t: math.exp(rate * t),
        rate=rate,
        derivative=lambda t: rate * math.exp(rate * t),
        name=f"exp({rate}t)",
    )


@dataclass(frozen=True)
class IdentityCheck:
    identity: str
    function: str
    alpha: Optional[float]
    w: float
    lhs: float
    rhs: float
    tolerance: float

    @property
    def deviation(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


def identity_suite(tolerance: float = 1e-5) -> list[IdentityCheck]:
    """Every transform identity over the standard function/alpha/w sets."""
    checks = []
    for n in range(4):
        for w in WS:
            lhs = sumudu_transform(power(n), w)
            checks.append(IdentityCheck("S[t^n] = n! w^n", f"t^{n}", None, w, lhs, math.factorial(n) * w**n, tolerance))
    for f in (power(1), power(2), exponential(0.3)):
        for alpha in ALPHAS:
            df = caputo_of(f, alpha)
            for w in WS:
                lhs = sumudu_transform(df, w, tol=1e-9)
                rhs = w**-alpha * (sumudu_transform(f, w) - f(0.0))
                checks.append(IdentityCheck("S[D^a f] = w^-a (S[f] - f(0))", f.name, alpha, w, lhs, rhs, tolerance))
    for n in range(4):
        g = power(n)
        for alpha in ALPHAS:
            ig = rl_integral_of(g, alpha)
            for w in WS:
                lhs = sumudu_transform(ig, w, tol=1e-9)
                rhs = w**alpha * sumudu_transform(g, w)
                checks.append(IdentityCheck("S[I^a g] = w^a S[g]", g.name, alpha, w, lhs, rhs, tolerance))
    return checks


def format_checks(checks: list[IdentityCheck]) -> str:
    lines = [f"{'identity':<32} {'function':<12} {'alpha':>5} {'w':>5} {'deviation':>10}  status"]
    for c in checks:
        alpha = "-" if c.alpha is None else f"{c.alpha:g}"
        status = "PASS" if c.passed else "FAIL"
        lines.append(f"{c.identity:<32} {c.function:<12} {alpha:>5} {c.w:>5g} {c.deviation:>10.2e}  {status}")
    n_pass = sum(c.passed for c in checks)
    lines.append(f"{n_pass}/{len(checks)} checks within tolerance")
    return "\n".join(lines)


if __name__ == "__main__":  # pragma: no cover
    start = time.perf_counter()
    print(format_checks(identity_suite()))
    print(f"{time.perf_counter() - start:.2f} s")
