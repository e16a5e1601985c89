"""Payoff expression trees: parsing, printing, evaluation, symbolic
differentiation and simplification.

Trees are immutable frozen dataclasses, so they hash, compare structurally and
can be shared between threads. Variables are treated as positive reals when
simplifying (``(x^a)^b -> x^(a*b)``), which is the setting of asset prices and
log-prices alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping

import numpy as np

VARIABLES = frozenset({"s1", "s2", "u", "v", "x", "y"})
FUNCTIONS = {"exp": 1, "ln": 1, "sin": 1, "cos": 1, "max": 2}
MAX_SOURCE_LENGTH = 64 * 1024

# positive integer powers of sums up to this order are multiplied out
_EXPAND_LIMIT = 12
_EPS = np.finfo(float).eps


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError, ValueError):
    """Malformed expression text.

    ``kind`` is one of ``"syntax"``, ``"unknown-identifier"`` or ``"arity"``;
    ``position`` is a 0-based character offset into the source.
    """

    def __init__(self, message: str, position: int, kind: str = "syntax"):
        super().__init__(f"{message} (at position {position})")
        self.position = position
        self.kind = kind


class EvaluationError(ExprError, ArithmeticError):
    pass


class UnboundVariableError(EvaluationError):
    pass


class DomainError(EvaluationError):
    """ln of a non-positive number, division by zero, overflow and the like."""


class DifferentiationError(ExprError, ValueError):
    pass


# ---------------------------------------------------------------------------
# node types


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return Add((self, _lift(other)))

    def __radd__(self, other):
        return Add((_lift(other), self))

    def __sub__(self, other):
        return Add((self, negate(_lift(other))))

    def __rsub__(self, other):
        return Add((_lift(other), negate(self)))

    def __mul__(self, other):
        return Mul((self, _lift(other)))

    def __rmul__(self, other):
        return Mul((_lift(other), self))

    def __truediv__(self, other):
        return Div(self, _lift(other))

    def __rtruediv__(self, other):
        return Div(_lift(other), self)

    def __pow__(self, other):
        return Pow(self, _lift(other))

    def __neg__(self):
        return negate(self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def __post_init__(self):
        value = float(self.value)
        if not math.isfinite(value):
            raise ValueError(f"constants must be finite, got {value!r}")
        # normalises -0.0
        object.__setattr__(self, "value", value + 0.0)


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}")


@dataclass(frozen=True, slots=True)
class Add(Expr):
    terms: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.terms) < 2:
            raise ValueError("Add needs at least two terms")


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    factors: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.factors) < 2:
            raise ValueError("Mul needs at least two factors")


@dataclass(frozen=True, slots=True)
class Div(Expr):
    num: Expr
    den: Expr


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True, slots=True)
class Func(Expr):
    name: str
    args: tuple[Expr, ...]

    def __post_init__(self):
        arity = FUNCTIONS.get(self.name)
        if arity is None:
            raise ValueError(f"unknown function {self.name!r}")
        if len(self.args) != arity:
            raise ValueError(f"{self.name} takes {arity} argument(s), got {len(self.args)}")


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


def exp(a) -> Func:
    return Func("exp", (_lift(a),))


def ln(a) -> Func:
    return Func("ln", (_lift(a),))


def sin(a) -> Func:
    return Func("sin", (_lift(a),))


def cos(a) -> Func:
    return Func("cos", (_lift(a),))


def maximum(a, b) -> Func:
    return Func("max", (_lift(a), _lift(b)))


def negate(e: Expr) -> Expr:
    """Unary minus as the parser builds it (folds into a leading constant)."""
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        return Mul((Const(-e.factors[0].value),) + e.factors[1:])
    if isinstance(e, Div):
        return Div(negate(e.num), e.den)
    return Mul((Const(-1.0), e))


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Add):
        return e.terms
    if isinstance(e, Mul):
        return e.factors
    if isinstance(e, Div):
        return (e.num, e.den)
    if isinstance(e, Pow):
        return (e.base, e.exponent)
    if isinstance(e, Func):
        return e.args
    return ()


def node_count(e: Expr) -> int:
    return 1 + sum(node_count(c) for c in children(e))


@lru_cache(maxsize=65536)
def variables(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset({e.name})
    out: frozenset[str] = frozenset()
    for c in children(e):
        out |= variables(c)
    return out


def contains_max(e: Expr) -> bool:
    if isinstance(e, Func) and e.name == "max":
        return True
    return any(contains_max(c) for c in children(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (e.g. rename ``x`` to ``s1``)."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Add):
        return Add(tuple(substitute(t, mapping) for t in e.terms))
    if isinstance(e, Mul):
        return Mul(tuple(substitute(f, mapping) for f in e.factors))
    if isinstance(e, Div):
        return Div(substitute(e.num, mapping), substitute(e.den, mapping))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, mapping), substitute(e.exponent, mapping))
    if isinstance(e, Func):
        return Func(e.name, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


def rename(e: Expr, names: Mapping[str, str]) -> Expr:
    return substitute(e, {old: Var(new) for old, new in names.items()})


def strip_max(e: Expr) -> Expr:
    """Replace every ``max(a, c)`` with constant ``c`` by its smooth branch ``a``."""
    if isinstance(e, Func) and e.name == "max":
        a, b = e.args
        if isinstance(b, Const):
            return strip_max(a)
        if isinstance(a, Const):
            return strip_max(b)
        raise ValueError("max() with two non-constant branches has no single smooth branch")
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Add):
        return Add(tuple(strip_max(t) for t in e.terms))
    if isinstance(e, Mul):
        return Mul(tuple(strip_max(f) for f in e.factors))
    if isinstance(e, Div):
        return Div(strip_max(e.num), strip_max(e.den))
    if isinstance(e, Pow):
        return Pow(strip_max(e.base), strip_max(e.exponent))
    return Func(e.name, tuple(strip_max(a) for a in e.args))


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def expect(self, op: str) -> _Token:
        if not self.at_op(op):
            found = self.tok.text or "end of input"
            raise ParseError(f"expected {op!r}, found {found!r}", self.tok.pos)
        return self.advance()

    def starts_operand(self) -> bool:
        tok = self.tok
        return tok.kind in ("number", "ident") or (tok.kind == "op" and tok.text in "(-")

    def operand_after(self, op: _Token) -> None:
        if not self.starts_operand():
            raise ParseError(f"dangling {op.text!r} has no right operand", op.pos)

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.at_op("+", "-"):
            op = self.advance()
            self.operand_after(op)
            t = self.term()
            terms.append(negate(t) if op.text == "-" else t)
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self) -> Expr:
        factors = [self.unary()]
        while self.at_op("*", "/"):
            op = self.advance()
            self.operand_after(op)
            rhs = self.unary()
            if op.text == "*":
                factors.append(rhs)
            else:
                lhs = factors[0] if len(factors) == 1 else Mul(tuple(factors))
                factors = [Div(lhs, rhs)]
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))

    def unary(self) -> Expr:
        if self.at_op("-"):
            op = self.advance()
            self.operand_after(op)
            return negate(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.at_op("^"):
            op = self.advance()
            if not (self.tok.kind in ("number", "ident") or self.at_op("(")):
                raise ParseError("exponent must be a number, name or parenthesised expression", op.pos)
            exponent = self.atom()
            if self.at_op("^"):
                raise ParseError("chained '^' needs parentheses", self.tok.pos)
            return Pow(base, exponent)
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in FUNCTIONS:
                if not self.at_op("("):
                    raise ParseError(f"function {name!r} must be called with '('", tok.pos)
                self.advance()
                args = [self.expr()]
                while self.at_op(","):
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[name]:
                    raise ParseError(
                        f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", tok.pos, "arity"
                    )
                return Func(name, tuple(args))
            if name == "pi":
                return Const(math.pi)
            if name in VARIABLES:
                return Var(name)
            raise ParseError(f"unknown identifier {name!r}", tok.pos, "unknown-identifier")
        if self.at_op("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise ParseError(f"unexpected {found!r}", tok.pos)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Precedence from tightest: ``^`` (non-associative), unary minus, ``* /``
    (left-associative), ``+ -``. ``a - b`` is stored as ``Add(a, -b)`` with
    the minus folded into a leading constant of ``b`` where possible, so
    ``"e - 80"`` gives ``Add(e, Const(-80))``.
    """
    if len(text.encode("utf-8")) > MAX_SOURCE_LENGTH:
        raise ParseError(f"expression longer than {MAX_SOURCE_LENGTH} bytes", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing


def format_number(value: float) -> str:
    if value == math.pi:
        return "pi"
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _is_negative(e: Expr) -> bool:
    if isinstance(e, Const):
        return e.value < 0
    if isinstance(e, Mul):
        return isinstance(e.factors[0], Const) and e.factors[0].value < 0
    if isinstance(e, Div):
        return _is_negative(e.num)
    return False


def _paren(s: str) -> str:
    return f"({s})"


def to_text(e: Expr) -> str:
    """Print ``e`` so that ``parse_expr(to_text(e)) == e``."""
    if isinstance(e, Const):
        return format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({', '.join(to_text(a) for a in e.args)})"
    if isinstance(e, Add):
        parts = [_paren(to_text(e.terms[0])) if isinstance(e.terms[0], Add) else to_text(e.terms[0])]
        for t in e.terms[1:]:
            if _is_negative(t):
                parts.append(" - " + _sum_operand(negate(t)))
            else:
                parts.append(" + " + _sum_operand(t))
        return "".join(parts)
    if isinstance(e, Mul):
        out = []
        for i, f in enumerate(e.factors):
            s = to_text(f)
            if isinstance(f, (Add, Mul)) or (i > 0 and (isinstance(f, Div) or _is_negative(f))):
                s = _paren(s)
            out.append(s)
        return "*".join(out)
    if isinstance(e, Div):
        num = to_text(e.num)
        if isinstance(e.num, Add):
            num = _paren(num)
        den = to_text(e.den)
        if isinstance(e.den, (Add, Mul, Div)) or _is_negative(e.den):
            den = _paren(den)
        return f"{num}/{den}"
    if isinstance(e, Pow):
        return f"{_pow_operand(e.base)}^{_pow_operand(e.exponent)}"
    raise TypeError(f"not an expression: {e!r}")


def _sum_operand(e: Expr) -> str:
    s = to_text(e)
    # a leading unary minus would be re-read as part of the term
    if isinstance(e, Add) or _is_negative(e):
        return _paren(s)
    return s


def _pow_operand(e: Expr) -> str:
    s = to_text(e)
    if isinstance(e, (Var, Func)) or (isinstance(e, Const) and e.value >= 0):
        return s
    return _paren(s)


# ---------------------------------------------------------------------------
# evaluation

_MATH_FUNCS: dict[str, Callable[..., float]] = {
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "max": max,
}


def eval_expr(e: Expr, env: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Raises UnboundVariableError for a free variable missing from ``env`` and
    DomainError instead of returning NaN or infinity.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariableError(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Add):
        return _finite(math.fsum(eval_expr(t, env) for t in e.terms), e)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= eval_expr(f, env)
        return _finite(out, e)
    if isinstance(e, Div):
        den = eval_expr(e.den, env)
        if den == 0.0:
            raise DomainError(f"division by zero in {to_text(e)}")
        return _finite(eval_expr(e.num, env) / den, e)
    if isinstance(e, Pow):
        base = eval_expr(e.base, env)
        ex = eval_expr(e.exponent, env)
        try:
            return _finite(math.pow(base, ex), e)
        except (ValueError, ZeroDivisionError, OverflowError) as err:
            raise DomainError(f"{to_text(e)}: {base!r}^{ex!r} is undefined") from err
    if isinstance(e, Func):
        args = [eval_expr(a, env) for a in e.args]
        if e.name == "ln":
            if args[0] <= 0.0:
                raise DomainError(f"ln of non-positive value {args[0]!r}")
            return math.log(args[0])
        try:
            return _finite(_MATH_FUNCS[e.name](*args), e)
        except OverflowError as err:
            raise DomainError(f"overflow in {to_text(e)}") from err
    raise TypeError(f"not an expression: {e!r}")


def _finite(value: float, e: Expr) -> float:
    if not math.isfinite(value):
        raise DomainError(f"non-finite value while evaluating {to_text(e)}")
    return value


def _np_log(a):
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0.0):
        raise DomainError("ln of non-positive value")
    return np.log(a)


_NP_NAMESPACE = {
    "_exp": np.exp,
    "_ln": _np_log,
    "_sin": np.sin,
    "_cos": np.cos,
    "_max": np.maximum,
    "_pow": np.power,
}


def _np_source(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return "(" + " + ".join(_np_source(t) for t in e.terms) + ")"
    if isinstance(e, Mul):
        return "(" + " * ".join(_np_source(f) for f in e.factors) + ")"
    if isinstance(e, Div):
        return f"({_np_source(e.num)} / {_np_source(e.den)})"
    if isinstance(e, Pow):
        return f"_pow({_np_source(e.base)}, {_np_source(e.exponent)})"
    return f"_{e.name}(" + ", ".join(_np_source(a) for a in e.args) + ")"


@lru_cache(maxsize=4096)
def _compiled(e: Expr, names: tuple[str, ...]):
    src = f"lambda {', '.join(names) or '_unused=None'}: {_np_source(e)}"
    return eval(src, dict(_NP_NAMESPACE))  # noqa: S307 - source generated from a validated tree


def compile_expr(e: Expr, names: Iterable[str] = ("s1", "s2", "u", "v", "x", "y")):
    """Return a vectorised evaluator ``f(**arrays) -> ndarray`` for ``e``.

    Keyword arguments must cover every variable of ``e``. Floating point
    exceptions (division by zero, invalid power, overflow) raise DomainError.
    """
    names = tuple(sorted(names))
    missing = variables(e) - set(names)
    if missing:
        raise UnboundVariableError(f"variables {sorted(missing)} are not among {list(names)}")
    fn = _compiled(e, names)

    def evaluate(**env):
        unbound = variables(e) - set(env)
        if unbound:
            raise UnboundVariableError(f"variables {sorted(unbound)} are not bound")
        arrays = {k: np.asarray(env.get(k, 0.0), dtype=float) for k in names}
        shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
        try:
            with np.errstate(divide="raise", invalid="raise", over="raise", under="ignore"):
                out = fn(**arrays)
        except FloatingPointError as err:
            raise DomainError(f"{err} while evaluating {to_text(e)}") from err
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    return evaluate


# ---------------------------------------------------------------------------
# differentiation


def _d(e: Expr, var: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Add):
        return Add(tuple(_d(t, var) for t in e.terms))
    if isinstance(e, Mul):
        parts = []
        for i, f in enumerate(e.factors):
            rest = e.factors[:i] + e.factors[i + 1:]
            parts.append(Mul((_d(f, var),) + rest))
        return parts[0] if len(parts) == 1 else Add(tuple(parts))
    if isinstance(e, Div):
        num = Add((Mul((_d(e.num, var), e.den)), negate(Mul((e.num, _d(e.den, var))))))
        return Div(num, Pow(e.den, Const(2.0)))
    if isinstance(e, Pow):
        if var not in variables(e.exponent):
            n = e.exponent
            return Mul((n, Pow(e.base, Add((n, Const(-1.0)))), _d(e.base, var)))
        # a^b = exp(b ln a)
        inner = Add((Mul((_d(e.exponent, var), ln(e.base))), Mul((e.exponent, _d(e.base, var), Pow(e.base, Const(-1.0))))))
        return Mul((e, inner))
    if isinstance(e, Func):
        if e.name == "max":
            raise DifferentiationError("cannot differentiate through max(); strip it first")
        a = e.args[0]
        da = _d(a, var)
        if e.name == "exp":
            return Mul((e, da))
        if e.name == "ln":
            return Mul((da, Pow(a, Const(-1.0))))
        if e.name == "sin":
            return Mul((cos(a), da))
        if e.name == "cos":
            return Mul((Const(-1.0), sin(a), da))
    raise TypeError(f"not an expression: {e!r}")


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to ``var``, simplified."""
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    if contains_max(e):
        raise DifferentiationError("cannot differentiate through max(); strip it first")
    return simplify(_d(e, var))


# ---------------------------------------------------------------------------
# simplification
#
# A polynomial over "atoms" is the canonical form: a dict mapping a monomial
# (sorted tuple of (atom, exponent) pairs) to its coefficient. Atoms are
# variables, function applications with canonical arguments, sums raised to
# a non-expandable power and powers with symbolic exponents.

Monomial = tuple[tuple[Expr, float], ...]
Poly = dict[Monomial, float]


@lru_cache(maxsize=65536)
def expr_key(e: Expr) -> tuple:
    """Total order on trees; variables sort before function applications."""
    if isinstance(e, Const):
        return (0, e.value)
    if isinstance(e, Var):
        return (1, e.name)
    if isinstance(e, Func):
        return (2, e.name, tuple(expr_key(a) for a in e.args))
    if isinstance(e, Pow):
        return (3, expr_key(e.base), expr_key(e.exponent))
    if isinstance(e, Mul):
        return (4, tuple(expr_key(f) for f in e.factors))
    if isinstance(e, Add):
        return (5, tuple(expr_key(t) for t in e.terms))
    return (6, expr_key(e.num), expr_key(e.den))


def _mono_key(m: Monomial) -> tuple:
    return tuple((expr_key(a), p) for a, p in m)


class _Collector:
    """Accumulates coefficients per monomial; sums are compensated and a
    cancellation below the rounding noise of its addends is snapped to 0."""

    def __init__(self):
        self.parts: dict[Monomial, list[float]] = {}

    def add(self, mono: Monomial, coef: float) -> None:
        if coef != 0.0:
            self.parts.setdefault(mono, []).append(coef)

    def add_poly(self, p: Poly, scale: float = 1.0) -> None:
        for m, c in p.items():
            self.add(m, c * scale)

    def result(self) -> Poly:
        out: Poly = {}
        for m, cs in self.parts.items():
            if len(cs) == 1:
                total = cs[0]
            else:
                total = math.fsum(cs)
                if abs(total) <= 4 * _EPS * math.fsum(abs(c) for c in cs):
                    continue
            if total != 0.0:
                if not math.isfinite(total):
                    raise DomainError("coefficient overflow during simplification")
                out[m] = total
        return out


def _atom_poly(atom: Expr, power: float = 1.0) -> Poly:
    return {((atom, power),): 1.0}


def _const_poly(c: float) -> Poly:
    return {(): c} if c != 0.0 else {}


def _as_const(p: Poly) -> float | None:
    if not p:
        return 0.0
    if len(p) == 1 and () in p:
        return p[()]
    return None


def _finalize(coef: float, factors: dict[Expr, float]) -> Poly:
    """Normalise one product term: merge exp atoms, expand integer powers of sums."""
    exp_args = _Collector()
    plain: dict[Expr, float] = {}
    sums: list[tuple[Expr, int]] = []
    for atom, power in factors.items():
        if power == 0.0:
            continue
        if isinstance(atom, Func) and atom.name == "exp":
            exp_args.add_poly(_to_poly(atom.args[0]), power)
        elif isinstance(atom, Add) and power.is_integer() and 0 < power <= _EXPAND_LIMIT:
            sums.append((atom, int(power)))
        else:
            plain[atom] = power
    arg = exp_args.result()
    c = _as_const(arg)
    if c is not None:
        if c != 0.0:
            coef *= _fold_func("exp", (c,), 1.0)
    else:
        plain[Func("exp", (_from_poly(arg),))] = 1.0
    mono = tuple(sorted(plain.items(), key=lambda ap: expr_key(ap[0])))
    out: Poly = {mono: coef} if coef != 0.0 else {}
    for atom, n in sums:
        base = _to_poly(atom)
        for _ in range(n):
            out = _mul(out, base)
    return out


def _fold_func(name: str, args: tuple[float, ...], default):
    try:
        if name == "ln":
            if args[0] <= 0:
                return default
            value = math.log(args[0])
        else:
            value = _MATH_FUNCS[name](*args)
    except (OverflowError, ValueError):
        return default
    return value if math.isfinite(value) else default


def _mul(a: Poly, b: Poly) -> Poly:
    acc = _Collector()
    for ma, ca in a.items():
        for mb, cb in b.items():
            factors = dict(ma)
            for atom, p in mb:
                factors[atom] = factors.get(atom, 0.0) + p
            acc.add_poly(_finalize(ca * cb, factors))
    return acc.result()


def _pow(p: Poly, c: float) -> Poly:
    if c == 0.0:
        return {(): 1.0}
    k = _as_const(p)
    if k is not None:
        if k == 0.0 and c < 0:
            return _atom_poly(Pow(Const(0.0), Const(c)))
        try:
            value = math.pow(k, c)
        except (ValueError, OverflowError):
            return _atom_poly(Pow(Const(k), Const(c)))
        if not math.isfinite(value):
            return _atom_poly(Pow(Const(k), Const(c)))
        return _const_poly(value)
    if len(p) == 1:
        ((mono, coef),) = p.items()
        if coef < 0 and not c.is_integer():
            return _atom_poly(_from_poly(p), c)
        try:
            new_coef = math.pow(coef, c)
        except (ValueError, OverflowError):
            return _atom_poly(_from_poly(p), c)
        return _finalize(new_coef, {atom: power * c for atom, power in mono})
    if c.is_integer() and 0 < c <= _EXPAND_LIMIT:
        out: Poly = {(): 1.0}
        for _ in range(int(c)):
            out = _mul(out, p)
        return out
    return _atom_poly(_from_poly(p), c)


def _to_poly(e: Expr) -> Poly:
    return _to_poly_cached(e)


@lru_cache(maxsize=65536)
def _to_poly_cached(e: Expr) -> Poly:
    # callers must not mutate the returned dict
    if isinstance(e, Const):
        return _const_poly(e.value)
    if isinstance(e, Var):
        return _atom_poly(e)
    if isinstance(e, Add):
        acc = _Collector()
        for t in e.terms:
            acc.add_poly(_to_poly(t))
        return acc.result()
    if isinstance(e, Mul):
        out: Poly = {(): 1.0}
        for f in e.factors:
            out = _mul(out, _to_poly(f))
            if not out:
                break
        return out
    if isinstance(e, Div):
        return _mul(_to_poly(e.num), _pow(_to_poly(e.den), -1.0))
    if isinstance(e, Pow):
        ex = _to_poly(e.exponent)
        c = _as_const(ex)
        base = _to_poly(e.base)
        if c is not None:
            return _pow(base, c)
        return _atom_poly(Pow(_from_poly(base), _from_poly(ex)))
    if isinstance(e, Func):
        args = tuple(_from_poly(_to_poly(a)) for a in e.args)
        if all(isinstance(a, Const) for a in args):
            folded = _fold_func(e.name, tuple(a.value for a in args), None)
            if folded is not None:
                return _const_poly(folded)
        return _finalize(1.0, {Func(e.name, args): 1.0})
    raise TypeError(f"not an expression: {e!r}")


def _term_expr(mono: Monomial, coef: float) -> Expr:
    factors = [atom if p == 1.0 else Pow(atom, Const(p)) for atom, p in mono]
    if not factors:
        return Const(coef)
    if coef == 1.0:
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))
    return Mul((Const(coef), *factors))


def _from_poly(p: Poly) -> Expr:
    # constant term last, the rest in canonical monomial order
    monos = sorted((m for m in p if m), key=_mono_key)
    if () in p:
        monos.append(())
    terms = [_term_expr(m, p[m]) for m in monos]
    if not terms:
        return Const(0.0)
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def simplify(e: Expr) -> Expr:
    """Canonical sum-of-products form.

    Folds constants, drops zero terms and unit factors, merges powers of the
    same atom and products of exponentials, multiplies out small integer
    powers of sums and collects like terms. Idempotent.
    """
    return _from_poly(_to_poly(e))
