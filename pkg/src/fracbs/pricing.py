"""Scenarios, grid pricing and reconciliation against published tables.

A scenario is a payoff, model parameters and a 5 x 5 grid of asset prices.
``price_grid`` builds the series for the stripped payoff and evaluates it at
every node; ``reconcile`` compares the result with a stored fixture table and,
when one is present, checks the fixture against its accompanying closed form.

Matrices are laid out as printed: ``prices[i, j]`` is the value at
S2 = s2_grid[i], S1 = s1_grid[j].
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

import jsonschema
import numpy as np

from . import expr as ex
from .expr import Expr
from .solver import (
    ASSET,
    DEFAULT_TERMS,
    LOG,
    ModelParams,
    SeriesSolution,
    build_series,
    eval_series,
    to_log_space,
    truncation_estimate,
)

COORDINATES = {"asset": ASSET, "literal": LOG, "logprice": LOG}
ALIASES = {"ex1": "ex1-logprice"}
# a table counts as converged when the tail bound is this small relative to the prices
CONVERGED_RTOL = 1e-6
# closed form vs fixture: worst relative deviation above this is flagged
CONSISTENCY_RTOL = 1e-2

_DATA = resources.files("fracbs") / "data"
_LOG_RENAME = {"s1": "u", "s2": "v"}
_ASSET_RENAME = {"u": "s1", "v": "s2"}


class ScenarioError(ValueError):
    """Invalid scenario document. The message starts with the field path."""


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Fixture:
    cells: tuple[tuple[str, ...], ...]   # verbatim text, rows S2, columns S1
    s1: tuple[float, ...]
    s2: tuple[float, ...]
    name: str = ""

    @property
    def values(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.cells])


@dataclass(frozen=True)
class Scenario:
    id: str
    initial_condition: str
    params: ModelParams
    maturity_months: float
    s1_grid: tuple[float, ...]
    s2_grid: tuple[float, ...]
    coordinates: str = "asset"
    variable_map: Mapping[str, str] = field(default_factory=dict)
    fixture: Optional[Fixture] = None
    closed_form: Optional[str] = None
    title: str = ""
    option_type: str = "call"
    notes: str = ""

    def __post_init__(self):
        for name, grid in (("grid.s1", self.s1_grid), ("grid.s2", self.s2_grid)):
            if not grid:
                raise ScenarioError(f"{name}: must not be empty")
            if any(not math.isfinite(g) for g in grid):
                raise ScenarioError(f"{name}: entries must be finite")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ScenarioError(f"{name}: must be strictly increasing, got {list(grid)}")
        if self.coordinates not in COORDINATES:
            raise ScenarioError(f"coordinates: must be one of {sorted(COORDINATES)}, got {self.coordinates!r}")
        if COORDINATES[self.coordinates] != self.params.space_mode:
            raise ScenarioError(
                f"coordinates: {self.coordinates!r} does not fit space_mode {self.params.space_mode!r}"
            )
        if self.coordinates in ("asset", "logprice") and (min(self.s1_grid) <= 0 or min(self.s2_grid) <= 0):
            raise ScenarioError("grid: asset prices must be positive")
        if self.fixture is not None and (self.fixture.s1 != self.s1_grid or self.fixture.s2 != self.s2_grid):
            raise ScenarioError(
                f"fixture_csv: table axes {list(self.fixture.s1)} x {list(self.fixture.s2)} "
                f"do not match the grid {list(self.s1_grid)} x {list(self.s2_grid)}"
            )
        try:
            payoff = self.payoff
        except ex.ParseError as err:
            raise ScenarioError(f"initial_condition: {err}") from None
        except ValueError as err:
            raise ScenarioError(f"initial_condition: {err}") from None
        extra = ex.variables(payoff) - set(self.params.variables)
        if extra:
            raise ScenarioError(
                f"variable_map: payoff still uses {sorted(extra)} after renaming; "
                f"{self.params.space_mode} mode needs {list(self.params.variables)}"
            )
        if self.closed_form is not None:
            try:
                self.closed_form_expr
            except ex.ParseError as err:
                raise ScenarioError(f"closed_form: {err}") from None

    @property
    def maturity(self) -> float:
        """Maturity in years."""
        return self.maturity_months / 12.0

    @property
    def payoff(self) -> Expr:
        """The initial condition with max() stripped, in solution variables."""
        e = ex.parse_expr(self.initial_condition)
        return ex.simplify(ex.strip_max(ex.rename(e, dict(self.variable_map))))

    @property
    def closed_form_expr(self) -> Optional[Expr]:
        if self.closed_form is None:
            return None
        return ex.rename(ex.parse_expr(self.closed_form), dict(self.variable_map))

    def coordinates_at(self, t: float) -> dict[str, np.ndarray]:
        """Solution-variable values at every grid node, as (len(s2), len(s1)) arrays."""
        S1, S2 = np.meshgrid(np.asarray(self.s1_grid, float), np.asarray(self.s2_grid, float))
        if self.coordinates == "asset":
            return {"s1": S1, "s2": S2}
        if self.coordinates == "literal":
            return {"u": S1, "v": S2}
        u, v = to_log_space(S1, S2, t, self.params)
        return {"u": u, "v": v}

    def box_at(self, t: float):
        c = self.coordinates_at(t)
        a, b = self.params.variables
        return ((float(c[a].min()), float(c[a].max())), (float(c[b].min()), float(c[b].max())))

    def with_space_mode(self, mode: str) -> "Scenario":
        """The same payoff priced in the other coordinate system.

        Switching to log mode reads the payoff's asset variables as e^u = S1
        (``logprice`` coordinates); switching to asset mode reads log
        variables as asset prices.
        """
        if mode == self.params.space_mode:
            return self
        if mode not in (LOG, ASSET):
            raise ScenarioError(f"space_mode: must be 'log' or 'asset', got {mode!r}")
        swap = _LOG_RENAME if mode == LOG else _ASSET_RENAME
        names = set(ex.variables(ex.parse_expr(self.initial_condition)))
        mapping = {k: swap.get(v, v) for k, v in self.variable_map.items()}
        for n in names - set(mapping):
            mapping[n] = swap.get(n, n)
        return Scenario(
            id=self.id,
            initial_condition=self.initial_condition,
            params=self.params.replace(space_mode=mode),
            maturity_months=self.maturity_months,
            s1_grid=self.s1_grid,
            s2_grid=self.s2_grid,
            coordinates="logprice" if mode == LOG else "asset",
            variable_map=mapping,
            fixture=self.fixture,
            closed_form=self.closed_form,
            title=self.title,
            option_type=self.option_type,
            notes=self.notes,
        )


def load_schema() -> dict:
    return json.loads((_DATA / "scenario.schema.json").read_text())


def read_fixture(source: Union[str, Path, io.TextIOBase], name: str = "") -> Fixture:
    """Parse a fixture table (header ``s2/s1,<S1 values>``, one row per S2)."""
    text = source.read() if hasattr(source, "read") else Path(source).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 2 or rows[0][0].strip() != "s2/s1":
        raise ScenarioError(f"fixture_csv: {name or source}: expected a header starting with 's2/s1'")
    s1 = tuple(float(c) for c in rows[0][1:])
    s2, cells = [], []
    for k, row in enumerate(rows[1:], start=2):
        if len(row) != len(s1) + 1:
            raise ScenarioError(f"fixture_csv: {name or source}: line {k} has {len(row) - 1} cells, expected {len(s1)}")
        s2.append(float(row[0]))
        cells.append(tuple(c.strip() for c in row[1:]))
    fx = Fixture(tuple(cells), s1, tuple(s2), name)
    fx.values  # every cell must be numeric
    return fx


def scenario_from_dict(doc: Mapping, base: Optional[Path] = None) -> Scenario:
    """Validate ``doc`` against the schema and build a Scenario.

    A relative ``fixture_csv`` is looked up next to the document (``base``)
    and then among the built-in fixtures.
    """
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<document>"
        raise ScenarioError(f"{path}: {err.message}")
    prm = dict(doc["params"])
    try:
        params = ModelParams(
            sigma1=float(prm["sigma1"]),
            sigma2=float(prm["sigma2"]),
            r=float(prm["r"]),
            rho=float(prm["rho"]),
            alpha=float(prm["alpha"]),
            w1=float(prm.get("w1", 1.0)),
            w2=float(prm.get("w2", 1.0)),
            strike=float(prm.get("strike", 0.0)),
            maturity=float(doc["maturity_months"]) / 12.0,
            space_mode=doc["space_mode"],
        )
    except ValueError as err:
        raise ScenarioError(f"params.{err}") from None
    fixture = None
    if doc.get("fixture_csv"):
        fixture = read_fixture(_locate_fixture(doc["fixture_csv"], base), doc["fixture_csv"])
    return Scenario(
        id=doc["id"],
        initial_condition=doc["initial_condition"],
        params=params,
        maturity_months=float(doc["maturity_months"]),
        s1_grid=tuple(float(s) for s in doc["grid"]["s1"]),
        s2_grid=tuple(float(s) for s in doc["grid"]["s2"]),
        coordinates=doc["coordinates"],
        variable_map=dict(doc.get("variable_map", {})),
        fixture=fixture,
        closed_form=doc.get("closed_form"),
        title=doc.get("title", ""),
        option_type=doc.get("option_type", "call"),
        notes=doc.get("notes", ""),
    )


def _locate_fixture(name: str, base: Optional[Path]):
    if base is not None and (base / name).is_file():
        return base / name
    builtin = _DATA / "fixtures" / name
    if builtin.is_file():
        return io.StringIO(builtin.read_text())
    raise ScenarioError(f"fixture_csv: file {name!r} not found")


def load_scenario_file(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ScenarioError(f"<document>: not valid JSON ({err})") from None
    return scenario_from_dict(doc, base=path.parent)


def builtin_ids() -> list[str]:
    return sorted(p.name[:-5] for p in (_DATA / "scenarios").iterdir() if p.name.endswith(".json"))


def load_builtin(scenario_id: str) -> Scenario:
    """A built-in scenario by id (``ex1`` is an alias of ``ex1-logprice``)."""
    sid = ALIASES.get(scenario_id, scenario_id)
    if sid not in builtin_ids():
        raise ScenarioError(f"scenario: unknown id {scenario_id!r}; choose from {builtin_ids() + sorted(ALIASES)}")
    return scenario_from_dict(json.loads((_DATA / "scenarios" / f"{sid}.json").read_text()))


def verify_fixtures() -> dict[str, bool]:
    """Check every built-in fixture against the committed SHA-256 digests."""
    folder = _DATA / "fixtures"
    result = {}
    for line in (folder / "SHA256SUMS").read_text().splitlines():
        if not line.strip():
            continue
        digest, name = line.split(maxsplit=1)
        data = (folder / name).read_bytes()
        result[name] = hashlib.sha256(data).hexdigest() == digest
    return result


# ---------------------------------------------------------------------------
# pricing


@dataclass(frozen=True)
class PriceTable:
    scenario_id: str
    prices: np.ndarray          # rows S2, columns S1
    t: float                    # years
    tail_bound: float
    s1_grid: tuple[float, ...]
    s2_grid: tuple[float, ...]
    terms: int                  # N, index of the last series term

    def __post_init__(self):
        if self.prices.shape != (len(self.s2_grid), len(self.s1_grid)):
            raise ValueError(f"price matrix {self.prices.shape} does not match the grid")
        if not np.all(np.isfinite(self.prices)):
            raise ex.DomainError("price table has non-finite entries")

    @property
    def converged(self) -> bool:
        """Tail bound small against the prices themselves."""
        scale = max(1.0, float(np.max(np.abs(self.prices))))
        return self.tail_bound <= CONVERGED_RTOL * scale

    def rows(self):
        """(s1, s2, price) triples, S1 varying fastest within each S2 row."""
        for i, s2 in enumerate(self.s2_grid):
            for j, s1 in enumerate(self.s1_grid):
                yield s1, s2, float(self.prices[i, j])

    def to_csv(self, precision: int = 6, matrix: bool = False) -> str:
        fmt = lambda x: f"{x:.{precision}g}"
        if matrix:
            lines = ["s2/s1," + ",".join(fmt(s) for s in self.s1_grid)]
            for i, s2 in enumerate(self.s2_grid):
                lines.append(fmt(s2) + "," + ",".join(fmt(p) for p in self.prices[i]))
        else:
            lines = ["s1,s2,price"] + [f"{fmt(a)},{fmt(b)},{fmt(c)}" for a, b, c in self.rows()]
        return "\n".join(lines) + "\n"


def build_scenario_series(sc: Scenario, N: int = DEFAULT_TERMS, t: Optional[float] = None) -> SeriesSolution:
    t = sc.maturity if t is None else t
    return build_series(sc.payoff, sc.params, N, box=sc.box_at(t))


def price_grid(sc: Scenario, N: int = DEFAULT_TERMS, t: Optional[float] = None) -> PriceTable:
    """Series prices at every grid node at time ``t`` (default: maturity).

    The tail bound is the sup over the grid's coordinate box of the last
    included term, sup|g_N| t^(N alpha) / Gamma(1 + N alpha).
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    t = sc.maturity if t is None else float(t)
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    series = build_scenario_series(sc, N, t)
    prices = np.asarray(eval_series(series, sc.coordinates_at(t), t), dtype=float)
    prices = np.broadcast_to(prices, (len(sc.s2_grid), len(sc.s1_grid))).copy()
    return PriceTable(sc.id, prices, t, truncation_estimate(series, t), sc.s1_grid, sc.s2_grid, N)


def closed_form_values(sc: Scenario, t: Optional[float] = None) -> Optional[np.ndarray]:
    """The scenario's stored closed form evaluated at the grid nodes."""
    e = sc.closed_form_expr
    if e is None:
        return None
    t = sc.maturity if t is None else t
    coords = sc.coordinates_at(t)
    names = tuple(sorted(ex.variables(e)))
    values = ex.compile_expr(e, names)(**{n: coords[n] for n in names})
    return np.broadcast_to(np.asarray(values, dtype=float), (len(sc.s2_grid), len(sc.s1_grid))).copy()


# ---------------------------------------------------------------------------
# reconciliation


def _relative(a: np.ndarray, ref: np.ndarray) -> np.ndarray:
    diff = np.abs(a - ref)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = diff / np.abs(ref)
    return np.where(diff == 0.0, 0.0, rel)


@dataclass(frozen=True)
class ConsistencyCheck:
    """Fixture table against the closed form it was printed with."""

    closed_form: str
    values: np.ndarray
    abs_dev: np.ndarray
    rel_dev: np.ndarray
    tolerance: float = CONSISTENCY_RTOL

    @property
    def max_rel(self) -> float:
        return float(np.max(self.rel_dev))

    @property
    def inconsistent(self) -> bool:
        return not self.max_rel <= self.tolerance


@dataclass(frozen=True)
class ReconciliationReport:
    scenario_id: str
    computed: np.ndarray
    fixture: np.ndarray
    abs_dev: np.ndarray
    rel_dev: np.ndarray
    s1_grid: tuple[float, ...]
    s2_grid: tuple[float, ...]
    tail_bound: float
    converged: bool
    consistency: Optional[ConsistencyCheck] = None

    @property
    def max_abs(self) -> float:
        return float(np.max(self.abs_dev))

    @property
    def mean_abs(self) -> float:
        return float(np.mean(self.abs_dev))

    @property
    def max_rel(self) -> float:
        return float(np.max(self.rel_dev))

    @property
    def mean_rel(self) -> float:
        return float(np.mean(self.rel_dev))

    def to_dict(self) -> dict:
        def m(a):
            return [[_json_number(x) for x in row] for row in np.asarray(a)]

        out = {
            "scenario": self.scenario_id,
            "s1": list(self.s1_grid),
            "s2": list(self.s2_grid),
            "tail_bound": _json_number(self.tail_bound),
            "converged": self.converged,
            "computed": m(self.computed),
            "fixture": m(self.fixture),
            "abs_dev": m(self.abs_dev),
            "rel_dev": m(self.rel_dev),
            "summary": {k: _json_number(getattr(self, k)) for k in ("max_abs", "mean_abs", "max_rel", "mean_rel")},
            "consistency": None,
        }
        c = self.consistency
        if c is not None:
            out["consistency"] = {
                "closed_form": c.closed_form,
                "values": m(c.values),
                "rel_dev": m(c.rel_dev),
                "max_rel": _json_number(c.max_rel),
                "tolerance": c.tolerance,
                "inconsistent": c.inconsistent,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self, precision: int = 6) -> str:
        g = lambda x: f"{x:.{precision}g}"
        lines = [f"reconciliation: {self.scenario_id}"]
        lines.append(f"  tail bound {g(self.tail_bound)}" + ("" if self.converged else "  (series NOT converged)"))
        lines.append(
            f"  computed vs fixture: max abs {g(self.max_abs)}, mean abs {g(self.mean_abs)}, "
            f"max rel {g(self.max_rel)}, mean rel {g(self.mean_rel)}"
        )
        header = "    s2\\s1 " + " ".join(f"{g(s):>12}" for s in self.s1_grid)
        lines.append("  relative deviation, computed vs fixture")
        lines.append(header)
        for i, s2 in enumerate(self.s2_grid):
            lines.append(f"    {g(s2):>6} " + " ".join(f"{g(x):>12}" for x in self.rel_dev[i]))
        c = self.consistency
        if c is not None:
            flag = "INCONSISTENT" if c.inconsistent else "consistent"
            lines.append(f"  closed form vs fixture: max rel {g(c.max_rel)} (tolerance {g(c.tolerance)}): {flag}")
            i, j = np.unravel_index(int(np.argmax(c.rel_dev)), c.rel_dev.shape)
            lines.append(
                f"    worst cell S1={g(self.s1_grid[j])}, S2={g(self.s2_grid[i])}: "
                f"closed form {g(c.values[i, j])} vs table {g(self.fixture[i, j])}"
            )
        return "\n".join(lines) + "\n"


def _json_number(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def reconcile(pt: PriceTable, sc: Scenario, fixture: Optional[np.ndarray] = None) -> ReconciliationReport:
    """Per-cell comparison of ``pt`` with the scenario's fixture (or ``fixture``).

    Never fails on disagreement; raises only if the shapes differ or there
    is nothing to compare against.
    """
    if fixture is None:
        if sc.fixture is None:
            raise ValueError(f"scenario {sc.id!r} has no fixture table")
        fixture = sc.fixture.values
    fixture = np.asarray(fixture, dtype=float)
    if fixture.shape != pt.prices.shape:
        raise ValueError(f"dimension mismatch: table {pt.prices.shape} vs fixture {fixture.shape}")
    consistency = None
    cf = closed_form_values(sc, pt.t)
    if cf is not None:
        consistency = ConsistencyCheck(sc.closed_form, cf, np.abs(cf - fixture), _relative(cf, fixture))
    return ReconciliationReport(
        scenario_id=pt.scenario_id,
        computed=pt.prices,
        fixture=fixture,
        abs_dev=np.abs(pt.prices - fixture),
        rel_dev=_relative(pt.prices, fixture),
        s1_grid=pt.s1_grid,
        s2_grid=pt.s2_grid,
        tail_bound=pt.tail_bound,
        converged=pt.converged,
        consistency=consistency,
    )
