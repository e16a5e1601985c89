"""Command-line front end.

    fracbs scenario ex3 --terms 25 --out ex3.csv
    fracbs price --config my_scenario.json
    fracbs oracle --config oracle.json --out field.csv
    fracbs sumudu-check
    fracbs plot-data ex1 --points 41

Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import expr as ex
from .oracle import GridSpec, OracleError, max_relative_deviation, solve_fd, write_csv
from .pricing import (
    ScenarioError,
    load_builtin,
    load_scenario_file,
    price_grid,
    reconcile,
)
from .solver import DEFAULT_TERMS, ModelParams, SeriesGrowthError, build_series, eval_series
from .sumudu import QuadratureError, format_checks, identity_suite

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

log = logging.getLogger("fracbs")


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _terms(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"N must be >= 1, got {n}")
    return n


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracbs", description="Two-asset time-fractional Black-Scholes series pricer.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="progress and timing on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def pricing_opts(p):
        p.add_argument("--terms", "-N", type=_terms, default=DEFAULT_TERMS, help="series terms N (default 25)")
        p.add_argument("--out", "-o", help="CSV output path (default stdout)")
        p.add_argument("--matrix", action="store_true", help="write the S2 x S1 table instead of long form")
        p.add_argument("--precision", type=int, default=6, help="significant digits (default 6)")
        p.add_argument("--space-mode", choices=("log", "asset"), help="override the scenario's coordinate system")
        p.add_argument("--report", help="write the reconciliation report here instead of stdout/stderr")
        p.add_argument("--report-format", choices=("text", "json"), default="text")

    p = sub.add_parser("scenario", help="price a built-in scenario and reconcile it with its fixture")
    p.add_argument("id", help="ex1 ... ex5, ex1-literal, ex1-logprice")
    pricing_opts(p)

    p = sub.add_parser("price", help="price a scenario described by a JSON file")
    p.add_argument("--config", required=True)
    pricing_opts(p)

    p = sub.add_parser("oracle", help="run the finite-difference solver against the series")
    p.add_argument("--config", required=True)
    p.add_argument("--out", "-o", help="CSV of the final field (u,v,value)")
    p.add_argument("--precision", type=int, default=6)

    p = sub.add_parser("sumudu-check", help="verify the transform identities by quadrature")
    p.add_argument("--tolerance", type=float, default=1e-5)

    p = sub.add_parser("plot-data", help="emit s1,s2,price triples on a fine lattice")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("id", nargs="?", help="built-in scenario id")
    src.add_argument("--config", help="scenario JSON file")
    p.add_argument("--points", type=int, default=41, help="lattice points per axis (default 41)")
    p.add_argument("--terms", "-N", type=_terms, default=DEFAULT_TERMS)
    p.add_argument("--out", "-o")
    p.add_argument("--precision", type=int, default=6)
    p.add_argument("--space-mode", choices=("log", "asset"))
    return parser


def _write(text: str, path: Optional[str], stream) -> None:
    if path is None:
        stream.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as err:
        raise _Failure(EXIT_INVALID, f"cannot write {path}: {err.strerror}") from None


def _load(args):
    sc = load_builtin(args.id) if getattr(args, "id", None) else load_scenario_file(args.config)
    if args.space_mode:
        sc = sc.with_space_mode(args.space_mode)
    return sc


def _cmd_price(args, stdout, stderr) -> int:
    if args.precision < 1:
        raise _Failure(EXIT_INVALID, "--precision must be >= 1")
    sc = _load(args)
    start = time.perf_counter()
    pt = price_grid(sc, args.terms)
    log.info("%s: priced %d nodes with N=%d in %.2f s, tail bound %.3g",
             sc.id, pt.prices.size, args.terms, time.perf_counter() - start, pt.tail_bound)
    _write(pt.to_csv(args.precision, args.matrix), args.out, stdout)
    if not pt.converged:
        stderr.write(f"warning: {sc.id}: series not converged (tail bound {pt.tail_bound:.3g})\n")
    if sc.fixture is not None:
        rep = reconcile(pt, sc)
        text = rep.to_json() + "\n" if args.report_format == "json" else rep.to_text(args.precision)
        _write(text, args.report, stdout if args.out else stderr)
    return EXIT_OK


def _cmd_oracle(args, stdout, stderr) -> int:
    path = Path(args.config)
    try:
        doc = json.loads(path.read_text())
    except OSError as err:
        raise _Failure(EXIT_INVALID, f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise _Failure(EXIT_INVALID, f"<document>: not valid JSON ({err})") from None
    from importlib import resources

    schema = json.loads((resources.files("fracbs") / "data" / "oracle.schema.json").read_text())
    jsonschema.validate(doc, schema)
    try:
        params = ModelParams(**{k: float(v) for k, v in doc["params"].items()})
    except ValueError as err:
        raise ScenarioError(f"params.{err}") from None
    g = doc.get("grid", {})
    grid = GridSpec(
        u_range=tuple(g.get("u_range", (-1.0, 1.0))),
        v_range=tuple(g.get("v_range", (-1.0, 1.0))),
        nu=g.get("nu", 33),
        nv=g.get("nv", 33),
        steps=g.get("steps", 200),
        t_final=float(doc["t_final"]),
    )
    direction = doc.get("direction", "series")
    ic = ex.simplify(ex.parse_expr(doc["initial_condition"]))
    series = build_series(ic, params, doc.get("terms", 40), box=(grid.u_range, grid.v_range), direction=direction)

    def boundary(U, V, t):
        return eval_series(series, {"u": U, "v": V}, t)

    start = time.perf_counter()
    result = solve_fd(params, ic, grid, boundary, scheme=doc.get("scheme", "split"), direction=direction)
    U, V = np.meshgrid(result.u, result.v, indexing="ij")
    dev = max_relative_deviation(result, boundary(U, V, grid.t_final))
    log.info("oracle: %dx%d interior, %d steps in %.2f s", grid.nu, grid.nv, grid.steps, time.perf_counter() - start)
    if args.out:
        try:
            write_csv(result, args.out, args.precision)
        except OSError as err:
            raise _Failure(EXIT_INVALID, f"cannot write {args.out}: {err.strerror}") from None
    stdout.write(f"max relative deviation, series vs finite differences: {dev:.3e}\n")
    return EXIT_OK


def _cmd_sumudu(args, stdout, stderr) -> int:
    checks = identity_suite(args.tolerance)
    stdout.write(format_checks(checks) + "\n")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERIC


def _cmd_plot(args, stdout, stderr) -> int:
    if args.points < 2:
        raise _Failure(EXIT_INVALID, "--points must be >= 2")
    sc = _load(args)
    s1 = np.linspace(sc.s1_grid[0], sc.s1_grid[-1], args.points)
    s2 = np.linspace(sc.s2_grid[0], sc.s2_grid[-1], args.points)
    from dataclasses import replace

    fine = replace(sc, s1_grid=tuple(float(x) for x in s1), s2_grid=tuple(float(x) for x in s2), fixture=None)
    pt = price_grid(fine, args.terms)
    _write(pt.to_csv(args.precision), args.out, stdout)
    return EXIT_OK


_COMMANDS = {
    "scenario": _cmd_price,
    "price": _cmd_price,
    "oracle": _cmd_oracle,
    "sumudu-check": _cmd_sumudu,
    "plot-data": _cmd_plot,
}


def run_cli(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        return _COMMANDS[args.command](args, stdout, stderr)
    except _Failure as err:
        stderr.write(f"error: {err}\n")
        return err.code
    except jsonschema.ValidationError as err:
        path = ".".join(str(p) for p in err.absolute_path) or "<document>"
        stderr.write(f"error: {path}: {err.message}\n")
        return EXIT_INVALID
    except (ex.EvaluationError, SeriesGrowthError, OracleError, QuadratureError, OverflowError, ArithmeticError) as err:
        stderr.write(f"numerical failure: {err}\n")
        return EXIT_NUMERIC
    except (ValueError, OSError) as err:
        stderr.write(f"error: {err}\n")
        return EXIT_INVALID


def main() -> None:  # pragma: no cover
    sys.exit(run_cli())
