"""Command-line entry point.

Subcommands: solve, verify-bs, minimax, norms, vcurve, feasibility,
gen-scenario. Scenario files are JSON (see market.load_scenario);
results are JSON documents (or CSV where stated) written to --out or
standard output. Human diagnostics go to standard error.

Exit codes: 0 success, 1 input/domain error, 2 infeasible model,
3 numerical failure (non-convergence or a failed verification).

Environment: ROBUSTUTIL_LOG in {error,warn,info,debug} sets the log
level; ROBUSTUTIL_NO_NUMBA=1 selects the pure-numpy kernel backend.
Output documents are byte-identical across repeated runs with the same
config and seed, except for the wall_time_ms diagnostic.
"""
from __future__ import annotations

import functools
import json
import logging
import math
import os
import sys
import time

import click
import numpy as np

from . import __version__, _kernels
from ._errors import (BracketFailure, ConvergenceError, DomainError,
                      InfeasibleModel, NonConvergence, ScenarioError,
                      UnboundedDual, ValidationError)
from .market import (Constraint, ConstraintSet, _scenario_doc,
                     feasibility_check, load_scenario)
from .orlicz_modular import Modular, amemiya_norm, luxemburg_norm, modular_value
from .robust_solver import dual_value_curve, solve_robust
from .utility import UtilityFunction
from .verifier import BSOracle, bs_closed_form, bs_instance, minimax_check

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("ROBUSTUTIL_LOG", "warn").strip().lower()
    logging.basicConfig(stream=sys.stderr,
                        level=_LOG_LEVELS.get(name, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_utility(spec: str) -> UtilityFunction:
    """Parse a utility spec string: power:<alpha>."""
    parts = spec.strip().split(":")
    if len(parts) != 2 or parts[0] != "power":
        raise ValidationError(
            f"unrecognized utility spec {spec!r}; expected power:<alpha>")
    try:
        alpha = float(parts[1])
    except ValueError:
        raise ValidationError(f"bad alpha in utility spec {spec!r}") from None
    return UtilityFunction.power(alpha)


def _set_threads(threads: int) -> None:
    if threads < 1:
        raise ValidationError("threads must be >= 1")
    if _kernels.BACKEND == "numba" and threads > 1:
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))


def _jsonable(obj):
    """Convert to JSON-safe primitives; NaN is an error, +-inf become
    the strings "inf"/"-inf"."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            raise ValidationError("refusing to serialize NaN")
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _emit_json(doc: dict, out: str | None) -> None:
    _emit(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n", out)


def _dispatch(fn):
    """Run a command body and map package errors to exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        _setup_logging()
        try:
            code = fn(*args, **kwargs)
        except (ScenarioError, ValidationError, DomainError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except InfeasibleModel as exc:
            click.echo(f"infeasible: {exc}", err=True)
            sys.exit(2)
        except (NonConvergence, BracketFailure, UnboundedDual,
                ConvergenceError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)
        sys.exit(int(code or 0))

    return wrapper


def _common_options(fn):
    opts = [
        click.option("--scenario", type=str, default=None,
                     help="Scenario JSON path."),
        click.option("--utility", type=str, default="power:0.5",
                     show_default=True, help="Utility spec power:<alpha>."),
        click.option("--wealth", type=float, default=1.0, show_default=True,
                     help="Initial wealth x."),
        click.option("--tol", type=float, default=1e-9, show_default=True,
                     help="Solver tolerance."),
        click.option("--nodes", type=int, default=64, show_default=True,
                     help="Quadrature nodes for generator scenarios."),
        click.option("--seed", type=int, default=42, show_default=True,
                     help="Multistart seed."),
        click.option("--out", type=str, default=None,
                     help="Output path (default stdout)."),
        click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                     default="json", show_default=True),
        click.option("--threads", type=int, default=1, show_default=True,
                     help="Kernel threads (1 for bit-reproducibility)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _config_echo(command: str, **kw) -> dict:
    cfg = {"command": command}
    cfg.update(kw)
    return cfg


def _require_scenario(scenario: str | None):
    if not scenario:
        raise ValidationError("--scenario is required for this command")


def _json_only(fmt: str) -> None:
    if fmt != "json":
        raise ValidationError(
            "csv format is only supported by solve and vcurve")


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__)
def main() -> None:
    """Robust utility maximization under moment-constrained model
    uncertainty on finite markets."""


@main.command("solve")
@_common_options
@_dispatch
def cmd_solve(scenario, utility, wealth, tol, nodes, seed, out, fmt,
              threads) -> int:
    """Solve the robust problem and emit the solution document."""
    _require_scenario(scenario)
    _set_threads(threads)
    market, cset = load_scenario(scenario, default_nodes=nodes)
    uf = _parse_utility(utility)
    t0 = time.perf_counter()
    sol = solve_robust(market, cset, uf, wealth, tol=tol, seed=seed)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    cfg = _config_echo("solve", scenario=scenario, utility=utility,
                       wealth=wealth, tol=tol, nodes=nodes, seed=seed,
                       format=fmt, threads=threads)
    if fmt == "csv":
        _emit(_solution_csv(market, sol), out)
        return 0
    doc = {
        "config": cfg,
        "solution": {
            "x": sol.x,
            "y_hat": sol.y_hat,
            "u": sol.u_value,
            "v_at_y_hat": sol.v_at_y_hat,
            "Z_hat": sol.Z_hat,
            "X_hat": sol.X_hat,
        },
        "diagnostics": {
            "kkt": sol.dual.kkt,
            "budget_residual": sol.diagnostics["budget_residual"],
            "iterations": sol.dual.iterations,
            "wall_time_ms": wall_ms,
        },
        "version": __version__,
    }
    _emit_json(doc, out)
    return 0


def _solution_csv(market, sol) -> str:
    """One row per state; scalars in a leading comment row."""
    ids = sorted(market.observables)
    lines = [
        f"# x={sol.x!r} y_hat={sol.y_hat!r} u={sol.u_value!r} "
        f"v_at_y_hat={sol.v_at_y_hat!r} version={__version__}",
        ",".join(["state_index", "prob", *ids, "Z_hat", "X_hat"]),
    ]
    for i in range(market.n):
        row = [str(i), repr(float(market.probs[i]))]
        row += [repr(float(market.observables[k][i])) for k in ids]
        row += [repr(float(sol.Z_hat[i])), repr(float(sol.X_hat[i]))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


@main.command("verify-bs")
@_common_options
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--horizon", "--T", "horizon", type=float, default=1.0,
              show_default=True, help="Time horizon T.")
@click.option("--bound", "--A", "bound", type=float, default=1.1,
              show_default=True, help="Mean constraint level A.")
@click.option("--rtol", type=float, default=None,
              help="Pass tolerance (default 1e-3, or 1e-4 at >=256 nodes).")
@_dispatch
def cmd_verify_bs(scenario, utility, wealth, tol, nodes, seed, out, fmt,
                  threads, sigma, horizon, bound, rtol) -> int:
    """Solve the lognormal instance and compare against closed forms."""
    _json_only(fmt)
    _set_threads(threads)
    if rtol is None:
        rtol = 1e-4 if nodes >= 256 else 1e-3
    oracle = BSOracle(sigma=sigma, T=horizon, A=bound, x=wealth)
    market, cset = bs_instance(oracle, nodes=nodes)
    uf = _parse_utility(utility)
    cf = bs_closed_form(oracle)
    sol = solve_robust(market, cset, uf, wealth, tol=tol, seed=seed)
    s_nodes = market.observable("S_T")
    z_exp = cf["Z_hat"](s_nodes)
    x_exp = cf["X_hat"](s_nodes)
    rows = [
        ("u", sol.u_value, cf["u"]),
        ("y_hat", sol.y_hat, cf["y_hat"]),
        ("v_at_y_hat", sol.v_at_y_hat, cf["u"] - wealth * cf["y_hat"]),
        ("Z_hat_sup", float(np.abs(sol.Z_hat - z_exp).max()), 0.0,
         float(np.max(np.abs(sol.Z_hat - z_exp) / np.abs(z_exp)))),
        ("X_hat_sup", float(np.abs(sol.X_hat - x_exp).max()), 0.0,
         float(np.max(np.abs(sol.X_hat - x_exp) / np.abs(x_exp)))),
    ]
    comparisons = []
    for row in rows:
        if len(row) == 3:
            name, got, want = row
            abs_err = abs(got - want)
            rel_err = abs_err / max(1e-300, abs(want))
        else:
            name, got, want, rel_err = row
            abs_err = got
        comparisons.append({"name": name, "computed": got, "expected": want,
                            "abs_err": abs_err, "rel_err": rel_err,
                            "pass": rel_err <= rtol})
    max_rel = max(c["rel_err"] for c in comparisons)
    all_pass = all(c["pass"] for c in comparisons)
    click.echo(f"{'comparison':<12} {'abs_err':>12} {'rel_err':>12} status",
               err=True)
    for c in comparisons:
        status = "PASS" if c["pass"] else "FAIL"
        click.echo(f"{c['name']:<12} {c['abs_err']:>12.3e} "
                   f"{c['rel_err']:>12.3e} {status}", err=True)
    doc = {
        "config": _config_echo("verify-bs", sigma=sigma, T=horizon, A=bound,
                               wealth=wealth, nodes=nodes, rtol=rtol,
                               utility=utility, tol=tol, seed=seed,
                               threads=threads),
        "comparisons": comparisons,
        "max_rel_err": max_rel,
        "pass": all_pass,
        "version": __version__,
    }
    _emit_json(doc, out)
    return 0 if all_pass else 3


@main.command("minimax")
@_common_options
@click.option("--gap-tol", type=float, default=1e-4, show_default=True,
              help="Gap tolerance for reporting a saddle point.")
@_dispatch
def cmd_minimax(scenario, utility, wealth, tol, nodes, seed, out, fmt,
                threads, gap_tol) -> int:
    """Two-sided minimax check over the scenario's density family."""
    _require_scenario(scenario)
    _json_only(fmt)
    _set_threads(threads)
    market, _ = load_scenario(scenario, default_nodes=nodes)
    doc_raw = _scenario_doc(scenario)
    dens = doc_raw.get("densities")
    if not isinstance(dens, list) or not dens:
        raise ScenarioError(
            f"field 'densities' (list of density vectors) is required "
            f"in {scenario}")
    uf = _parse_utility(utility)
    res = minimax_check(market, dens, uf, wealth, tol=gap_tol, seed=seed)
    saddle = None
    if res["saddle"] is not None:
        x_star, j_star = res["saddle"]
        saddle = {"X": x_star, "j": j_star}
    doc = {
        "config": _config_echo("minimax", scenario=scenario, utility=utility,
                               wealth=wealth, gap_tol=gap_tol, seed=seed,
                               threads=threads),
        "minimax": {"sup_inf": res["sup_inf"], "inf_sup": res["inf_sup"],
                    "gap": res["gap"], "saddle": saddle},
        "version": __version__,
    }
    _emit_json(doc, out)
    return 0


@main.command("norms")
@_common_options
@_dispatch
def cmd_norms(scenario, utility, wealth, tol, nodes, seed, out, fmt,
              threads) -> int:
    """Modular value and both Orlicz norms for scenario 'vectors'."""
    _require_scenario(scenario)
    _json_only(fmt)
    market, _ = load_scenario(scenario, default_nodes=nodes)
    doc_raw = _scenario_doc(scenario)
    vectors = doc_raw.get("vectors")
    if vectors is None:
        raise ScenarioError(
            f"field 'vectors' is required in {scenario} for norms")
    if vectors and isinstance(vectors[0], (int, float)):
        vectors = [vectors]
    uf = _parse_utility(utility)
    mod = Modular(market, uf, "EtaStar")
    results = []
    for idx, vec in enumerate(vectors):
        z = np.asarray(vec, dtype=float)
        results.append({
            "index": idx,
            "modular_value": modular_value(mod, z),
            "luxemburg": luxemburg_norm(mod, z),
            "amemiya": amemiya_norm(mod, z),
        })
    doc = {
        "config": _config_echo("norms", scenario=scenario, utility=utility,
                               threads=threads),
        "norms": results,
        "version": __version__,
    }
    _emit_json(doc, out)
    return 0


@main.command("vcurve")
@_common_options
@click.option("--y", "y_list", type=str, required=True,
              help="Comma-separated strictly increasing positive y grid.")
@_dispatch
def cmd_vcurve(scenario, utility, wealth, tol, nodes, seed, out, fmt,
               threads, y_list) -> int:
    """Dual value v(y) on a y grid."""
    _require_scenario(scenario)
    _set_threads(threads)
    market, cset = load_scenario(scenario, default_nodes=nodes)
    uf = _parse_utility(utility)
    try:
        y_grid = np.array([float(tok) for tok in y_list.split(",") if tok])
    except ValueError:
        raise ValidationError(f"bad --y list {y_list!r}") from None
    curve = dual_value_curve(market, cset, uf, y_grid, tol=tol, seed=seed)
    v_vals = [v for _, v in curve]
    cfg = _config_echo("vcurve", scenario=scenario, utility=utility,
                       tol=tol, seed=seed, y=y_list, threads=threads)
    if fmt == "csv":
        lines = [f"# version={__version__}", "y,v"]
        lines += [f"{yy!r},{vv!r}" for yy, vv in zip(y_grid.tolist(), v_vals)]
        _emit("\n".join(lines) + "\n", out)
        return 0
    doc = {"config": cfg,
           "vcurve": {"y": y_grid, "v": v_vals},
           "version": __version__}
    _emit_json(doc, out)
    return 0


@main.command("feasibility")
@_common_options
@_dispatch
def cmd_feasibility(scenario, utility, wealth, tol, nodes, seed, out, fmt,
                    threads) -> int:
    """LP feasibility and strict feasibility of the constraint polytope."""
    _require_scenario(scenario)
    _json_only(fmt)
    market, cset = load_scenario(scenario, default_nodes=nodes)
    report = feasibility_check(market, cset, strict=True)
    doc = {
        "config": _config_echo("feasibility", scenario=scenario,
                               threads=threads),
        "feasibility": {
            "feasible": report.feasible,
            "strictly_feasible": report.strictly_feasible,
            "max_min_slack": report.max_min_slack,
            "witness": report.witness,
        },
        "version": __version__,
    }
    _emit_json(doc, out)
    return 0 if report.feasible else 2


@main.command("gen-scenario")
@click.option("--sigma", type=float, default=0.5, show_default=True)
@click.option("--horizon", "--T", "horizon", type=float, default=1.0,
              show_default=True, help="Time horizon T.")
@click.option("--s0", type=float, default=1.0, show_default=True)
@click.option("--nodes", type=int, default=64, show_default=True)
@click.option("--constraint", "constraints", type=str, multiple=True,
              help="Constraint as <observable>:<ge|eq>:<bound>; repeatable.")
@click.option("--out", type=str, default=None)
@_dispatch
def cmd_gen_scenario(sigma, horizon, s0, nodes, constraints, out) -> int:
    """Write a lognormal generator scenario file."""
    clist = []
    for spec in constraints:
        parts = spec.split(":")
        if len(parts) != 3 or parts[1] not in ("ge", "eq"):
            raise ValidationError(
                f"bad --constraint {spec!r}; expected <obs>:<ge|eq>:<bound>")
        if parts[0] != "S_T":
            raise ValidationError(
                f"generator scenarios only define observable 'S_T', "
                f"got {parts[0]!r}")
        try:
            bound = float(parts[2])
        except ValueError:
            raise ValidationError(
                f"bad bound in --constraint {spec!r}") from None
        Constraint(parts[0], parts[1], bound)
        clist.append({"observable": parts[0], "kind": parts[1],
                      "bound": bound})
    doc = {
        "generator": {"type": "lognormal", "sigma": sigma, "T": horizon,
                      "s0": s0, "nodes": nodes},
        "constraints": clist,
    }
    _emit_json(doc, out)
    return 0


if __name__ == "__main__":
    main()
