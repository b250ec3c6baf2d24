"""Command-line interface.

Commands:
  solve              embed, run the interior-point oracle, refine, extract
  solve-ipm          interior-point stage only (no outer refinement)
  embed-only         build the self-dual embedding and report its start
  analyze-condition  track cond(M) of the Newton systems along a run
  report             render CSV tables and figures from a JSON run log

All numeric output goes into a JSON run log (17 significant digits,
written atomically); diagnostics go to standard error.  Exit codes:
0 success, 2 convergence failure, 3 malformed input.  The environment
variable REFINE_SDO_LOG={error,warn,info,debug} sets verbosity.
"""

from __future__ import annotations

import json
import logging
import math
import os
import sys
import tempfile
import time

import click
import numpy as np

from . import __version__
from .driver import SolveResult, solve_canonical
from .embedding import build_embedding, constraint_residual_norm, initial_point
from .errors import (
    IoError, MaxIterations, NeighborhoodEscape, NonConverged, OracleFailure,
    ParseError,
)
from .ifipm import IpmConfig, IterationTrace, ipm_solve_selfdual
from .model import Form, SdoProblem, standard_to_canonical
from .newton import ScalingChoice
from .refine import IrTrace, Variant
from .sdpa import load_sdpa

log = logging.getLogger("refine_sdo.cli")

_EXIT_CONVERGENCE = 2
_EXIT_PARSE = 3


# -- JSON with pinned float formatting -------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return '"nan"'
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, dict):
        items = (f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in value.items())
        return "{" + ", ".join(items) + "}"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_log(obj: dict) -> str:
    """Deterministic JSON with every real at 17 significant digits."""
    return _fmt(obj) + "\n"


def write_atomic(path: str, payload: str):
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".refine-sdo-")
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# -- trace serialization -----------------------------------------------------------


def _ipm_rows(trace: IterationTrace, with_timing: bool):
    rows = []
    for r in trace.iterations:
        d = r.to_dict()
        if with_timing:
            d["wall_time"] = r.wall_time
        rows.append(d)
    return rows


def _ir_rows(trace: IrTrace, with_timing: bool):
    rows = []
    for r in trace.iterations:
        d = r.to_dict()
        if with_timing:
            d["wall_time"] = r.wall_time
        rows.append(d)
    return rows


def _problem_stats(prob: SdoProblem) -> dict:
    return {
        "m": prob.m,
        "n": prob.n,
        "block_sizes": list(prob.block_sizes),
        "form": prob.form.value,
        "norm_b": float(np.linalg.norm(prob.rhs)) if prob.m else 0.0,
        "norm_C": prob.objective.norm_fro(),
    }


def emit_trace(log_obj: dict, path: str | None):
    """Write (or print) the run log; schema-stable, deterministic."""
    payload = dumps_log(log_obj)
    if path:
        write_atomic(path, payload)
    else:
        click.echo(payload, nl=False)


# -- option plumbing ---------------------------------------------------------------


def _setup_logging():
    level = os.environ.get("REFINE_SDO_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        stream=sys.stderr, level=levels.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")


def _common_options(fn):
    opts = [
        click.option("--eps-oracle", type=float, default=1e-2, show_default=True,
                     help="Gap precision of each oracle call."),
        click.option("--eps-final", type=float, default=1e-8, show_default=True,
                     help="Target gap of the refined solution."),
        click.option("--gamma", type=float, default=0.05, show_default=True,
                     help="Central-path neighborhood radius."),
        click.option("--delta", type=float, default=0.05, show_default=True,
                     help="Per-iteration mu reduction scale."),
        click.option("--beta", type=float, default=None,
                     help="Inexact-solve residual budget (default: derived)."),
        click.option("--scaling", type=click.Choice(["nt", "hkm", "aho"]),
                     default="nt", show_default=True),
        click.option("--solver", type=click.Choice(["auto", "direct", "iterative"]),
                     default="auto", show_default=True),
        click.option("--ir", "ir_variant",
                     type=click.Choice(["feasible", "infeasible-ni", "infeasible-ii"]),
                     default="feasible", show_default=True,
                     help="Outer refinement variant."),
        click.option("--rho", type=float, default=10.0, show_default=True,
                     help="Scale-growth cap of the infeasible variants."),
        click.option("--trace-out", type=click.Path(dir_okay=False), default=None,
                     help="Write the JSON run log here instead of stdout."),
        click.option("--form", type=click.Choice(["canonical", "standard"]),
                     default="canonical", show_default=True,
                     help="Reading of the constraint rows."),
        click.option("--analyze-condition", "track_kappa", is_flag=True,
                     help="Record cond(M) at every interior-point iteration."),
        click.option("--no-timing", is_flag=True,
                     help="Omit wall-clock fields (comparison mode)."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _load(path: str, form: str) -> SdoProblem:
    prob = load_sdpa(path, Form.CANONICAL if form == "canonical" else Form.STANDARD)
    if prob.form is Form.STANDARD:
        prob, _, _ = standard_to_canonical(prob)
    return prob


def _config_echo(**kw) -> dict:
    return {k: (v.value if hasattr(v, "value") else v) for k, v in kw.items()}


def _base_cfg(gamma, delta, beta, scaling, solver, track_kappa) -> IpmConfig:
    return IpmConfig(gamma=gamma, delta=delta, beta=beta,
                     scaling=ScalingChoice(scaling), solver=solver,
                     track_kappa=track_kappa)


def _result_dict(res: SolveResult) -> dict:
    return {
        "status": res.status,
        "gap": res.gap,
        "primal_residual": res.primal_residual,
        "dual_residual": res.dual_residual,
        "objective_primal": res.objective_primal,
        "objective_dual": res.objective_dual,
        "tau": res.tau,
        "theta": res.theta,
        "embedding_gap": res.embedding_gap,
        "outer_rounds": res.outer_rounds,
    }


@click.group()
@click.version_option(version=__version__, prog_name="refine-sdo")
def main():
    """High-precision semidefinite optimization by iterative refinement."""
    _setup_logging()


@main.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@_common_options
def solve(input_path, eps_oracle, eps_final, gamma, delta, beta, scaling, solver,
          ir_variant, rho, trace_out, form, track_kappa, no_timing):
    """Full pipeline: embed, solve, refine, extract."""
    t_start = time.perf_counter()
    try:
        prob = _load(input_path, form)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(_EXIT_PARSE)
    cfg = _base_cfg(gamma, delta, beta, scaling, solver, track_kappa)
    log_obj = {
        "tool": {"name": "refine-sdo", "version": __version__, "command": "solve"},
        "config": _config_echo(
            eps_oracle=eps_oracle, eps_final=eps_final, gamma=gamma, delta=delta,
            beta=beta, scaling=scaling, solver=solver, ir=ir_variant, rho=rho,
            form=form),
        "problem": _problem_stats(prob),
    }
    try:
        if ir_variant == "feasible":
            res = solve_canonical(prob, eps_oracle=eps_oracle, eps_final=eps_final,
                                  ipm_cfg=cfg)
            log_obj["ipm_iterations"] = _ipm_rows(res.ipm_trace, not no_timing)
            log_obj["ir_iterations"] = (
                _ir_rows(res.ir_trace, not no_timing) if res.ir_trace else [])
            log_obj["result"] = _result_dict(res)
            ok = res.status == "optimal" and res.gap <= eps_final * prob.data_scale()
            if res.status != "optimal":
                ok = True        # the trichotomy answered; report it
        else:
            from .driver import solve_with_infeasible_refinement
            variant = Variant(ir_variant)
            pt, ir_trace = solve_with_infeasible_refinement(
                prob, variant, eps_oracle=eps_oracle, eps_final=eps_final,
                rho=rho, ipm_cfg=cfg)
            from .refine import residual_ii
            from .model import canonical_to_standard
            std, _, _ = canonical_to_standard(prob)
            log_obj["ipm_iterations"] = []
            log_obj["ir_iterations"] = _ir_rows(ir_trace, not no_timing)
            log_obj["result"] = {
                "status": "optimal",
                "gap": pt.X.dot(pt.S),
                "combined_residual": residual_ii(std, pt),
                "objective_primal": std.objective.dot(pt.X),
                "objective_dual": float(std.rhs @ pt.y),
            }
            ok = True
    except (OracleFailure, MaxIterations, NeighborhoodEscape, NonConverged) as exc:
        click.echo(f"convergence failure: {exc}", err=True)
        log_obj["result"] = {"status": "failed", "error": str(exc)}
        if not no_timing:
            log_obj["timing"] = {"total_seconds": time.perf_counter() - t_start}
        emit_trace(log_obj, trace_out)
        sys.exit(_EXIT_CONVERGENCE)
    if not no_timing:
        log_obj["timing"] = {"total_seconds": time.perf_counter() - t_start}
    emit_trace(log_obj, trace_out)
    sys.exit(0 if ok else _EXIT_CONVERGENCE)


@main.command("solve-ipm")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@_common_options
def solve_ipm(input_path, eps_oracle, eps_final, gamma, delta, beta, scaling,
              solver, ir_variant, rho, trace_out, form, track_kappa, no_timing):
    """Interior-point stage only, to the oracle precision (no refinement)."""
    t_start = time.perf_counter()
    try:
        prob = _load(input_path, form)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(_EXIT_PARSE)
    cfg = _base_cfg(gamma, delta, beta, scaling, solver, track_kappa)
    cfg.target_eps = eps_oracle
    emb = build_embedding(prob)
    log_obj = {
        "tool": {"name": "refine-sdo", "version": __version__, "command": "solve-ipm"},
        "config": _config_echo(
            eps_oracle=eps_oracle, gamma=gamma, delta=delta, beta=beta,
            scaling=scaling, solver=solver, form=form),
        "problem": _problem_stats(prob),
    }
    try:
        pt, trace = ipm_solve_selfdual(emb, cfg)
    except (MaxIterations, NeighborhoodEscape, NonConverged) as exc:
        click.echo(f"convergence failure: {exc}", err=True)
        log_obj["result"] = {"status": "failed", "error": str(exc)}
        emit_trace(log_obj, trace_out)
        sys.exit(_EXIT_CONVERGENCE)
    log_obj["ipm_iterations"] = _ipm_rows(trace, not no_timing)
    log_obj["ir_iterations"] = []
    log_obj["result"] = {
        "status": "ipm-only",
        "embedding_gap": pt.gap(),
        "mu": pt.mu(),
        "tau": pt.tau,
        "theta": pt.theta,
        "constraint_residual": constraint_residual_norm(emb, pt),
    }
    if not no_timing:
        log_obj["timing"] = {"total_seconds": time.perf_counter() - t_start}
    emit_trace(log_obj, trace_out)
    sys.exit(0)


@main.command("embed-only")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@_common_options
def embed_only(input_path, eps_oracle, eps_final, gamma, delta, beta, scaling,
               solver, ir_variant, rho, trace_out, form, track_kappa, no_timing):
    """Build the self-dual embedding and report its trivial start."""
    try:
        prob = _load(input_path, form)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(_EXIT_PARSE)
    emb = build_embedding(prob)
    pt = initial_point(emb)
    log_obj = {
        "tool": {"name": "refine-sdo", "version": __version__, "command": "embed-only"},
        "config": _config_echo(form=form),
        "problem": _problem_stats(prob),
        "ipm_iterations": [],
        "ir_iterations": [],
        "result": {
            "status": "embedded",
            "dimension": emb.complementarity_dim,
            "norm_bbar": float(np.linalg.norm(emb.bbar)),
            "norm_Cbar": emb.Cbar.norm_fro(),
            "obar": emb.obar,
            "initial_mu": pt.mu(),
            "initial_residual": constraint_residual_norm(emb, pt),
        },
    }
    emit_trace(log_obj, trace_out)
    sys.exit(0)


@main.command("analyze-condition")
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@_common_options
def analyze_condition(input_path, eps_oracle, eps_final, gamma, delta, beta,
                      scaling, solver, ir_variant, rho, trace_out, form,
                      track_kappa, no_timing):
    """Run the interior-point stage recording cond(M) per iteration."""
    try:
        prob = _load(input_path, form)
    except ParseError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(_EXIT_PARSE)
    cfg = _base_cfg(gamma, delta, beta, scaling, solver, True)
    cfg.target_eps = eps_oracle
    emb = build_embedding(prob)
    log_obj = {
        "tool": {"name": "refine-sdo", "version": __version__,
                 "command": "analyze-condition"},
        "config": _config_echo(eps_oracle=eps_oracle, scaling=scaling, form=form),
        "problem": _problem_stats(prob),
    }
    try:
        pt, trace = ipm_solve_selfdual(emb, cfg)
    except (MaxIterations, NeighborhoodEscape, NonConverged) as exc:
        click.echo(f"convergence failure: {exc}", err=True)
        log_obj["result"] = {"status": "failed", "error": str(exc)}
        emit_trace(log_obj, trace_out)
        sys.exit(_EXIT_CONVERGENCE)
    log_obj["ipm_iterations"] = _ipm_rows(trace, not no_timing)
    log_obj["ir_iterations"] = []
    log_obj["result"] = {
        "status": "analyzed",
        "condition_table": [{"mu": r.mu, "kappa": r.kappa} for r in trace.iterations],
    }
    emit_trace(log_obj, trace_out)
    sys.exit(0)


@main.command()
@click.argument("trace_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default="report",
              show_default=True, help="Directory for figures and CSV tables.")
@click.option("--stem", default="run", show_default=True,
              help="Filename prefix for the rendered artifacts.")
def report(trace_path, out_dir, stem):
    """Render figures and delimited tables from a JSON run log."""
    from .report import render_report
    try:
        with open(trace_path) as fh:
            log_obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"cannot read trace: {exc}", err=True)
        sys.exit(_EXIT_PARSE)
    written = render_report(log_obj, out_dir, stem)
    for path in written:
        click.echo(path, err=True)
    sys.exit(0)


if __name__ == "__main__":
    main()
