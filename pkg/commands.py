"""Command implementations and dispatch for the CLI."""
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from config import VERSION, RunConfig, parse_fraction
from errors import DipolarStabError, InvalidInput
from functionals import PhysicalParams, TrapSpec, effective_params
from gn_solver import SolverOptions, compute_gn_constant
from grid_spectral import make_grid
from ground_state import GroundStateOptions, minimize_trapped
from kernels import fab_symbol, high_freq_symbol, quasi2d_symbol
from oracles.townes import gn_constant_oracle, townes_profile
from results import ResultRecord
from stability import (
    VerdictCase,
    classify,
    classify_sweep,
    collapse_scan,
    log_spaced_lengths,
)

logger = logging.getLogger(__name__)


class CommandOutput(NamedTuple):
    outputs: Dict[str, Any]
    tables: Dict[str, pd.DataFrame]
    exit_code: int = 0
    trail: Optional[List[List[float]]] = None


# Config -> library objects

def trap_from_config(cfg: RunConfig) -> TrapSpec:
    if cfg.trap == "quartic":
        return TrapSpec(kind="quartic", c=cfg.quartic_c)
    return TrapSpec(kind="harmonic", omega1=cfg.omega1, omega2=cfg.omega2)


def params_from_config(cfg: RunConfig) -> PhysicalParams:
    trap = trap_from_config(cfg)
    fraction = cfg.n3sq_fraction()
    if fraction is not None:
        return PhysicalParams(cfg.beta, cfg.lam, trap=trap, n3sq_fraction=fraction,
                              exact_borderline=cfg.exact_borderline)
    return PhysicalParams(cfg.beta, cfg.lam, n3sq=cfg.n3sq_value(), trap=trap,
                          exact_borderline=cfg.exact_borderline)


def solver_options(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(
        tol_rel=cfg.tol_rel,
        tol_grad=cfg.tol_grad,
        max_iter=cfg.max_iter,
        refine_tol=cfg.refine_tol,
        scenes=tuple((int(n), float(L)) for n, L in cfg.scenes),
        max_nodes=cfg.max_nodes,
        seed=cfg.seed,
    )


def _grid_study_table(trail) -> pd.DataFrame:
    return pd.DataFrame([{"n": n, "L": L, "C": c} for n, L, c in trail], columns=["n", "L", "C"])


# Commands

def run_gn_constant(cfg: RunConfig) -> CommandOutput:
    if cfg.a is not None:
        a, b = cfg.a, cfg.b
    else:
        ab = effective_params(params_from_config(cfg))
        a, b = ab.a, ab.b
    result = compute_gn_constant(a, b, solver_options(cfg))
    outputs = result.summary()
    if b == 0:
        outputs["townes_reference"] = a * gn_constant_oracle()
    return CommandOutput(outputs, {"grid_study": _grid_study_table(result.grid_study)}, 0,
                         [list(s) for s in result.grid_study])


def _read_sweep(path: Path, cfg: RunConfig) -> List[PhysicalParams]:
    if not Path(path).exists():
        raise InvalidInput(f"Sweep file not found: {path}", {"path": str(path)})
    frame = pd.read_csv(path, dtype=str)
    missing = {"beta", "lambda"} - set(frame.columns)
    if missing or not {"n3", "n3sq"} & set(frame.columns):
        raise InvalidInput("sweep file needs columns beta, lambda and n3 or n3sq", {"columns": list(frame.columns)})
    trap = trap_from_config(cfg)
    points = []
    for row in frame.itertuples(index=False):
        row = row._asdict()
        beta, lam = float(row["beta"]), float(row["lambda"])
        if "n3sq" in row and isinstance(row["n3sq"], str):
            points.append(PhysicalParams(beta, lam, trap=trap, n3sq_fraction=parse_fraction(row["n3sq"])))
        else:
            points.append(PhysicalParams.from_n3(beta, lam, float(row["n3"]), trap))
    return points


def run_stability(cfg: RunConfig) -> CommandOutput:
    opts = solver_options(cfg)
    if cfg.sweep is not None:
        points = _read_sweep(cfg.sweep, cfg)
        verdicts = classify_sweep(points, cfg.tol, opts, cfg.analyze_borderline)
        rows = [{"beta": p.beta, "lambda": p.lam, "n3sq": p.n3sq, **v.as_dict()} for p, v in zip(points, verdicts)]
        table = pd.DataFrame(rows)
        counts = table["case"].value_counts().sort_index().to_dict()
        exit_code = 3 if any(v.case is VerdictCase.INDETERMINATE for v in verdicts) else 0
        return CommandOutput({"points": len(points), "cases": counts}, {"verdicts": table}, exit_code)

    verdict = classify(params_from_config(cfg), cfg.tol, opts, cfg.analyze_borderline)
    return CommandOutput({"verdict": verdict.as_dict()}, {}, verdict.exit_code)


def run_ground_state(cfg: RunConfig) -> CommandOutput:
    grid = make_grid(cfg.n1, cfg.n2, cfg.L1, cfg.L2)
    opts = GroundStateOptions(
        tau0=cfg.tau0,
        tau_max=cfg.tau_max,
        max_iter=cfg.max_iter,
        tol_energy=cfg.tol_energy,
        tol_residual=cfg.tol_residual,
        collapse_factor=cfg.collapse_factor,
        energy_floor=cfg.energy_floor,
    )
    result = minimize_trapped(params_from_config(cfg), grid, opts)
    history = pd.DataFrame({
        "iteration": np.arange(len(result.L_history)),
        "L": result.L_history,
        "energy": result.energy_history,
    })
    outputs = result.summary()
    outputs["L_history"] = result.L_history
    if result.collapse_detected:
        exit_code = 4
    elif not result.converged:
        exit_code = 5
    else:
        exit_code = 0
    return CommandOutput(outputs, {"history": history}, exit_code)


def run_collapse_scan(cfg: RunConfig) -> CommandOutput:
    p = params_from_config(cfg)
    ab = effective_params(p)
    seed_result = compute_gn_constant(ab.a, ab.b, solver_options(cfg))
    L_values = log_spaced_lengths(cfg.L_max, cfg.L_min, cfg.L_count)
    scan = collapse_scan(p, seed_result.optimizer, L_values, cfg.min_box, cfg.scan_max_nodes, cfg.fit_terms)
    columns = ["L", "energy", "kinetic", "potential", "quartic", "dipolar", "nodes"]
    rows = pd.DataFrame([{**r, "energy": r["total"]} for r in scan.rows])[columns]
    fit = pd.DataFrame({
        "coefficient": list(scan.fit_names),
        "value": list(scan.fit),
        "stderr": list(scan.fit_errors),
    })
    outputs = {
        "C": seed_result.C,
        "C_error": seed_result.error,
        "c2": scan.c2,
        "clog": scan.clog,
        "c0": scan.c0,
        "fit_residual": scan.fit_residual,
        "predicted_clog": scan.predicted_clog,
        "predicted_c2": 0.5 * (1 - seed_result.C),
    }
    return CommandOutput(outputs, {"scan": rows, "fit": fit}, 0, [list(s) for s in seed_result.grid_study])


def run_symbol_dump(cfg: RunConfig) -> CommandOutput:
    grid = make_grid(cfg.n1, cfg.n2, cfg.L1, cfg.L2)
    if cfg.kind == "high_freq":
        symbol = high_freq_symbol(grid)
    elif cfg.kind == "fab":
        symbol = fab_symbol(grid, 1.0 if cfg.a is None else cfg.a, 0.0 if cfg.b is None else cfg.b)
    else:
        symbol = quasi2d_symbol(grid, params_from_config(cfg).n3sq)
    XI1, XI2 = grid.xi_mesh
    order = np.lexsort((XI2.ravel(), XI1.ravel()))
    table = pd.DataFrame({
        "xi1": XI1.ravel()[order],
        "xi2": XI2.ravel()[order],
        "value": symbol.values.ravel()[order],
    })
    lo, hi = symbol.value_range()
    return CommandOutput({"kind": symbol.kind, "rows": len(table), "min": lo, "max": hi}, {"symbol": table})


def run_townes(cfg: RunConfig) -> CommandOutput:
    profile = townes_profile()
    outputs = {"q0": profile.q0, "mass": profile.mass, "r_cut": profile.r_cut, "C_GN": profile.gn_constant}
    return CommandOutput(outputs, {})


COMMAND_FUNCTIONS: Dict[str, Callable[[RunConfig], CommandOutput]] = {
    "gn-constant": run_gn_constant,
    "stability": run_stability,
    "ground-state": run_ground_state,
    "collapse-scan": run_collapse_scan,
    "symbol-dump": run_symbol_dump,
    "townes": run_townes,
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def run_command(cfg: RunConfig) -> ResultRecord:
    """Dispatch a validated config to its command.

    Module errors never escape: they are stored in the record together
    with their exit code.

    Args:
        cfg: Validated run configuration

    Returns:
        ResultRecord with status "ok" or "error"
    """
    record = ResultRecord(command=cfg.command, config=cfg.echo(), provenance={"version": VERSION})
    started = _now() if cfg.timestamps else None
    func = COMMAND_FUNCTIONS[cfg.command]
    try:
        out = func(cfg)
        record.outputs = out.outputs
        record.tables = out.tables
        record.exit_code = out.exit_code
        if out.trail:
            record.provenance["grid_refinement"] = out.trail
    except DipolarStabError as e:
        logger.error("%s failed: %s", cfg.command, e.message)
        record.status = "error"
        record.exit_code = e.exit_code
        record.error = e.to_dict()
    except Exception as e:
        logger.exception("unexpected failure in %s", cfg.command)
        record.status = "error"
        record.exit_code = 6
        record.error = {"type": type(e).__name__, "message": str(e), "details": {}}
    if cfg.timestamps:
        record.timestamps = {"started": started, "finished": _now()}
    return record
