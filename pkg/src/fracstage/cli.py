"""Command-line experiment runner.

Verbs:

* ``run``: multistage training for every ``(alpha, r)`` cell of a config.
* ``fdm``: finite-difference convergence sweep over ``fdm_N``.
* ``check``: run the acceptance suite with pytest.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import subprocess
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bench import get_benchmark
from .config import ConfigError, RunConfig, parse_config
from .fdm import fdm_solve, grid_error_norms
from .l1frac import build_l1_table, solve_scalar_l1
from .mesh import build_spatial, build_temporal
from .specfun import gamma
from .staging import MultistageConfig, run_multistage
from .svg import heatmap, line_plot
from .train import write_history_csv

__all__ = ["main", "run_table_experiment", "run_fdm_oracle", "RUN_COLUMNS", "FDM_COLUMNS"]

log = logging.getLogger("fracstage")

RUN_COLUMNS = ("r", "alpha", "stage", "l2_rel_error", "final_loss", "eps_r", "f_x", "epsilon", "iters", "wall_time_s")
FDM_COLUMNS = ("alpha", "r", "M", "N", "max_abs_err", "l2_rel_err", "observed_order")


def fmt(v) -> str:
    """17 significant digits for reals; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def _cell_tag(alpha: float, r: float) -> str:
    return f"alpha{alpha:g}_r{r:g}"


def _run_cell(args):
    config, alpha, r, out = args
    t0 = time.perf_counter()
    try:
        problem = get_benchmark(config.problem, alpha)
        ms = MultistageConfig(r=r, stages=config.stages, shift=config.shift, eval_grid=config.eval_grid,
                               correction_data=config.correction_data)
        comp, records = run_multistage(problem, ms)
    except Exception as exc:  # one failed cell must not abort the sweep
        log.error("cell alpha=%g r=%g failed: %s", alpha, r, exc)
        return {"alpha": alpha, "r": r, "status": "error", "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc(), "rows": [], "stages": []}
    rows = []
    hist_dir = out / "history"
    hist_dir.mkdir(parents=True, exist_ok=True)
    tag = _cell_tag(alpha, r)
    for rec in records:
        rows.append({
            "r": r, "alpha": alpha, "stage": rec.stage, "l2_rel_error": rec.l2_rel_error,
            "final_loss": rec.final_loss, "eps_r": rec.eps_r, "f_x": rec.f_x, "epsilon": rec.epsilon,
            "iters": rec.iterations, "wall_time_s": rec.wall_time_s,
        })
        hist = rec.report.history
        write_history_csv(hist, hist_dir / f"{tag}_stage{rec.stage}.csv")
        if config.plots:
            svg = line_plot([(f"stage {rec.stage}", [h.iter for h in hist], [h.loss for h in hist])],
                            title=f"loss, {tag} stage {rec.stage}")
            (out / f"loss_{tag}_stage{rec.stage}.svg").write_text(svg)
    if config.plots and problem.exact is not None:
        x = np.linspace(0.0, problem.l, 101)
        t = np.linspace(0.0, problem.T, 101)[1:]
        tt, xx = np.meshgrid(t, x, indexing="ij")
        u = comp(xx, tt) + (problem.phi(xx) if config.shift else 0.0)
        err = u - problem.exact(xx, tt)
        (out / f"error_{tag}.svg").write_text(heatmap(err, title=f"|error|, {tag}", cell=4))
    return {"alpha": alpha, "r": r, "status": "ok", "rows": rows,
            "stages": [rec.to_json() for rec in records], "wall_time_s": time.perf_counter() - t0}


def run_table_experiment(config: RunConfig, out: Path, workers: int = 1) -> int:
    """Multistage sweep; returns the exit code (0 when every cell succeeded)."""
    if config.problem not in ("exp", "poly"):
        raise ConfigError(f"problem: {config.problem!r} is only available for the fdm verb")
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config, a, r, out) for a, r in config.cells()]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    rows = [row for res in results for row in res["rows"]]
    _write_csv(out / "results.csv", RUN_COLUMNS, rows)
    summary = {
        "problem": config.problem,
        "config": config.source,
        "cells": [{k: v for k, v in res.items() if k != "rows"} for res in results],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return 0 if all(res["status"] == "ok" for res in results) else 1


def _power_study(alpha: float, r: float, Ns):
    """Scalar ``D^alpha u = Gamma(1+alpha)`` with exact solution ``t^alpha``."""
    rows = []
    for N in Ns:
        mesh = build_temporal(1.0, N, r)
        u = solve_scalar_l1(build_l1_table(mesh, alpha), gamma(1.0 + alpha))
        ue = mesh.t**alpha
        diff = u - ue
        rows.append((0, N, float(np.abs(diff).max()),
                     math.sqrt(float(np.sum(diff[1:] ** 2)) / float(np.sum(ue[1:] ** 2)))))
    return rows


def run_fdm_oracle(config: RunConfig, out: Path) -> int:
    """Convergence sweep of the reference solver; writes ``fdm.csv``."""
    out.mkdir(parents=True, exist_ok=True)
    rows, cells = [], []
    for alpha, r in config.cells():
        try:
            if config.problem == "tpow":
                raw = _power_study(alpha, r, config.fdm_N)
            else:
                problem = get_benchmark(config.problem, alpha)
                grid = build_spatial(problem.l, config.fdm_M)
                raw = []
                for N in config.fdm_N:
                    mesh = build_temporal(problem.T, N, r)
                    sol = fdm_solve(problem, grid, mesh)
                    raw.append((config.fdm_M, N, *grid_error_norms(sol, problem.exact)))
        except Exception as exc:
            log.error("fdm cell alpha=%g r=%g failed: %s", alpha, r, exc)
            cells.append({"alpha": alpha, "r": r, "status": "error", "error": f"{type(exc).__name__}: {exc}"})
            continue
        prev = None
        for M, N, emax, el2 in raw:
            order = None
            if prev is not None and prev[1] > 0 and emax > 0:
                order = math.log(prev[1] / emax) / math.log(N / prev[0])
            rows.append({"alpha": alpha, "r": r, "M": M, "N": N, "max_abs_err": emax,
                         "l2_rel_err": el2, "observed_order": order})
            prev = (N, emax)
        cells.append({"alpha": alpha, "r": r, "status": "ok"})
    _write_csv(out / "fdm.csv", FDM_COLUMNS, rows)
    (out / "fdm_summary.json").write_text(json.dumps({"problem": config.problem, "cells": cells}, indent=2) + "\n")
    return 0 if all(c["status"] == "ok" for c in cells) else 1


def _check(quick: bool) -> int:
    suite = Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"
    if not suite.is_file():
        print(f"acceptance suite not found at {suite}", file=sys.stderr)
        return 2
    cmd = [sys.executable, "-m", "pytest", "-s", "-q", str(suite)]
    if quick:
        cmd += ["-m", "not slow"]
    return subprocess.call(cmd)


def _setup_logging() -> None:
    level = os.environ.get("FRACSTAGE_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        print(f"FRACSTAGE_LOG must be one of {', '.join(levels)}; got {level!r}", file=sys.stderr)
        level = "error"
    logging.basicConfig(level=levels[level], format="%(asctime)s %(name)s %(levelname)s %(message)s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracstage", description="Multistage fractional PINN experiments.")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, text in (("run", "multistage sweep"), ("fdm", "finite-difference oracle sweep")):
        s = sub.add_parser(verb, help=text)
        s.add_argument("--config", required=True, help="config file")
        s.add_argument("--out", help="output directory (overrides the config's 'out')")
        s.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
        s.add_argument("--seed-offset", type=int, default=0, help="added to every trial seed")
    c = sub.add_parser("check", help="run the acceptance suite")
    c.add_argument("--quick", action="store_true", help="skip the long training criteria")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    if args.verb == "check":
        return _check(args.quick)
    if args.workers < 1:
        print("--workers must be at least 1", file=sys.stderr)
        return 2
    try:
        config = parse_config(args.config).with_seed_offset(args.seed_offset)
        out = Path(args.out or config.out)
        if args.verb == "run":
            return run_table_experiment(config, out, args.workers)
        return run_fdm_oracle(config, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
