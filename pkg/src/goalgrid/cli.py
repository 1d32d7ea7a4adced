"""Command-line entry point: ``goalgrid <command> --config <path|name>``.

Every command writes into ``<out>/<config digest>/``. The solved surfaces
are cached there so ``boundary``, ``simulate`` and ``export`` reuse a
previous ``solve``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import pickle
import sys
from pathlib import Path

import numpy as np

from .config import ParseError, RunConfig, ValidationError, read_config
from .grid import write_surface_csv
from .oracle import dp_value
from .pipeline import FullSolution, GridSpec, solve_full
from .regions import detect_features, extract_thresholds, features_to_json, write_regions_csv
from .simulate import FeedbackPolicy, SimConfig, run_policy

CACHE = "solution.pkl"
FEATURE_TIME = 0.8
# figure families keyed by (correlation, shorter-goal weight)
FIGURES = {
    (0.5, 1.0): ("T1impulse_corr05", "longeralpha_05", "shorteralpha_05"),
    (-0.9, 1.0): ("T1impulse_corrn09", "longeralpha_n09", "shorteralpha_n09"),
    (0.5, 2.0): ("T1impulse_important", "longer_important", "shorter_important"),
}


def _run_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir) / cfg.digest()
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.ini").write_text(cfg.echo())
    return d


def _solution(cfg: RunConfig, run: Path) -> FullSolution:
    cache = run / CACHE
    if cache.is_file():
        with cache.open("rb") as fh:
            return pickle.load(fh)
    sol = solve_full(cfg.market, cfg.ladder, cfg.grid, cfg.solver)
    with cache.open("wb") as fh:
        pickle.dump(dataclasses.replace(sol, elapsed=0.0), fh)
    return sol


def cmd_solve(cfg: RunConfig, args) -> dict:
    run = _run_dir(cfg)
    (run / CACHE).unlink(missing_ok=True)
    sol = _solution(cfg, run)
    last, two = sol.last.surface, sol.two_goal.surface
    last.to_csv(run / "surface_last.csv")
    two.to_csv(run / "surface_two_goal.csv")
    sol.coupled.to_csv(run / "coupled_deadline.csv")
    report = {
        "config": cfg.echo(),
        "surfaces": {
            "last_period": "surface_last.csv",
            "two_goal_period": "surface_two_goal.csv",
            "deadline_coupling": "coupled_deadline.csv",
        },
        "iterations": {"last_period": sol.last.iterations, "two_goal_period": sol.two_goal.iterations},
        "max_residuals": {"last_period": sol.last.max_residuals, "two_goal_period": sol.two_goal.max_residuals},
    }
    (run / "solve_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return {"run_dir": str(run), "report": "solve_report.json"}


def cmd_boundary(cfg: RunConfig, args) -> dict:
    run = _run_dir(cfg)
    sol = _solution(cfg, run)
    labels = sol.labels()
    times = sol.two_goal.times
    write_regions_csv(run / "regions.csv", times, sol.axis, labels)
    thr = extract_thresholds(sol.coupled, cfg.ladder[0], allow_missing=True)
    thr.to_json(run / "thresholds.json")
    feats = {f"{t:.6f}": [dataclasses.asdict(f) for f in detect_features(lab, sol.axis)]
             for t, lab in zip(times[:-1], labels[:-1])}
    (run / "features.json").write_text(json.dumps(feats, indent=2) + "\n")
    return {"run_dir": str(run), "thresholds": dataclasses.asdict(thr)}


def cmd_simulate(cfg: RunConfig, args) -> dict:
    run = _run_dir(cfg)
    sol = _solution(cfg, run)
    sim = cfg.sim or SimConfig()
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    trace = run / "sim_trace.csv" if sim.trace_paths > 0 else None
    res = run_policy(FeedbackPolicy.from_solution(sol), cfg.market, cfg.ladder, sim, trace_path=trace)
    res.to_json(run / "sim_result.json")
    out = dataclasses.asdict(res)
    out["solver_value"] = sol.value(0.0, *sim.initial_wealth)
    return {"run_dir": str(run), "result": out}


def cmd_oracle(cfg: RunConfig, args) -> dict:
    run = _run_dir(cfg)
    g = cfg.grid
    table = dp_value(cfg.market, cfg.ladder, g.x_max, g.dx, g.dt_two_goal, cfg.solver.allocation_step_coarse)
    table.to_csv(run / "oracle_table.csv")
    coarse = dataclasses.replace(cfg, grid=GridSpec(g.x_max, g.dx, g.dt_two_goal, g.dt_two_goal))
    sol = solve_full(coarse.market, coarse.ladder, coarse.grid, coarse.solver)
    diffs = {
        "t0": float(np.max(np.abs(table.at_start - sol.two_goal.surface.values[0]))),
        "deadline_before": float(np.max(np.abs(table.before_deadline - sol.coupled.values))),
        "deadline_after": float(np.max(np.abs(table.after_deadline - sol.last.surface.values[0]))),
    }
    summary = {
        "sup_norm": diffs,
        "tolerance": 0.15,
        "within_tolerance": max(diffs.values()) <= 0.15,
        "zero_wealth_value": {"oracle": float(table.at_start[0, 0]),
                              "solver": float(sol.two_goal.surface.values[0][0, 0])},
    }
    (run / "oracle_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return {"run_dir": str(run), "summary": summary}


def _figure_names(cfg: RunConfig):
    key = (round(cfg.market.correlation, 6), round(cfg.ladder[0].weight, 6))
    return FIGURES.get(key, (f"T1impulse_{cfg.digest()}", f"longeralpha_{cfg.digest()}", f"shorteralpha_{cfg.digest()}"))


def _write_map(path, axis, labels, codes=None, allocs=None, extra=None):
    x = axis.points
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["x1", "x2", "label"]
        if codes is not None:
            head += ["code", "alpha_stock1", "alpha_stock2"]
        if extra is not None:
            head += list(extra)
        w.writerow(head)
        for i, x1 in enumerate(x):
            for j, x2 in enumerate(x):
                row = [f"{x1:.6f}", f"{x2:.6f}", labels[i, j]]
                if codes is not None:
                    a = allocs[codes[i, j]]
                    row += [int(codes[i, j]), f"{a[0]:.6f}", f"{a[1]:.6f}"]
                if extra is not None:
                    row += [f"{v[i, j]:.6f}" for v in extra.values()]
                w.writerow(row)


def cmd_export(cfg: RunConfig, args) -> dict:
    run = _run_dir(cfg)
    sol = _solution(cfg, run)
    fig = run / "figures"
    fig.mkdir(exist_ok=True)
    labels = sol.labels()
    deadline_name, longer, shorter = _figure_names(cfg)
    cs = sol.coupled
    _write_map(fig / f"{deadline_name}.csv", sol.axis, labels[-1],
               extra={"transfer_l": cs.transfer_in, "transfer_m": cs.transfer_out})
    times = sol.two_goal.times
    k = int(np.argmin(np.abs(times[:-1] - FEATURE_TIME)))  # nearest grid time before the deadline
    allocs = sol.two_goal.policies.allocations
    c1, c2 = sol.two_goal.codes
    _write_map(fig / f"{longer}.csv", sol.axis, labels[k], c2[k], allocs)
    _write_map(fig / f"{shorter}.csv", sol.axis, labels[k], c1[k], allocs)
    # proportions for the fundamental goal right after the shorter deadline
    last = sol.last
    x = sol.axis.points
    rows = [j for j in range(len(x)) if 2.0 - 1e-9 <= x[j] <= 4.0 + 1e-9]
    a = last.policies.allocations[last.codes[0][0]]
    with (fig / "tab_Goal2.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x2", "alpha_stock1", "alpha_stock2"])
        for j in rows:
            w.writerow([f"{x[j]:.6f}", f"{a[j, 0]:.6f}", f"{a[j, 1]:.6f}"])
    write_surface_csv(fig / "value_t0.csv", [0.0], (sol.axis, sol.axis), sol.two_goal.surface.values[:1])
    return {"run_dir": str(run), "allocation_map_time": float(times[k]),
            "figures": sorted(p.name for p in fig.iterdir())}


COMMANDS = {
    "solve": cmd_solve,
    "boundary": cmd_boundary,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "export": cmd_export,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="goalgrid", description="Goal-based portfolio HJB solver.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="config file path or shipped config name")
    ap.add_argument("--out", default="out", help="output root directory")
    ap.add_argument("--seed", type=int, default=None, help="simulation seed override")
    args = ap.parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        cfg = read_config(args.config, args.out)
        result = COMMANDS[args.command](cfg, args)
    except Exception as e:  # every failure becomes an error document
        err = {"error": type(e).__name__, "message": str(e)}
        if isinstance(e, ParseError):
            err.update(line=e.line, key=e.key)
        elif isinstance(e, ValidationError):
            err.update(path=e.path)
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
