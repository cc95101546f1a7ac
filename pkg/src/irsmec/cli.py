"""Command-line entry point: ``irsmec solve | sweep | bench``.

Exit codes: 0 success, 2 validation error, 3 convergence error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import config as config_mod
from .channel import composite_amplitude
from .errors import BudgetError, ConvergenceError, DomainError, InfeasibleError, ValidationError
from .experiments import (
    draw_instance,
    emit_table,
    parse_scheme,
    run_bench,
    run_scheme,
    run_sweep,
    scheme_phases,
    valid_scheme_names,
)
from .model import DeviceArrays, evaluate_solution
from .plotting import emit_plot_script, figure_spec, render_figure
from .solvers import kkt_certificate

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4


def _effective(args) -> dict:
    cfg = config_mod.load(args.config)
    overrides = {}
    for key in ("seed", "algorithm", "format", "parallel"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return config_mod.merge(overrides, cfg)


def _workers(cfg: dict) -> int:
    n = cfg["parallel"]
    if n is None:
        n = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    if n < 1:
        raise ValidationError("parallel: must be >= 1")
    return n


def _floats(x):
    return [float(v) for v in np.asarray(x, dtype=float).reshape(-1)]


# ---------------------------------------------------------------------------
# solve


def solve_document(cfg: dict, timing: bool = False) -> dict:
    """Run one trial and collect everything worth reporting."""
    scheme = parse_scheme(cfg["algorithm"])
    scenario = config_mod.scenario_from(cfg)
    options = config_mod.solver_from(cfg)
    positions, channels = draw_instance(scenario, cfg["seed"])
    theta, b = scheme_phases(scheme, scenario, channels)
    report = run_scheme(scheme, scenario, b, theta, options)
    sol = report.solution
    ch = channels.without_irs() if scheme.phases == "no_irs" else channels
    th = theta if scheme.phases != "no_irs" else np.zeros((scenario.sys.N, 0))
    gain2 = composite_amplitude(ch.g, ch.h, ch.r, th) ** 2
    ev = evaluate_solution(scenario.devs, scenario.sys, sol, gain2)
    cert = None
    if report.nu is not None:
        arr = DeviceArrays(scenario.devs)
        cert = kkt_certificate(arr.S, scenario.sys.B, b, sol.tau, scenario.sys.T, report.nu)
    doc = {
        "scheme": scheme.name,
        "seed": cfg["seed"],
        "total_energy_J": float(sol.total_energy),
        "offload_set": sol.offload_set,
        "iterations": report.iterations,
        "inner_bisection_calls": report.inner_bisection_calls,
        "beta": [int(x) for x in sol.beta],
        "tau_s": _floats(sol.tau),
        "P_W": _floats(sol.P),
        "f_Hz": _floats(sol.f),
        "b_W": [float(x) if math.isfinite(x) else None for x in b],
        "gain2": _floats(gain2),
        "theta_rad": [_floats(row) for row in sol.theta],
        "positions_m": [_floats(p) for p in positions],
        "feasible": ev.report.feasible,
        "violations": [
            {"constraint": v.constraint, "device": v.device, "slack": v.slack} for v in ev.report.violations
        ],
        "certificate": cert,
        "config": cfg,
    }
    if timing:
        doc["wall_time_s"] = report.wall_time
    return doc


def _solve_text(doc: dict) -> str:
    lines = [
        f"scheme            {doc['scheme']}",
        f"seed              {doc['seed']}",
        f"total energy (J)  {doc['total_energy_J']!r}",
        f"offload set       {doc['offload_set']}",
        f"iterations        {doc['iterations']}",
        f"feasible          {doc['feasible']}",
    ]
    if doc["certificate"] is not None:
        c = doc["certificate"]
        lines.append(f"dual price nu (W) {c['nu']!r}")
        lines.append(f"max stationarity  {c['max_stationarity']!r}")
        lines.append(f"frame gap         {c['sum_gap']!r}")
    if "wall_time_s" in doc:
        lines.append(f"wall time (s)     {doc['wall_time_s']!r}")
    lines.append("")
    lines.append(f"{'device':>6} {'mode':>8} {'tau (s)':>24} {'P (W)':>24} {'f (Hz)':>24} {'b (W)':>24}")
    for n, beta in enumerate(doc["beta"]):
        mode = "offload" if beta else "local"
        b = doc["b_W"][n]
        lines.append(
            f"{n:>6} {mode:>8} {doc['tau_s'][n]!r:>24} {doc['P_W'][n]!r:>24} {doc['f_Hz'][n]!r:>24} {b!r:>24}"
        )
    for v in doc["violations"]:
        lines.append(f"violation {v['constraint']} device={v['device']} slack={v['slack']!r}")
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    cfg = _effective(args)
    parse_scheme(cfg["algorithm"])
    if cfg["format"] not in ("json", "text"):
        raise ValidationError(f"format: must be 'json' or 'text' for solve, got {cfg['format']!r}")
    doc = solve_document(cfg, timing=args.timing)
    text = json.dumps(doc, indent=2) + "\n" if cfg["format"] == "json" else _solve_text(doc)
    if args.out is None:
        sys.stdout.write(text)
    else:
        parent = os.path.dirname(os.path.abspath(args.out))
        os.makedirs(parent, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        if cfg["format"] == "text":
            with open(args.out + ".config.json", "w", encoding="utf-8") as fh:
                fh.write(config_mod.dump(cfg))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def default_figures(param: str, schemes) -> list:
    fams = {
        "M": ["energy_vs_M", "runtime_vs_M", "offload_prob", "group_energy", "discrete_loss"],
        "N": ["energy_vs_N", "runtime_vs_N", "offload_prob", "group_energy", "discrete_loss"],
        "L": ["discrete_loss", "offload_prob", "group_energy"],
    }[param]
    if not any(parse_scheme(s).phases in ("discrete", "quantized") for s in schemes):
        fams = [f for f in fams if f != "discrete_loss"]
    return fams


def write_sweep_outputs(result, figures, out_dir: str) -> list:
    written = []
    for stem, rows in (("results", result.rows), ("groups", result.groups)):
        for fmt in ("csv", "json"):
            written.append(emit_table(rows, os.path.join(out_dir, f"{stem}.{fmt}"), fmt))
    for fam in figures:
        rows = result.groups if fam == "group_energy" else result.rows
        csv_name = "groups.csv" if fam == "group_energy" else "results.csv"
        script = emit_plot_script(rows, fam, csv_name, f"{fam}.png")
        path = os.path.join(out_dir, f"plot_{fam}.py")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(script)
        written.append(path)
        written.append(render_figure(rows, fam, os.path.join(out_dir, f"{fam}.png")))
    return written


def cmd_sweep(args) -> int:
    cfg = _effective(args)
    if args.seed is not None:
        cfg["sweep"]["base_seed"] = args.seed
    sweep = config_mod.sweep_from(cfg)
    figures = cfg["sweep"]["figures"]
    if figures is None:
        figures = default_figures(sweep.swept_param, sweep.schemes)
    out_dir = args.out or "sweep_out"
    os.makedirs(out_dir, exist_ok=True)
    result = run_sweep(sweep, parallel=_workers(cfg), record_timing=cfg["record_timing"])
    for fam in figures:
        figure_spec(result.groups if fam == "group_energy" else result.rows, fam)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config_mod.dump(cfg))
    for path in write_sweep_outputs(result, figures, out_dir):
        print(path)
    failed = sum(r.failed_trials for r in result.rows)
    if failed:
        print(f"warning: {failed} failed trial(s), see failed_trials column", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    cfg = _effective(args)
    if args.seed is not None:
        cfg["bench"]["base_seed"] = args.seed
    scenario = config_mod.scenario_from(cfg)
    options = config_mod.solver_from(cfg)
    bench = cfg["bench"]
    for algo in bench["algorithms"]:
        parse_scheme(f"{algo}_irs")
    if not bench["N_values"] and not bench["M_values"]:
        raise ValidationError("bench: give N_values and/or M_values")
    rows = []
    for param, values in (("N", bench["N_values"]), ("M", bench["M_values"])):
        if values:
            for v in values:
                try:
                    scenario.with_sys(**{param: v})
                except (DomainError, ValueError) as exc:
                    raise ValidationError(f"bench.{param}_values: {exc}") from None
            rows += run_bench(
                scenario, param, values, bench["algorithms"], bench["repetitions"],
                bench["base_seed"], options, cfg["record_timing"],
            )
    out_dir = args.out or "bench_out"
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config_mod.dump(cfg))
    for fmt in ("csv", "json"):
        print(emit_table(rows, os.path.join(out_dir, f"bench.{fmt}"), fmt))
    _print_bench(rows)
    return EXIT_OK


def _print_bench(rows) -> None:
    for r in rows:
        print(
            f"{r.param_name}={r.param_value:g} {r.algorithm:<8} median {r.median_time_s:.3e} s"
            f"  ratio {r.ratio_to_first:.3g}"
        )


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsmec", description="IRS-aided binary offloading energy minimisation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML or JSON config document (defaults apply to missing keys)")
        p.add_argument("--seed", type=int, help="trial seed (solve) or base seed (sweep, bench)")
        p.add_argument("--parallel", type=int, help="worker processes (default: config key, else all cores)")

    p = sub.add_parser("solve", help="solve one random instance")
    common(p)
    p.add_argument("--algorithm", help="scheme name, one of: " + ", ".join(valid_scheme_names()))
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("json", "text"))
    p.add_argument("--timing", action="store_true", help="include the solver wall time in the report")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over M, N or L")
    common(p)
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--format", choices=("csv", "json"), help="accepted for symmetry; both formats are written")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="solver run-time table, greedy versus penalty")
    common(p)
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--format", choices=("csv", "json"), help="accepted for symmetry; both formats are written")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("sweep", "bench"):
        args.format = None  # both formats are always written
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValidationError, DomainError, InfeasibleError, BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
