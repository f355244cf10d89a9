"""Command-line front end.

Scenario files are JSON documents::

    {
      "classes": [{"arrival_rate": 0.3333, "accumulation_rate": 3}, ...],
      "service_rate": 1,
      "rate_schedule": [{"start": 0, "rates": [0.3333, 0.3333, 0.3323]}],
      "policy_schedule": [{"start": 0, "policy": {"kind": "accumulating"}}],
      "horizon": 1000000,
      "seed": 7,
      "sample_interval": 10,
      "initial_levels": [0, 0, 0]
    }

``rate_schedule`` defaults to the class arrival rates from time 0 and
``initial_levels`` (fluid verb only) to zeros. Policy kinds: ``static``,
``accumulating``, ``scaled_accumulating`` (``epsilon``, ``base_rates``,
``static_tail_count``) and ``hybrid_lex`` (``static_prefix``).

Exit codes: 0 success, 2 validation failure, 3 runtime or resource guard,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import analytic, des, export, fluid, scenarios
from .core import (Accumulating, ScaledAccumulating, ScenarioSpec, Static, ValidationError, load_scenario,
                   scenario_to_dict, validate)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


def _scenario(args) -> ScenarioSpec:
    if not args.scenario:
        raise CliError("--scenario is required for this command", EXIT_VALIDATION)
    spec = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, seed=args.seed)
    if getattr(args, "horizon", None) is not None:
        spec = replace(spec, horizon=args.horizon)
    eps = getattr(args, "epsilon", None)
    if eps and args.command != "sweep":
        if len(eps) > 1:
            raise CliError("--epsilon may be given once for this command", EXIT_VALIDATION)
        try:
            spec = des.sweep_scenario(spec, eps[0])
        except ValueError as e:
            raise CliError(str(e), EXIT_VALIDATION) from None
    errors = [f"{args.scenario}: {e}" for e in validate(spec)]
    if errors:
        raise ValidationError(errors)
    return spec


def _provenance(name: str, spec: ScenarioSpec) -> list[str]:
    return [f"scenario={name} seed={spec.seed} horizon={export.fmt(float(spec.horizon))}"]


def _out(args) -> Path:
    if not args.out:
        raise CliError("--out is required for this command", EXIT_VALIDATION)
    return Path(args.out)


def cmd_analyze(args) -> None:
    spec = _scenario(args)
    system = spec.system
    policy = spec.policy_schedule[0][1]
    lam = system.arrival_rates
    header = ["class", "arrival_rate", "expected_delay", "expected_sojourn", "expected_queue"]
    if isinstance(policy, Static):
        report, limits = analytic.sp_expected_waits(system), None
    elif isinstance(policy, (Accumulating, ScaledAccumulating)):
        rates, _ = policy.effective(system)
        try:
            delays = analytic.kleinrock_delays(lam, rates)
        except analytic.UnstableSystemError as e:
            raise CliError(f"{e}; use the 'fluid' command for loads >= 1", EXIT_VALIDATION) from None
        report = analytic.WaitReport.from_delays(lam, delays)
        limit_lam = analytic.heavy_traffic_limit_rates(lam)
        try:
            limits = (analytic.ap_heavy_traffic_limits(limit_lam, rates),
                      analytic.ap_queue_fractions(limit_lam, rates))
        except ValueError:
            limits = None
        if limits is not None:
            header += ["ht_limit", "ht_queue_fraction"]
    else:
        raise CliError(f"no closed form for policy {policy.kind!r}; use 'simulate'", EXIT_VALIDATION)
    rows = []
    for i in range(system.n_classes):
        row = [i + 1, lam[i], report.expected_delay[i], report.expected_sojourn[i], report.expected_queue[i]]
        if limits is not None:
            row += [limits[0][i], limits[1][i]]
        rows.append(row)
    path = _out(args) / "analysis.csv"
    export.write_csv(path, header, rows)
    _log(args, f"wrote {path}")


def cmd_fluid(args) -> None:
    spec = _scenario(args)
    system = spec.system
    policy = spec.policy_schedule[0][1]
    levels = spec.initial_levels or (0.0,) * system.n_classes
    if isinstance(policy, Static):
        traj = fluid.sp_fluid_trajectory(system, levels, spec.horizon)
    elif isinstance(policy, (Accumulating, ScaledAccumulating)):
        traj = fluid.ap_fluid_trajectory(system, levels, spec.horizon, rates=policy.effective(system)[0])
    else:
        raise CliError(f"no fluid model for policy {policy.kind!r}", EXIT_VALIDATION)
    out = _out(args)
    header, rows = export.fluid_rows(traj, spec.sample_interval)
    export.write_csv(out / "fluid_trajectory.csv", header, rows)
    drains = traj.drain_times or (None,) * system.n_classes
    export.write_csv(out / "fluid_summary.csv", ["class", "terminal_growth_rate", "drain_time"],
                     [[i + 1, float(g), None if d is None else float(d)]
                      for i, (g, d) in enumerate(zip(traj.terminal_growth_rates, drains))])
    _log(args, f"wrote {out / 'fluid_trajectory.csv'} ({len(traj.breakpoints)} breakpoints)")


def _write_run(out: Path, name: str, spec: ScenarioSpec, stats, trace: bool = False) -> None:
    comments = _provenance(name, spec)
    export.write_csv(out / "summary.csv", *export.summary_rows(stats), comments)
    export.write_csv(out / "series.csv", *export.series_rows(stats), comments)
    if trace:
        export.write_csv(out / "trace.csv", *export.trace_rows(stats.trace), comments)


def cmd_simulate(args) -> None:
    spec = _scenario(args)
    out = _out(args)
    name = Path(args.scenario).stem
    if args.reps and args.reps >= 2:
        agg = des.replicate(spec, args.reps, keep_series=False)
        header = ["class", "mean_delay", "delay_ci", "mean_sojourn", "sojourn_ci", "mean_queue", "count"]
        rows = [[i + 1, agg.mean_delay[i], agg.delay_ci[i], agg.mean_sojourn[i], agg.sojourn_ci[i],
                 agg.mean_queue[i], agg.n_reps] for i in range(spec.system.n_classes)]
        comments = _provenance(name, spec) + [f"replications={agg.n_reps} (count column = replications)"]
        export.write_csv(out / "summary.csv", header, rows, comments)
        rep_rows = [[r, seed, i + 1, run.mean_delay[i], run.mean_sojourn[i], run.mean_queue[i]]
                    for r, (seed, run) in enumerate(zip(agg.seeds, agg.runs))
                    for i in range(spec.system.n_classes)]
        export.write_csv(out / "replications.csv",
                         ["replication", "seed", "class", "mean_delay", "mean_sojourn", "mean_queue"],
                         rep_rows, comments)
    elif args.reps == 1:
        raise CliError("--reps must be >= 2 (omit it for a single run)", EXIT_VALIDATION)
    else:
        stats = des.run(spec, trace=args.trace)
        _write_run(out, name, spec, stats, trace=args.trace)
    _log(args, f"wrote results to {out}")


def cmd_sweep(args) -> None:
    spec = _scenario(args)
    eps = args.epsilon or []
    try:
        rows = des.epsilon_sweep(spec, eps, n_reps=args.reps or 1)
    except ValueError as e:
        raise CliError(str(e), EXIT_VALIDATION) from None
    k = spec.system.n_classes
    limit_lam = analytic.heavy_traffic_limit_rates(spec.system.arrival_rates)
    limits = analytic.ap_heavy_traffic_limits(limit_lam, spec.system.accumulation_rates)
    header = ["epsilon", *export.class_headers("eps_delay", k), *export.class_headers("eps_delay_ci", k),
              *export.class_headers("limit", k)]
    table = [[r.epsilon, *r.scaled_delay, *r.scaled_ci, *limits] for r in rows]
    path = _out(args) / "sweep.csv"
    export.write_csv(path, header, table, _provenance(Path(args.scenario).stem, spec))
    _log(args, f"wrote {path}")


def cmd_equilibrium(args) -> None:
    missing = [f for f in ("lam", "mu", "cost", "reward") if getattr(args, f) is None]
    if missing:
        raise CliError("equilibrium needs " + ", ".join(f"--{m}" for m in missing), EXIT_VALIDATION)
    try:
        res = analytic.joining_equilibrium(args.lam, args.mu, args.cost, args.reward)
    except ValueError as e:
        raise CliError(str(e), EXIT_VALIDATION) from None
    header = ["lambda", "mu", "C", "R", "join_probability", "effective_rate", "equilibrium_wait",
              "counterfactual"]
    row = [args.lam, args.mu, args.cost, args.reward, res.join_probability, res.effective_rate,
           res.equilibrium_wait, res.counterfactual]
    if args.out:
        export.write_csv(Path(args.out) / "equilibrium.csv", header, [row])
    else:
        sys.stdout.write(export.csv_text(header, [row]))


def run_figure(name: str, out: Path) -> None:
    spec = scenarios.FIGURES[name]()
    stats = des.run(spec)
    target = out / name
    _write_run(target, name, spec, stats)
    export.write_atomic(target / "scenario.json", json.dumps(scenario_to_dict(spec), indent=2) + "\n")


def cmd_figures(args) -> None:
    out = _out(args)
    names = list(scenarios.FIGURES)
    workers = max(1, min(len(names), args.workers or 1))
    with ThreadPoolExecutor(workers) as pool:
        list(pool.map(lambda n: run_figure(n, out), names))
    _log(args, f"wrote {', '.join(names)} under {out}")


COMMANDS = {
    "analyze": cmd_analyze,
    "fluid": cmd_fluid,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "equilibrium": cmd_equilibrium,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apqlab", description="Priority queues near and above capacity.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=float)
        p.add_argument("--epsilon", type=float, action="append",
                       help="set the lowest class rate so the load is 1-epsilon (repeat for sweep)")
        p.add_argument("--reps", type=int, help="independent replications")
        p.add_argument("--quiet", action="store_true")
        if name == "simulate":
            p.add_argument("--trace", action="store_true", help="also write the event trace")
        if name == "equilibrium":
            p.add_argument("--lam", type=float)
            p.add_argument("--mu", type=float)
            p.add_argument("--cost", type=float, help="waiting cost per unit time (C)")
            p.add_argument("--reward", type=float, help="value of service (R)")
        if name == "figures":
            p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except CliError as e:
        print(f"apqlab {args.command}: {e}", file=sys.stderr)
        return e.code
    except ValidationError as e:
        for msg in e.errors:
            print(f"apqlab {args.command}: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    except (des.ResourceLimitError, fluid.FluidError, RuntimeError) as e:
        print(f"apqlab {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"apqlab {args.command}: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
