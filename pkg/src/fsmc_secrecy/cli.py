"""Command-line front end.

Subcommands read a scenario (a JSON file or a bundled preset name), apply
overrides and write CSV (or JSON) tables into the output directory.

Exit codes: 0 success, 2 invalid input or a model assumption that fails
(e.g. the plant is not unstable), 3 a solver could not decide, 4 I/O error.
"""
import argparse
import copy
import csv
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from .channel import stationary_distribution
from .errors import Inconclusive, ModelError, NumericalError, ValidationError
from .riccati import solve_care
from .scenario import PRESETS, load_scenario_dict, scenario_from_dict
from .secrecy import design_secrecy, eavesdropper_bound
from .sim import AGENTS, SimConfig, gain_schedule, monte_carlo, theoretical_mse_curve

OUT_ENV = "FSMC_SECRECY_OUT"
DEFAULT_OUT = "fsmc_out"
DEFAULT_SCENARIO = "pendulum_demo"
DEMO_LAMBDAS = (0.3, 1.0)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if np.isfinite(v) else _fmt(v)
    return value


def write_table(out_dir, name, columns, rows, fmt="csv"):
    """Write rows (sequences aligned with `columns`) as name.csv or name.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out_dir / f"{name}.json"
        records = [{c: _json_value(v) for c, v in zip(columns, row)} for row in rows]
        path.write_text(json.dumps(records, indent=2) + "\n")
    else:
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    return path


# ---------------------------------------------------------------- overrides

_INDEX = re.compile(r"^\d+$")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc, assignment):
    """Set ``dotted.key=value`` in a parsed scenario; the key must already exist.

    List elements are addressed by integer components, e.g. ``ch_user.tpm.0.1``.
    Values are parsed as JSON when possible, otherwise kept as strings.
    """
    if "=" not in assignment:
        raise ValidationError(assignment, "override must look like key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not key.strip() or any(not p for p in parts):
        raise ValidationError(key, "empty key component")
    node = doc
    for i, part in enumerate(parts):
        where = ".".join(parts[: i + 1])
        last = i == len(parts) - 1
        if isinstance(node, dict):
            if part not in node:
                raise ValidationError(where, "override refers to a key that does not exist")
            if last:
                node[part] = _parse_value(text)
            else:
                node = node[part]
        elif isinstance(node, list) and _INDEX.match(part):
            idx = int(part)
            if idx >= len(node):
                raise ValidationError(where, f"index out of range (length {len(node)})")
            if last:
                node[idx] = _parse_value(text)
            else:
                node = node[idx]
        else:
            raise ValidationError(where, "override refers to a key that does not exist")
    return doc


def load_with_overrides(args):
    doc = copy.deepcopy(load_scenario_dict(args.scenario))
    if not isinstance(doc, dict):
        raise ValidationError("", "scenario must be a JSON object")
    for assignment in args.set or []:
        apply_override(doc, assignment)
    if args.lam is not None:
        doc["lambda"] = args.lam
    sim_flags = {"num_trials": args.trials, "horizon": args.horizon, "base_seed": args.seed}
    if any(v is not None for v in sim_flags.values()):
        sim = doc.get("sim")
        sim = dict(sim) if isinstance(sim, dict) else {}
        sim.update({k: v for k, v in sim_flags.items() if v is not None})
        doc["sim"] = sim
    return scenario_from_dict(doc)


# ---------------------------------------------------------------- commands


def run_design(scenario, out_dir, fmt="csv"):
    design = design_secrecy(scenario.plant, scenario.ch_user, scenario.ch_eve)
    row = [getattr(design, f) for f in design.FIELDS]
    probe_rows = [
        (link, lam, verdict) for link in ("user", "eve") for lam, verdict in design.probes[link]
    ]
    if fmt == "json":
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        record = {f: _json_value(v) for f, v in zip(design.FIELDS, row)}
        record["probes"] = [
            {"link": link, "lambda": _json_value(lam), "verdict": v} for link, lam, v in probe_rows
        ]
        (out_dir / "design.json").write_text(json.dumps(record, indent=2) + "\n")
    else:
        write_table(out_dir, "design", design.FIELDS, [row])
        write_table(out_dir, "design_probes", ("link", "lambda", "verdict"), probe_rows)
    return design


def _lambda_of(scenario, default=1.0):
    return scenario.lam if scenario.lam is not None else default


def run_solve(scenario, out_dir, fmt="csv"):
    lam = _lambda_of(scenario)
    plant = scenario.plant
    nx, ny = plant.nx, plant.ny
    gain_cols = [f"gain_{i}_{j}" for i in range(nx) for j in range(ny)]
    columns = ["link", "lambda", "mode", "verdict", "method", "iterations", "final_trace", "residual", "z_trace"]
    columns += gain_cols
    rows, outcomes = [], {}
    for link, ch in (("user", scenario.ch_user), ("eve", scenario.ch_eve)):
        outcome = solve_care(plant, ch, lam)
        outcomes[link] = outcome
        for m in range(ch.num_modes):
            base = [link, lam, m, outcome.verdict, outcome.method, outcome.iterations, outcome.final_trace]
            if outcome.converged:
                gains = outcome.gains[m].reshape(-1)
                rows.append(base + [outcome.residual, float(np.trace(outcome.solution[m]))] + list(gains))
            else:
                rows.append(base + [None, None] + [None] * len(gain_cols))
    write_table(out_dir, "care", columns, rows, fmt)
    return outcomes


def run_characterize(scenario, out_dir, fmt="csv", lam=None, name="eavesdropper"):
    lam = _lambda_of(scenario) if lam is None else lam
    bound = eavesdropper_bound(scenario.plant, scenario.ch_eve, lam)
    N = scenario.ch_eve.num_modes
    columns = ["lambda", "spectral_radius", "verdict", "lower_bound_trace"]
    columns += [f"trace_mode_{m}" for m in range(N)]
    traces = bound.per_mode_traces
    row = [lam, bound.spectral_radius, bound.verdict, bound.lower_bound_trace]
    row += list(traces) if traces is not None else [None] * N
    write_table(out_dir, name, columns, [row], fmt)
    return bound


def run_simulate(scenario, out_dir, fmt="csv", lam=None, workers=1):
    """Monte Carlo run with each estimator using its optimal per-step gain schedule."""
    cfg = scenario.sim or SimConfig()
    if lam is not None or scenario.lam is not None:
        cfg = SimConfig(cfg.horizon, cfg.num_trials, cfg.base_seed,
                        lam if lam is not None else scenario.lam, cfg.record_trajectories)
    plant, K = scenario.plant, cfg.horizon
    channels = {"user": scenario.ch_user, "eve": scenario.ch_eve}
    pi0 = {a: channels[a].initial_dist if channels[a].initial_dist is not None
           else stationary_distribution(channels[a]).probs for a in AGENTS}
    gains = {a: gain_schedule(plant, channels[a], cfg.lam, pi0[a], K) for a in AGENTS}
    theory = {a: theoretical_mse_curve(plant, channels[a], cfg.lam, pi0[a], K) for a in AGENTS}
    summary = monte_carlo(plant, channels["user"], channels["eve"], gains["user"], gains["eve"], cfg, workers=workers)

    rows = [(k, a, summary.mse[a][k], summary.stderr[a][k]) for a in AGENTS for k in range(K + 1)]
    write_table(out_dir, "summary", ("k", "agent", "mse", "stderr"), rows, fmt)
    write_table(out_dir, "theory", ("k", "agent", "mse"),
                [(k, a, theory[a][k]) for a in AGENTS for k in range(K + 1)], fmt)
    comp_cols = ["k", "agent"] + [f"mse_x{i}" for i in range(plant.nx)]
    write_table(out_dir, "components", comp_cols,
                [[k, a] + list(summary.component_mse[a][k]) for a in AGENTS for k in range(K + 1)], fmt)
    if summary.trajectories is not None:
        tr = summary.trajectories
        traj_rows = []
        for t in range(cfg.num_trials):
            for a in AGENTS:
                for k in range(K + 1):
                    step = k < K
                    traj_rows.append((
                        t, k, a, tr[a]["mode"][t, k],
                        tr["nu"][t, k] if step else None,
                        tr[a]["xi"][t, k] if step else None,
                        tr[a]["phi"][t, k] if step else None,
                        tr[a]["err_sq_trace"][t, k],
                    ))
        write_table(out_dir, "trajectories",
                    ("trial", "k", "agent", "mode", "nu", "xi", "phi", "err_sq_trace"), traj_rows, fmt)
    return summary, theory


def run_demo(scenario, out_dir, fmt="csv", workers=1):
    """Design, then eavesdropper test and simulation at two transmission probabilities."""
    out_dir = Path(out_dir)
    design = run_design(scenario, out_dir, fmt)
    results = {}
    for lam in DEMO_LAMBDAS:
        sub = out_dir / f"lambda_{lam:g}"
        bound = run_characterize(scenario, sub, fmt, lam=lam)
        summary, theory = run_simulate(scenario, sub, fmt, lam=lam, workers=workers)
        results[lam] = (bound, summary, theory)
    return design, results


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fsmc-secrecy",
        description="Secrecy design and Monte Carlo experiments for remote state estimation "
        "over Markov links with random measurement withholding.",
        epilog=f"The output directory defaults to ${OUT_ENV} if set, else ./{DEFAULT_OUT}. "
        f"Bundled presets: {', '.join(PRESETS)}. "
        "Exit codes: 0 ok, 2 invalid input or model assumption violated, 3 solver undecided, 4 I/O error.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    helps = {
        "design": "critical probabilities and the feasible transmission-probability interval",
        "solve": "solve the coupled Riccati equations for both links at lambda",
        "characterize": "eavesdropper divergence test and steady-state lower bound at lambda",
        "simulate": "Monte Carlo MSE curves with theoretical overlays",
        "demo": "design, then characterize and simulate at lambda = 0.3 and 1",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--scenario", default=DEFAULT_SCENARIO,
                       help=f"scenario JSON file or preset name (default {DEFAULT_SCENARIO})")
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override an existing scenario key, e.g. ch_user.reception.0=0.8 (repeatable)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--trials", type=int, help="number of Monte Carlo trials")
        p.add_argument("--horizon", type=int, help="simulation horizon K")
        p.add_argument("--seed", type=int, help="base random seed")
        p.add_argument("--lambda", dest="lam", type=float, help="transmission probability")
        p.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo trials")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        if args.workers < 1:
            raise ValidationError("workers", "must be at least 1")
        scenario = load_with_overrides(args)
        if args.command == "design":
            d = run_design(scenario, out_dir, args.format)
            print(f"interval ({d.interval_low:.4f}, {d.interval_high:.4f}] feasible={d.feasible}")
        elif args.command == "solve":
            for link, o in run_solve(scenario, out_dir, args.format).items():
                print(f"{link}: {o.verdict} after {o.iterations} iterations")
        elif args.command == "characterize":
            b = run_characterize(scenario, out_dir, args.format)
            print(f"spectral radius {b.spectral_radius:.6f}: {b.verdict}")
        elif args.command == "simulate":
            run_simulate(scenario, out_dir, args.format, workers=args.workers)
            print(f"wrote {out_dir}")
        else:
            d, _ = run_demo(scenario, out_dir, args.format, workers=args.workers)
            print(f"interval ({d.interval_low:.4f}, {d.interval_high:.4f}]; wrote {out_dir}")
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        kind = "inconclusive" if isinstance(exc, Inconclusive) else "numerical failure"
        print(f"error ({kind}): {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error (I/O): {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
