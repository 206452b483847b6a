"""Command-line entry points.

    jssa run SCENARIO.json --out DIR       run one scenario, write telemetry + metrics
    jssa sweep SCENARIO.json --l1 6,7,8 --l2 6,7,8 --out DIR
    jssa verify PARAMS.json                root condition + sampled minimax
    jssa serve SCENARIO.json --port 8765   live telemetry/control endpoint

Exit codes: 0 success; 1 safety violation (min distance below the margin)
or safeguard fallback engaged, and for verify a failed check; 2 config or
usage error.  JSSA_SEED overrides the scenario seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .kinematics import JerkBounds, KinematicChain, default_arm
from .safety_index import MinimaxEnvelope, SafetyIndexParams, validate_roots, verify_minimax
from .scenarios import SCENARIO_NAMES, make
from .sim import Scenario, metrics_row, run, sweep, write_metrics_csv, write_telemetry_csv

EXIT_OK = 0
EXIT_UNSAFE = 1
EXIT_CONFIG = 2


def _load_scenario(path_or_preset: str) -> Scenario:
    if path_or_preset.startswith("preset:"):
        name = path_or_preset.split(":", 1)[1]
        scenario = make(name)
    else:
        scenario = Scenario.from_json(path_or_preset)
    seed_env = os.environ.get("JSSA_SEED")
    if seed_env is not None:
        scenario = replace(scenario, seed=int(seed_env))
    return scenario


def cmd_run(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, metrics = run(scenario)
    write_telemetry_csv(records, out / "telemetry.csv")
    write_metrics_csv([metrics_row(scenario, metrics)], out / "metrics.csv")
    violated = metrics.min_distance < scenario.d_min
    if violated:
        print(f"UNSAFE: min distance {metrics.min_distance:.4f} m < {scenario.d_min} m", file=sys.stderr)
        return EXIT_UNSAFE
    if metrics.fallback_steps > 0:
        print(f"fallback engaged on {metrics.fallback_steps} steps", file=sys.stderr)
        return EXIT_UNSAFE
    print(f"ok: min distance {metrics.min_distance:.4f} m, active {metrics.active_duration:.3f} s")
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    vals = [v for v in text.split(",") if v.strip()]
    return [float(v) for v in vals]


def cmd_sweep(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
        l1 = _parse_grid(args.l1)
        l2 = _parse_grid(args.l2)
        if not l1 or not l2:
            raise ValueError("sweep grid must be non-empty")
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep(scenario, l1, l2)
    csv_rows = [
        metrics_row(scenario, r["metrics"], lambda1=r["lambda1"], lambda2=r["lambda2"]) for r in rows
    ]
    write_metrics_csv(csv_rows, out / "metrics.csv")
    print(f"{len(rows)} sweep rows written to {out / 'metrics.csv'}")
    worst = min(r["metrics"].min_distance for r in rows)
    return EXIT_OK if worst >= scenario.d_min else EXIT_UNSAFE


def cmd_verify(args) -> int:
    try:
        with open(args.params) as f:
            cfg = json.load(f)
        params = SafetyIndexParams(
            d_min=float(cfg["d_min"]), lambda1=float(cfg["lambda1"]), lambda2=float(cfg["lambda2"])
        )
        bounds = JerkBounds.symmetric_deg(cfg["jerk_bounds_deg"])
        chain_cfg = cfg.get("chain", "default")
        chain = default_arm() if chain_cfg == "default" else KinematicChain.from_config(chain_cfg)
        budget = int(cfg.get("budget", 100000))
        seed = int(cfg.get("seed", 0))
        envelope = MinimaxEnvelope.from_config(cfg["envelope"]) if "envelope" in cfg else None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    roots_ok = validate_roots(params)
    print(f"root condition (negative real roots): {'pass' if roots_ok else 'FAIL'}")
    if not roots_ok:
        return EXIT_UNSAFE
    report = verify_minimax(params, bounds, chain, budget, seed=seed, envelope=envelope)
    print(
        f"sampled minimax: {'pass' if report.passed else 'FAIL'} "
        f"(worst {report.worst_value:.6g} over {report.samples_used} samples, "
        f"{report.samples_rejected} rejected, seed {report.seed})"
    )
    if report.worst_state is not None:
        print(f"worst sample: {json.dumps(report.worst_state)}")
    return EXIT_OK if report.passed else EXIT_UNSAFE


def cmd_serve(args) -> int:
    try:
        scenario = _load_scenario(args.scenario)
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .service import serve

    print(f"serving {scenario.name} on ws://{args.host}:{args.port}")
    try:
        serve(scenario, host=args.host, port=args.port)
    except OSError as exc:
        print(f"cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jssa", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write telemetry + metrics")
    p.add_argument("scenario", help="scenario JSON path, or preset:<name> "
                                    f"({', '.join(SCENARIO_NAMES)})")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="sensitivity sweep over lambda1 x lambda2")
    p.add_argument("scenario")
    p.add_argument("--l1", required=True, help="comma-separated lambda1 values")
    p.add_argument("--l2", required=True, help="comma-separated lambda2 values")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="validate safety-index parameters")
    p.add_argument("params", help="JSON with lambda1, lambda2, d_min, jerk_bounds_deg, budget, seed")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="live telemetry/control endpoint")
    p.add_argument("scenario")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
