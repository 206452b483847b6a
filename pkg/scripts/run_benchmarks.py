#!/usr/bin/env python3
"""Run the standard safety benchmark suite and write a metrics table.

Usage: python scripts/run_benchmarks.py [--variants 20] [--seed 0] [--out out/benchmarks]
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jssa.scenarios import benchmark_suite
from jssa.sim import metrics_row, run, write_metrics_csv, write_telemetry_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--variants", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/benchmarks")
    ap.add_argument("--telemetry", action="store_true", help="also dump per-run telemetry CSVs")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    t0 = time.perf_counter()
    worst = float("inf")
    fallbacks = 0
    for sc in benchmark_suite(seed=args.seed, variants=args.variants):
        records, metrics = run(sc)
        rows.append(metrics_row(sc, metrics))
        worst = min(worst, metrics.min_distance)
        fallbacks += metrics.fallback_steps
        if args.telemetry:
            write_telemetry_csv(records, out / f"{sc.name.replace('[', '_').rstrip(']')}.csv")
        print(f"{sc.name:24s} min_d={metrics.min_distance:.3f} active={metrics.active_duration:.2f}s "
              f"fallbacks={metrics.fallback_steps}")
    write_metrics_csv(rows, out / "metrics.csv")
    print(f"\n{len(rows)} runs in {time.perf_counter() - t0:.1f} s -> {out/'metrics.csv'}")
    print(f"suite min distance {worst:.3f} m, total fallback steps {fallbacks}")
    return 0 if (worst >= 0.05 and fallbacks == 0) else 1


if __name__ == "__main__":
    sys.exit(main())
