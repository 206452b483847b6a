#!/usr/bin/env python3
"""Run the jerk-level safeguard and the acceleration-level baseline on the
same scripted interaction and print paired metrics."""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jssa.scenarios import decelerating
from jssa.sim import compare_modes, write_telemetry_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variant", type=int, default=0)
    ap.add_argument("--out", default="out/comparison")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cmp = compare_modes(decelerating(seed=args.seed, variant=args.variant))
    for mode in ("jssa", "ssa"):
        m = cmp[mode]["metrics"]
        write_telemetry_csv(cmp[mode]["records"], out / f"{mode}.csv")
        print(f"{mode:5s} min_d={m.min_distance:.3f} m  active={m.active_duration:.3f} s  "
              f"pre-clip jerk violations={m.preclip_violations}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
