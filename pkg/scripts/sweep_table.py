#!/usr/bin/env python3
"""Reproduce the 3x3 sensitivity table on the standardized scenario.

Each cell reports (min distance; first trigger; last trigger; active
duration; mean critical velocity; mean critical acceleration).
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jssa.scenarios import sensitivity
from jssa.sim import sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--l1", default="6,7,8")
    ap.add_argument("--l2", default="6,7,8")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    l1 = [float(x) for x in args.l1.split(",")]
    l2 = [float(x) for x in args.l2.split(",")]

    rows = sweep(sensitivity(seed=args.seed), l1, l2)
    cells = {(r["lambda1"], r["lambda2"]): r["metrics"] for r in rows}
    header = "lambda2 \\ lambda1 " + "".join(f"| {v:^42.4g} " for v in l1)
    print(header)
    print("-" * len(header))
    for b in l2:
        line = f"{b:>17.4g} "
        for a in l1:
            m = cells[(a, b)]
            ft = "-" if m.first_trigger is None else f"{m.first_trigger:.3f}"
            lt = "-" if m.last_trigger is None else f"{m.last_trigger:.3f}"
            line += (f"| ({m.min_distance:.3f}; {ft}; {lt}; {m.active_duration:.3f}; "
                     f"{m.mean_critical_velocity:.3f}; {m.mean_critical_acceleration:.3f}) ")
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
