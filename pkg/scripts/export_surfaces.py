#!/usr/bin/env python3
"""Export safety-index isosurface samples for external plotting.

Writes one CSV per parameter set showing how raising lambda1 / lambda2
tilts the phi = 0 surface (columns: d, d_dot, d_ddot, phi, lambda1,
lambda2, d_min).
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jssa.safety_index import SafetyIndexParams, export_phase_surface


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/surfaces")
    ap.add_argument("--d-min", type=float, default=0.05)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for l1, l2 in [(3.0, 1.0), (6.0, 1.0), (10.0, 1.0), (3.0, 5.0), (3.0, 0.0)]:
        params = SafetyIndexParams(d_min=args.d_min, lambda1=l1, lambda2=l2)
        path = out / f"surface_l1_{l1:g}_l2_{l2:g}.csv"
        n = export_phase_surface(params, path)
        print(f"{path}: {n} samples")
    return 0


if __name__ == "__main__":
    sys.exit(main())
