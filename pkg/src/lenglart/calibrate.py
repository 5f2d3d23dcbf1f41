"""Recompute the ``tol_c`` constants and write ``data/tol_c.json``.

Usage: ``python -m lenglart.calibrate [--seeds 5] [--grids 250 1000 4000]``.
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

from .identities import CHECKS

MARGIN = 4.0


def calibrate(seeds=range(5), grids=(250, 1000, 4000), checks=None) -> dict:
    out = {}
    for name in checks or CHECKS:
        worst = 0.0
        for seed in seeds:
            for n in grids:
                worst = max(worst, CHECKS[name](n, seed) * math.sqrt(n))
        out[name] = {"C": MARGIN * worst, "max_scaled_residual": worst}
    return {
        "margin": MARGIN,
        "seeds": list(seeds),
        "grids": list(grids),
        "checks": out,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m lenglart.calibrate")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--grids", type=int, nargs="+", default=[250, 1000, 4000])
    ap.add_argument("--out", type=Path, default=Path(__file__).parent / "data" / "tol_c.json")
    args = ap.parse_args(argv)
    table = calibrate(range(args.seeds), tuple(args.grids))
    args.out.write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    for name, v in table["checks"].items():
        print(f"{name:28s} C = {v['C']:.4g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
