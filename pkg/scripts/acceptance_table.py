"""Run every experiment kind through the CLI at full size and tabulate the checks.

    python3 scripts/acceptance_table.py --out runs --seed 1 --jobs 4

Each run lands in <out>/<kind>/<seed>/{raw.csv, summary.json}.  Pass
--quick to shrink every experiment for a smoke run.
"""

import argparse
import json
import os
import sys
import time

from sixvertex.cli import KINDS, main as cli_main

QUICK = {
    "quadrant-lln": ["-T", "300", "--trials", "10"],
    "speed-dist": ["-T", "400", "--trials", "200"],
    "weak-identity": ["--times", "20,50", "--trials", "2000"],
    "geo-domination": ["-M", "10", "-T", "50", "--trials", "4000"],
    "dual-domination": ["-M", "10", "-T", "50", "--trials", "4000"],
    "color-symmetry": ["-N", "4", "--trials", "10000"],
    "qlaplace-check": [],
    "hydro-profile": ["-T", "200", "--trials", "50"],
    "tail-profile": ["-T", "300", "--trials", "500"],
    "stationary-boundary": ["--trials", "5000"],
    "coupling-properties": ["-M", "100", "-N", "20", "--trials", "2000"],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", default="1")
    ap.add_argument("--jobs", default=str(os.cpu_count() or 1))
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--only", nargs="*", default=None)
    a = ap.parse_args()
    worst = 0
    for kind in a.only or KINDS:
        argv = [kind, "--out", a.out, "--seed", a.seed, "--jobs", a.jobs]
        if a.quick:
            argv += QUICK[kind]
        t0 = time.perf_counter()
        code = cli_main(argv)
        dt = time.perf_counter() - t0
        with open(os.path.join(a.out, kind, a.seed, "summary.json")) as fh:
            s = json.load(fh)
        metrics = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                            for k, v in s["metrics"].items())
        print(f"{'PASS' if code == 0 else 'FAIL':4s} {kind:22s} {dt:7.1f}s  {metrics}", flush=True)
        worst = max(worst, code)
    sys.exit(worst)


if __name__ == "__main__":
    main()
