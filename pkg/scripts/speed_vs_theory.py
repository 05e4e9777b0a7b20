"""Empirical second-class speed CDF at several horizons against the limit law.

Shows the KS distance shrinking with T.

    python3 scripts/speed_vs_theory.py --n 400 --T 250 1000 4000
"""

import argparse

from sixvertex.core import ModelParams
from sixvertex.hydro import ks_critical, ks_statistic, speed_cdf
from sixvertex.tracking import second_class_speeds

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--b1", type=float, default=0.3)
    ap.add_argument("--b2", type=float, default=0.6)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--T", type=int, nargs="+", default=[250, 1000, 4000])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()
    p = ModelParams(a.b1, a.b2)
    print(f"KS 1% critical value at n={a.n}: {ks_critical(a.n):.4f}")
    print("T,ks,mean_speed")
    for T in a.T:
        s = second_class_speeds(p, T, a.n, a.seed, jobs=a.jobs)
        print(f"{T},{ks_statistic(s.speeds, lambda x: speed_cdf(x, p.kappa)):.4f},{s.speeds.mean():.4f}")
