"""Write closed-form curves (limit shape, density, speed law) to CSV for plotting.

    python3 scripts/reference_curves.py --kappa 1.75 --out reference.csv
"""

import argparse

from sixvertex.hydro import write_reference_csv

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--kappa", type=float, default=1.75)
    ap.add_argument("--n", type=int, default=201)
    ap.add_argument("--out", default="reference.csv")
    a = ap.parse_args()
    write_reference_csv(a.out, a.kappa, a.n)
    print(f"wrote {a.out}")
