"""V0, V1 and the exact and perturbative microwave shifts along x through the trap centre."""

import argparse
from pathlib import Path

import numpy as np

from chipdress.cli import emit, slice_rows
from chipdress.core import KHZ_ANG, MW, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None)
    ap.add_argument("--P-mW", type=float, default=120.0)
    ap.add_argument("--Delta-kHz", type=float, default=150.0)
    ap.add_argument("--span-um", type=float, default=40.0)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--out", type=Path, default=Path("out/potential_slice.csv"))
    args = ap.parse_args()
    cfg = load_config(args.config).replace(microwave={"P": args.P_mW * MW, "Delta_m": args.Delta_kHz * KHZ_ANG})
    rows = slice_rows(cfg, args.span_um, args.n)
    v0 = np.array([r["V0_kHz"] for r in rows])
    v1 = np.array([r["V1_kHz"] for r in rows])
    x = np.array([r["x_um"] for r in rows])
    print(f"V0 minimum at x = {x[np.argmin(v0)]:.2f} um, V1 minimum at x = {x[np.argmin(v1)]:.2f} um")
    print(emit(rows, "csv", args.out))


if __name__ == "__main__":
    main()
