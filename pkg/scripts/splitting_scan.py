"""Splitting distance versus P/Delta for several detunings, in both CPW wiring modes."""

import argparse
from pathlib import Path

import numpy as np

from chipdress.cli import emit
from chipdress.core import KHZ_ANG, MW, load_config
from chipdress.trapchar import calibrated_config, split_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None)
    ap.add_argument("--detunings-kHz", type=float, nargs="+", default=[150.0, 300.0, 600.0])
    ap.add_argument("--ratios", type=float, nargs=3, default=[0.05, 0.8, 16], metavar=("LO", "HI", "N"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/splitting_scan.csv"))
    args = ap.parse_args()
    base = load_config(args.config)
    ratios = np.linspace(args.ratios[0], args.ratios[1], int(args.ratios[2]))
    rows = []
    for mode, (a1, a2) in (("ideal", (0.5, 0.5)), ("asymmetric", (0.45, 0.55))):
        cfg = calibrated_config(base.replace(cpw={"a1": a1, "a2": a2}))
        pts = [(r * d * MW, d * KHZ_ANG) for d in args.detunings_kHz for r in ratios]
        rows += [{"mode": mode, **row} for row in split_scan(cfg, pts, workers=args.workers)]
    print(emit(rows, "csv", args.out))


if __name__ == "__main__":
    main()
