"""Calibrate the CPW gap for both wiring modes and print the resulting Rabi frequencies."""

import argparse

from chipdress.core import KHZ_ANG, MA, UM, load_config
from chipdress.trapchar import calibrate, rabi_at


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    base = load_config(args.config)
    for mode, (a1, a2) in (("ideal", (0.5, 0.5)), ("asymmetric", (0.45, 0.55))):
        cfg = base.replace(cpw={"a1": a1, "a2": a2})
        cal = calibrate(cfg)
        c = cfg.replace(cpw={"gap": cal.gap})
        print(f"{mode:10s} gap {cal.gap / UM:.6f} um  residual {cal.residual:.1e}  "
              f"Omega(76 mA) {rabi_at(c, 76 * MA) / KHZ_ANG:.3f} kHz  "
              f"Omega(38 mA) {rabi_at(c, 38 * MA) / KHZ_ANG:.3f} kHz")


if __name__ == "__main__":
    main()
