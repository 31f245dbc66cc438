"""Ramsey phase sensitivities with their step studies, and the resulting noise budget."""

import argparse
import math

from chipdress.cli import interferometer_config_path
from chipdress.core import MS, load_config
from chipdress.noise import PhaseContext, combine, sensitivity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(interferometer_config_path()))
    ap.add_argument("--TR-ms", type=float, default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    n = cfg.noise
    T = n.TR if args.TR_ms is None else args.TR_ms * MS
    ctx = PhaseContext.from_config(cfg)
    sens = {w: sensitivity(cfg, T, w, ctx) for w in ("B", "P")}
    for w, s in sens.items():
        unit = "rad/G" if w == "B" else "rad/mW"
        scale = s.per_lab_unit() / s.value if s.value else 0.0
        study = ", ".join(f"{v * scale:.2f}" for v in s.study.values())
        print(f"dphi/d{w} = {s.per_lab_unit():.3f} {unit}  (step study: {study}; spread {s.spread:.1e})")
    b = combine(sens["B"].value, sens["P"].value, n.dB, n.dP, cfg.dynamics.N, n.dN, n.dphi_dN, n.observed)
    for k, v in b.as_dict().items():
        print(f"{k:22s} {v:.5g}")
    print(f"one fringe per {2 * math.pi / abs(sens['B'].per_lab_unit()) * 1e3:.2f} mG")


if __name__ == "__main__":
    main()
