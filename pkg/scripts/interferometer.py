"""Centre-of-mass oscillation after the microwave switch-on and the Ramsey contrast revival."""

import argparse
from pathlib import Path

from chipdress.cli import emit, interferometer_config_path
from chipdress.core import MS, UM, load_config
from chipdress.dynamics import oscillation, prepare_ramsey, ramsey_scan, recurrence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(interferometer_config_path()))
    ap.add_argument("--T-ms", type=float, default=20.0)
    ap.add_argument("--out", type=Path, default=Path("out"))
    args = ap.parse_args()
    cfg = load_config(args.config)
    setup = prepare_ramsey(cfg)
    osc = oscillation(cfg, args.T_ms * MS, setup=setup)
    f = osc.frequency()
    print(f"centroid oscillation {f:.2f} Hz, peak-to-peak {osc.peak_to_peak / UM:.3f} um")
    emit([{"t_ms": t / MS, "x0_um": a / UM, "x1_um": b / UM} for t, a, b in zip(osc.t, osc.x0, osc.x1)],
         "csv", args.out / "oscillation.csv")
    res = ramsey_scan(cfg, setup=setup)
    rec = recurrence(res.T_R, res.contrast, f)
    print(f"contrast revival at {rec.T_peak / MS:.2f} ms, peak {rec.peak:.3f}, floor {rec.floor:.2e}")
    print(emit(list(res.rows()), "csv", args.out / "ramsey.csv"))


if __name__ == "__main__":
    main()
