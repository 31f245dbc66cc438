"""Command-line front end.

Every subcommand writes its result file plus ``manifest.json`` into ``--out``.
Exit status: 0 success, 2 usage error, 3 configuration error, 4 numerical
failure.  Set ``CHIPDRESS_LOG=DEBUG`` (or INFO, WARNING) for log output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .core import (KHZ_ANG, MS, MW, UM, ConfigError, ExperimentConfig, Grid3, config_to_dict,
                   load_config)

log = logging.getLogger("chipdress")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4

# the oscillation, Ramsey and noise experiments run on their own bundled operating point
INTERFEROMETER_COMMANDS = {"oscillation", "ramsey", "noise-budget"}
INTERFEROMETER_FIGURES = {"4b", "5a"}


def interferometer_config_path() -> Path:
    return Path(str(resources.files("chipdress") / "data" / "interferometer_config.json"))


# -- emission ----------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return f"{v:.9g}"
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else float(f"{v:.9g}")
    return obj


def emit(rows, fmt_name: str, path: Path) -> Path:
    """Write rows (list of dicts, or one dict for JSON) deterministically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt_name == "csv":
        if isinstance(rows, dict):
            rows = [rows]
        cols = list(rows[0].keys()) if rows else []
        lines = [",".join(cols)] + [",".join(fmt(r[c]) for c in cols) for r in rows]
        path.write_text("\n".join(lines) + "\n")
    elif fmt_name == "json":
        path.write_text(json.dumps(_jsonable(rows), indent=2) + "\n")
    else:
        raise ValueError(f"unknown format {fmt_name!r}")
    return path


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the resolved config, independent of key order."""
    text = json.dumps(_jsonable(config_to_dict(cfg)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    outputs: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    versions: dict = field(default_factory=lambda: {
        "chipdress": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "python": platform.python_version()})

    def write(self, out: Path) -> Path:
        p = Path(out) / "manifest.json"
        p.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return p


# -- subcommand implementations --------------------------------------------

def _point(args, cfg):
    return np.asarray(cfg.trap.r_m if args.point_um is None else np.array(args.point_um) * UM, float)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    mw = {}
    if getattr(args, "P_mw_mW", None) is not None and not isinstance(args.P_mw_mW, list):
        mw["P"] = args.P_mw_mW * MW
    if getattr(args, "Delta_kHz", None) is not None and not isinstance(args.Delta_kHz, list):
        mw["Delta_m"] = args.Delta_kHz * KHZ_ANG
    if mw:
        cfg = cfg.replace(microwave=mw)
        from .core import validate
        validate(cfg)
    return cfg


def cmd_field_map(cfg, args):
    from .magnetostatics import (CpwGeometry, cpw_microwave_field, microwave_current,
                                 static_trap_model)
    from .hyperfine import build_rwa_hamiltonian
    axis = "xyz".index(args.axis)
    n = args.n
    start = np.asarray(cfg.trap.r_m, float).copy()
    start[axis] -= 0.5 * args.span_um * UM
    grid = Grid3.line(start, axis, args.span_um * UM / max(n - 1, 1), n)
    pts = grid.points()
    B = static_trap_model(cfg.trap, cfg.constants).field(pts)
    geom = CpwGeometry.from_config(cfg.cpw)
    I = microwave_current(cfg, cfg.microwave.P)
    Bmw = cpw_microwave_field(geom, I, pts)
    H = build_rwa_hamiltonian(B, Bmw, cfg.omega, cfg.potential.zeeman, cfg.constants)
    rows = []
    for i, p in enumerate(pts):
        rows.append({"x_um": p[0] / UM, "y_um": p[1] / UM, "z_um": p[2] / UM,
                     "B_G": np.linalg.norm(B[i]) * 1e4, "Bmw_G": np.linalg.norm(Bmw[i]) * 1e4,
                     "Omega_R_kHz": abs(H.Omega_R[i]) / KHZ_ANG, "Delta_kHz": H.Delta[i] / KHZ_ANG})
    return rows, "field_map"


def cmd_dressed_spectrum(cfg, args):
    from .hyperfine import BASIS, admixture, dressed_spectrum
    from .potentials import PotentialModel
    from .magnetostatics import cpw_microwave_field
    from .hyperfine import build_rwa_hamiltonian
    r = _point(args, cfg)
    model = PotentialModel(cfg)
    B = model.static_field(r[None])
    Bmw = cpw_microwave_field(model.geom, model.I_mw, r[None]) if model.microwave_on else np.zeros((1, 3))
    H = build_rwa_hamiltonian(B, Bmw, cfg.omega, cfg.potential.zeeman, cfg.constants)
    spec = dressed_spectrum(H)
    h = cfg.constants.h
    rows = []
    for k, (F, m) in enumerate(BASIS):
        rows.append({"F": F, "mF": m, "E_kHz": float(spec.energy_of(k)[0]) / h / 1e3,
                     "bare_weight": float(np.abs(spec.state_of(k)[0, k]) ** 2)})
    extra = {"Omega_R_kHz": abs(H.Omega_R[0]) / KHZ_ANG, "Delta_kHz": H.Delta[0] / KHZ_ANG,
             "admixture_2": float(np.real(admixture(spec)[0]))}
    if args.format == "json":
        return {"point_um": list(r / UM), **extra, "levels": rows}, "dressed_spectrum"
    for row in rows:
        row.update(extra)
    return rows, "dressed_spectrum"


def slice_rows(cfg, span_um: float, n: int):
    from .potentials import potential_slice
    start = np.asarray(cfg.trap.r_m, float).copy()
    start[0] -= 0.5 * span_um * UM
    grid = Grid3.line(start, 0, span_um * UM / (n - 1), n)
    pg = potential_slice(cfg, grid)
    h = cfg.constants.h
    x = pg.coordinate()
    ref = float(np.min(pg.V1))
    rows = []
    for i in range(n):
        rows.append({"x_um": x[i] / UM, "V0_kHz": (pg.V0.ravel()[i] - ref) / h / 1e3,
                     "V1_kHz": (pg.V1.ravel()[i] - ref) / h / 1e3,
                     "Vmw_exact_kHz": pg.Vmw_exact.ravel()[i] / h / 1e3,
                     "Vmw_pert_kHz": pg.Vmw_pert.ravel()[i] / h / 1e3,
                     "Omega_R_kHz": pg.Omega_R.ravel()[i] / KHZ_ANG})
    return rows


def cmd_potential_slice(cfg, args):
    return slice_rows(cfg, args.span_um, args.n), "potential_slice"


def _scan_points(args, cfg):
    P = args.P_mw_mW if isinstance(args.P_mw_mW, list) else None
    D = args.Delta_kHz if isinstance(args.Delta_kHz, list) else None
    D = D or [cfg.microwave.Delta_m / KHZ_ANG]
    pts = []
    for d in D:
        Ps = P or list(np.linspace(0.1, 0.7, 7) * d)   # P/Delta from 0.1 to 0.7 mW/kHz
        pts += [(p * MW, d * KHZ_ANG) for p in Ps]
    return pts


def cmd_split_scan(cfg, args):
    from .trapchar import split_scan
    return split_scan(cfg, _scan_points(args, cfg), workers=args.workers), "split_scan"


def cmd_calibrate(cfg, args):
    from .trapchar import calibrate, rabi_at
    cal = calibrate(cfg)
    c2 = cfg.replace(cpw={"gap": cal.gap})
    rep = cal.as_dict()
    rep["Omega_at_half_current_kHz"] = rabi_at(c2, cal.I_ref / 2) / KHZ_ANG
    rep["a1"], rep["a2"] = cfg.cpw.a1, cfg.cpw.a2
    return rep, "calibration"


def cmd_oscillation(cfg, args):
    from .dynamics import oscillation
    res = oscillation(cfg, args.T_ms * MS, record_every=10)
    rows = [{"t_ms": t / MS, "x0_um": a / UM, "x1_um": b / UM} for t, a, b in zip(res.t, res.x0, res.x1)]
    return rows, "oscillation"


def cmd_ramsey(cfg, args):
    from .dynamics import ramsey_scan
    TR = None if not args.TR_ms else np.array(args.TR_ms) * MS
    res = ramsey_scan(cfg, TR, pulse_phase=args.phase)
    return list(res.rows()), "ramsey"


def cmd_noise_budget(cfg, args):
    from .noise import budget
    b = budget(cfg, None if args.TR_ms is None else args.TR_ms * MS)
    out = b.as_dict()
    out["TR_ms"] = (cfg.noise.TR if args.TR_ms is None else args.TR_ms * MS) / MS
    return out, "noise_budget"


def cmd_reproduce(cfg, args):
    fig = args.figure
    if fig == "3b":
        from .trapchar import calibrated_config, split_scan
        rows = []
        for mode, (a1, a2) in (("ideal", (0.5, 0.5)), ("asymmetric", (0.45, 0.55))):
            c = calibrated_config(cfg.replace(cpw={"a1": a1, "a2": a2}))
            pts = [(r * d * MW, d * KHZ_ANG) for d in (150.0, 300.0, 600.0) for r in np.linspace(0.1, 0.8, 8)]
            for row in split_scan(c, pts, workers=args.workers):
                rows.append({"mode": mode, **row})
        return rows, "fig3b"
    if fig == "3c":
        c = cfg.replace(cpw={"a1": 0.5, "a2": 0.5}, microwave={"P": 120 * MW, "Delta_m": 150 * KHZ_ANG})
        return slice_rows(c, 40.0, 200), "fig3c"
    if fig == "4b":
        args.T_ms = 20.0
        rows, _ = cmd_oscillation(cfg, args)
        return rows, "fig4b"
    if fig == "5a":
        args.TR_ms = None
        args.phase = 0.0
        rows, _ = cmd_ramsey(cfg, args)
        return rows, "fig5a"
    raise ValueError(f"unknown figure {fig}")


COMMANDS = {
    "field-map": cmd_field_map, "dressed-spectrum": cmd_dressed_spectrum,
    "potential-slice": cmd_potential_slice, "split-scan": cmd_split_scan, "calibrate": cmd_calibrate,
    "oscillation": cmd_oscillation, "ramsey": cmd_ramsey, "noise-budget": cmd_noise_budget,
    "reproduce-figure": cmd_reproduce,
}
JSON_DEFAULT = {"calibrate", "noise-budget", "dressed-spectrum"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON config (default: bundled config for the experiment)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default=None)
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    p = argparse.ArgumentParser(prog="chipdress", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    s = add("field-map", "static and microwave field along a line through r_m")
    s.add_argument("--axis", choices=("x", "y", "z"), default="x")
    s.add_argument("--span-um", type=float, default=40.0)
    s.add_argument("--n", type=int, default=81)
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float)
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float)

    s = add("dressed-spectrum", "dressed energies at a point (default r_m)")
    s.add_argument("--point-um", type=float, nargs=3)
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float)
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float)

    s = add("potential-slice", "V0, V1 and V_mw along x through r_m")
    s.add_argument("--span-um", type=float, default=40.0)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float)
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float)

    s = add("split-scan", "splitting distance over powers and detunings")
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float, nargs="+")
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float, nargs="+")

    add("calibrate", "solve the CPW gap for the reference Rabi frequency")

    s = add("oscillation", "centre-of-mass oscillation after the microwave switch-on")
    s.add_argument("--T-ms", dest="T_ms", type=float, default=10.0)
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float)
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float)

    s = add("ramsey", "Ramsey populations and contrast measure vs T_R")
    s.add_argument("--TR-ms", dest="TR_ms", type=float, nargs="*")
    s.add_argument("--phase", type=float, default=0.0, help="extra phase of the second pulse (rad)")
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float)
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float)

    s = add("noise-budget", "phase noise budget")
    s.add_argument("--TR-ms", dest="TR_ms", type=float)
    s.add_argument("--P-mw-mW", dest="P_mw_mW", type=float)
    s.add_argument("--Delta-kHz", dest="Delta_kHz", type=float)

    s = add("reproduce-figure", "figure presets")
    s.add_argument("figure", choices=("3b", "3c", "4b", "5a"))
    return p


def _setup_logging():
    level = os.environ.get("CHIPDRESS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    t0 = time.perf_counter()
    cmd = args.command
    interf = cmd in INTERFEROMETER_COMMANDS or (cmd == "reproduce-figure" and args.figure in INTERFEROMETER_FIGURES)
    try:
        path = args.config if args.config is not None else (interferometer_config_path() if interf else None)
        cfg = _apply_overrides(load_config(path), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fmt_name = args.format or ("json" if cmd in JSON_DEFAULT else "csv")
    args.format = fmt_name
    log.info("running %s", cmd)
    try:
        result, stem = COMMANDS[cmd](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out = emit(result, fmt_name, args.out / f"{stem}.{fmt_name}")
    man = RunManifest(cmd, config_hash(cfg), [str(out)], round(time.perf_counter() - t0, 3))
    man.write(args.out)
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
