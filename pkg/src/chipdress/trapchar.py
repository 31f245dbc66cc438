"""Trap minima, trap frequencies, state-selective splitting and I_mw calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from . import hyperfine as hf
from .core import ExperimentConfig
from .magnetostatics import CpwGeometry, cpw_microwave_field, static_trap_model
from .potentials import PotentialModel

# numerical settings, fixed here so reported digits are reproducible
FD_STEP = 0.05e-6          # m, Hessian / gradient finite-difference step
SIMPLEX_XATOL = 0.02       # um, Newton polish does the rest
SIMPLEX_FATOL = 1e-7       # relative
SIMPLEX_MAXFEV = 2000
NEWTON_STEP_TOL = 1e-10    # m
NEWTON_MAXITER = 20
DOMAIN_RADIUS = 60e-6      # m, allowed excursion from the start point


class MinimizationError(RuntimeError):
    pass


class SaddlePointError(RuntimeError):
    pass


class CalibrationError(RuntimeError):
    pass


def _batch(potential):
    if hasattr(potential, "batch"):
        return potential.batch
    return lambda pts: np.array([potential(p) for p in pts])


def _stencil_points(x, h):
    e = np.eye(3) * h
    pts = [x]
    for i in range(3):
        pts += [x + e[i], x - e[i]]
    for i in range(3):
        for j in range(i + 1, 3):
            pts += [x + e[i] + e[j], x + e[i] - e[j], x - e[i] + e[j], x - e[i] - e[j]]
    return np.array(pts)


def _grad_hess(batch, x, h):
    v = batch(_stencil_points(x, h))
    f0 = v[0]
    g = np.empty(3)
    H = np.empty((3, 3))
    for i in range(3):
        fp, fm = v[1 + 2 * i], v[2 + 2 * i]
        g[i] = (fp - fm) / (2 * h)
        H[i, i] = (fp - 2 * f0 + fm) / h**2
    k = 7
    for i in range(3):
        for j in range(i + 1, 3):
            fpp, fpm, fmp, fmm = v[k:k + 4]
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * h * h)
            k += 4
    return g, H


def find_minimum(potential, x0, domain_radius: float = DOMAIN_RADIUS) -> np.ndarray:
    """Local minimum of ``potential`` (J, of a point in m) near x0.

    Nelder-Mead in micrometre units, then Newton iterations on central
    finite-difference gradient and Hessian until the Newton step is below
    0.1 nm.
    """
    x0 = np.asarray(x0, float)
    batch = _batch(potential)
    scale = abs(float(batch(x0[None])[0])) or 1.0

    def f_um(p):
        r = x0 + (np.asarray(p) * 1e-6)
        if np.linalg.norm(r - x0) > domain_radius or r[2] <= 0:
            return np.inf
        return float(batch(r[None])[0]) / scale

    res = minimize(f_um, np.zeros(3), method="Nelder-Mead",
                   options=dict(xatol=SIMPLEX_XATOL, fatol=SIMPLEX_FATOL, maxfev=SIMPLEX_MAXFEV,
                                initial_simplex=np.vstack([np.zeros(3), np.eye(3) * 0.5])))
    x = x0 + res.x * 1e-6
    for _ in range(NEWTON_MAXITER):
        g, H = _grad_hess(batch, x, FD_STEP)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise MinimizationError("singular Hessian during Newton polish") from exc
        if np.any(np.linalg.eigvalsh(H) <= 0):
            raise MinimizationError("Newton polish reached a non-convex region")
        if np.linalg.norm(step) > 1e-6:
            step *= 1e-6 / np.linalg.norm(step)
        x = x + step
        if np.linalg.norm(x - x0) > domain_radius:
            raise MinimizationError("minimum search escaped the domain")
        if np.linalg.norm(step) < NEWTON_STEP_TOL:
            return x
    raise MinimizationError("Newton polish did not converge")


@dataclass
class TrapReport:
    minimum: np.ndarray          # m
    energy: float                # J
    frequencies: np.ndarray      # Hz, ascending
    axes: np.ndarray             # columns are principal axes
    condition: float
    gradient_norm: float

    def as_dict(self, h: float) -> dict:
        return {"minimum_um": list(self.minimum * 1e6), "energy_kHz": self.energy / h / 1e3,
                "frequencies_Hz": list(self.frequencies), "axes": self.axes.T.tolist(),
                "hessian_condition": self.condition}


def hessian(potential, x, h: float = FD_STEP) -> np.ndarray:
    """Richardson-extrapolated central-difference Hessian (steps h and h/2)."""
    batch = _batch(potential)
    _, H1 = _grad_hess(batch, np.asarray(x, float), h)
    _, H2 = _grad_hess(batch, np.asarray(x, float), h / 2)
    return (4 * H2 - H1) / 3


def trap_frequencies(potential, minimum, mass: float) -> TrapReport:
    x = np.asarray(minimum, float)
    batch = _batch(potential)
    H = hessian(potential, x)
    lam, vec = np.linalg.eigh(H)
    if np.any(lam <= 0):
        raise SaddlePointError(f"Hessian has non-positive eigenvalue(s) {lam}: saddle point")
    g, _ = _grad_hess(batch, x, FD_STEP)
    return TrapReport(x, float(batch(x[None])[0]), np.sqrt(lam / mass) / (2 * math.pi), vec,
                      float(lam[-1] / lam[0]), float(np.linalg.norm(g)))


def state_minimum(cfg: ExperimentConfig, label: str, P: float | None = None,
                  start=None, model: PotentialModel | None = None) -> np.ndarray:
    model = model or PotentialModel(cfg, P=P)
    f = model.potential_function(label)
    if start is None:
        start = _line_search_start(model, label)
    return find_minimum(f, start)


def _line_search_start(model: PotentialModel, label: str) -> np.ndarray:
    rm = np.asarray(model.cfg.trap.r_m, float)
    xs = np.arange(-30, 30.5, 0.5) * 1e-6
    pts = rm + np.outer(xs, [1.0, 0.0, 0.0])
    v = model.evaluate(pts).of(label)
    return pts[int(np.argmin(v))]


def splitting_distance(cfg: ExperimentConfig, P: float | None = None, Delta_m: float | None = None) -> float:
    """|x(min V_0bar) - x(min V_1bar)| in metres."""
    mw = {}
    if P is not None:
        mw["P"] = P
    if Delta_m is not None:
        mw["Delta_m"] = Delta_m
    if mw:
        cfg = cfg.replace(microwave=mw)
    if cfg.microwave.P == 0:
        return 0.0
    model = PotentialModel(cfg)
    x1 = state_minimum(cfg, "1", model=model, start=np.asarray(cfg.trap.r_m))
    x0 = state_minimum(cfg, "0", model=model)
    return float(abs(x0[0] - x1[0]))


def split_scan(cfg: ExperimentConfig, points, workers: int = 1) -> list[dict]:
    """s for each (P [W], Delta_m [rad/s]) pair; ordered like ``points``."""
    points = list(points)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            s = list(ex.map(_split_one, [cfg] * len(points), points))
    else:
        s = [_split_one(cfg, p) for p in points]
    out = []
    for (P, D), si in zip(points, s):
        out.append({"P_mW": P * 1e3, "Delta_kHz": D / (2e3 * math.pi),
                    "P_over_Delta": P * 1e3 / (D / (2e3 * math.pi)), "s_um": si * 1e6})
    return out


def _split_one(cfg, point):
    P, D = point
    return splitting_distance(cfg, P, D)


# -- calibration -------------------------------------------------------------

@dataclass
class Calibration:
    P_ref: float
    I_ref: float
    Omega_ref: float
    gap: float
    Omega_at_ref: float
    residual: float          # relative

    def current(self, P: float) -> float:
        return self.I_ref * math.sqrt(P / self.P_ref)

    def as_dict(self) -> dict:
        return {"P_ref_mW": self.P_ref * 1e3, "I_ref_mA": self.I_ref * 1e3,
                "Omega_ref_kHz": self.Omega_ref / (2e3 * math.pi), "gap_um": self.gap * 1e6,
                "Omega_at_ref_kHz": self.Omega_at_ref / (2e3 * math.pi), "relative_residual": self.residual}


def rabi_at(cfg: ExperimentConfig, I_mw: float, r=None, geom: CpwGeometry | None = None) -> float:
    """|Omega_R| (rad/s) at r (default r_m) for microwave current amplitude I_mw."""
    geom = geom or CpwGeometry.from_config(cfg.cpw)
    r = np.asarray(cfg.trap.r_m if r is None else r, float)
    B = static_trap_model(cfg.trap, cfg.constants).field(r)
    Bmw = cpw_microwave_field(geom, I_mw, r)
    H = hf.build_rwa_hamiltonian(B, Bmw, cfg.omega, constants=cfg.constants)
    return float(np.abs(H.Omega_R[0]))


def calibrate(cfg: ExperimentConfig, gap_bounds=(0.2e-6, 30e-6)) -> Calibration:
    """Choose the signal-ground gap so that Omega_R(r_m; I_ref) = Omega_ref."""
    mw = cfg.microwave
    base = CpwGeometry.from_config(cfg.cpw)

    def resid(gap):
        g = CpwGeometry(base.width, base.height, gap, base.length, base.center_x, base.a1, base.a2, base.Z0)
        return rabi_at(cfg, mw.I_ref, geom=g) - mw.Omega_ref

    grid = np.linspace(*gap_bounds, 60)
    vals = np.array([resid(g) for g in grid])
    sign_change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if len(sign_change) == 0:
        best = grid[int(np.argmin(np.abs(vals)))]
        raise CalibrationError(f"no gap in bounds reproduces Omega_ref; best gap {best * 1e6:.3f} um, "
                               f"residual {np.min(np.abs(vals)) / mw.Omega_ref:.3g}")
    k = sign_change[0]
    gap = brentq(resid, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-14)
    om = resid(gap) + mw.Omega_ref
    return Calibration(mw.P_ref, mw.I_ref, mw.Omega_ref, gap, om, abs(om - mw.Omega_ref) / mw.Omega_ref)


def calibrated_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return cfg.replace(cpw={"gap": calibrate(cfg).gap})
