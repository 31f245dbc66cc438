"""Ramsey phase sensitivities and the phase-noise budget.

The interferometer phase is accumulated along classical centre-of-mass paths
of the two states in their 1D valley potentials:

    phi = (1/hbar) * integral [V_1(x_1(t), t) - V_0(x_0(t), t)] dt + 2 pi f_fringe T_R

with the microwave switched on at t = 0 and off at T_R.  Sensitivities to the
static field (uniform offset along the trap bias, drive frequency held fixed)
and to the microwave power are central finite differences, validated by a
step-size study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .core import ExperimentConfig, MG, MW
from .dynamics import LinePotentials, com_trajectory, line_potentials

# step-size studies for the derivatives (the first entry is the reported step)
B_STEPS = (1.0 * MG, 0.5 * MG, 2.0 * MG, 5.0 * MG)
P_STEPS = (0.5 * MW, 0.2 * MW, 1.0 * MW, 2.0 * MW)
STEP_STABILITY = 0.02      # allowed relative spread over the step study


class DerivativeError(RuntimeError):
    pass


@dataclass
class PhaseContext:
    """Reusable grid and nominal settings for repeated phase evaluations."""

    cfg: ExperimentConfig
    x: np.ndarray
    dt: float = 1e-6
    moving: bool = True
    cache: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, moving: bool = True, dt: float | None = None) -> "PhaseContext":
        lines = line_potentials(cfg)
        ctx = cls(cfg, lines.x, cfg.dynamics.dt if dt is None else dt, moving)
        ctx.cache[(None, 0.0)] = lines
        return ctx

    def lines(self, P: float | None = None, B_offset: float = 0.0) -> LinePotentials:
        key = (P, B_offset)
        if key not in self.cache:
            self.cache[key] = line_potentials(self.cfg, self.x, P=P, B_offset=B_offset)
        return self.cache[key]


def accumulated_phase(cfg: ExperimentConfig, T_R: float, P: float | None = None, B_offset: float = 0.0,
                      fringe: bool = True, t_start: float = 0.0, ctx: PhaseContext | None = None,
                      t_stop: float | None = None) -> float:
    """Relative phase (rad) of state 1 vs state 0 accumulated over [t_start, t_stop].

    The sequence itself always runs from 0 to T_R (microwave off at T_R);
    ``t_stop`` defaults to T_R.  ``P`` (W) and ``B_offset`` (T) override the
    configuration; the classical paths start at rest in the microwave-off
    minimum at t = 0.
    """
    t_stop = T_R if t_stop is None else t_stop
    if T_R < 0 or t_start < 0 or not t_start <= t_stop <= T_R:
        raise ValueError("need 0 <= t_start <= t_stop <= T_R")
    ctx = ctx or PhaseContext.from_config(cfg)
    lines = ctx.lines(P, B_offset)
    # start positions come from the nominal microwave-off trap
    x_init = np.full(2, ctx.lines().x_start)
    traj = com_trajectory(lines, T_R, ctx.dt, x_init=x_init, t_off=T_R, moving=ctx.moving)
    sp_on = CubicSpline(lines.x, lines.V_on, axis=1)
    sp_off = CubicSpline(lines.x, lines.V_off, axis=1)
    idx = np.arange(2)
    t = traj.t
    w = np.array([lines.weight(ti, T_R) for ti in t])
    v_off = np.stack([sp_off(traj.x[:, k])[k] for k in idx], axis=1)
    v_on = np.stack([sp_on(traj.x[:, k])[k] for k in idx], axis=1)
    V = v_off + w[:, None] * (v_on - v_off)
    dV = V[:, 1] - V[:, 0]
    tol = 1e-9 * ctx.dt
    sel = (t >= t_start - tol) & (t <= t_stop + tol)
    phi = trapezoid(dV[sel], t[sel]) / cfg.constants.hbar
    if fringe:
        phi += 2 * math.pi * cfg.ramsey.fringe_freq * (t_stop - t_start)
    return float(phi)


@dataclass
class Sensitivity:
    which: str
    value: float            # rad/T or rad/W
    step: float
    study: dict             # step -> derivative
    spread: float           # max relative deviation across the study

    def per_lab_unit(self) -> float:
        """rad/G or rad/mW."""
        return self.value * (1e-4 if self.which == "B" else 1e-3)


def sensitivity(cfg: ExperimentConfig, T_R: float, which: str = "B", ctx: PhaseContext | None = None,
                steps=None, tolerance: float = STEP_STABILITY) -> Sensitivity:
    """dphi/dB (rad/T) or dphi/dP (rad/W) by central differences with a step study."""
    if which not in ("B", "P"):
        raise ValueError("which must be 'B' or 'P'")
    ctx = ctx or PhaseContext.from_config(cfg)
    steps = steps or (B_STEPS if which == "B" else P_STEPS)
    P0 = cfg.microwave.P
    study = {}
    for h in steps:
        if which == "B":
            hi = accumulated_phase(cfg, T_R, B_offset=h, fringe=False, ctx=ctx)
            lo = accumulated_phase(cfg, T_R, B_offset=-h, fringe=False, ctx=ctx)
        else:
            hi = accumulated_phase(cfg, T_R, P=P0 + h, fringe=False, ctx=ctx)
            lo = accumulated_phase(cfg, T_R, P=max(P0 - h, 0.0), fringe=False, ctx=ctx)
            h = 0.5 * ((P0 + h) - max(P0 - h, 0.0))
        study[h] = (hi - lo) / (2 * h)
    vals = np.array(list(study.values()))
    ref = vals[0]
    scale = max(abs(ref), np.max(np.abs(vals)))
    spread = float(np.max(np.abs(vals - ref)) / scale) if scale > 0 else 0.0
    if scale > 0 and spread > tolerance:
        raise DerivativeError(f"d phi / d{which} not converged over steps {list(study)}: spread {spread:.3g}")
    return Sensitivity(which, float(ref), steps[0], study, spread)


@dataclass
class NoiseBudget:
    """Phase noise contributions in rad.  ``observed`` is the reference noise level."""

    dphi_B: float
    dphi_P: float
    dphi_S: float
    dphi_N: float
    observed: float
    dphi_dB: float = math.nan      # rad/T
    dphi_dP: float = math.nan      # rad/W

    @property
    def total(self) -> float:
        return float(math.sqrt(self.dphi_B**2 + self.dphi_P**2 + self.dphi_S**2 + self.dphi_N**2))

    @property
    def observed_fraction(self) -> float:
        return self.total / self.observed

    def as_dict(self) -> dict:
        """Phases in units of pi, sensitivities in rad/G and rad/mW."""
        out = {f"{k}_pi": getattr(self, k) / math.pi for k in ("dphi_B", "dphi_P", "dphi_S", "dphi_N")}
        out["total_pi"] = self.total / math.pi
        out["observed_pi"] = self.observed / math.pi
        out["observed_fraction"] = self.observed_fraction
        out["dphi_dB_rad_per_G"] = self.dphi_dB * 1e-4
        out["dphi_dP_rad_per_mW"] = self.dphi_dP * 1e-3
        return out


def combine(dphi_dB: float, dphi_dP: float, dB: float, dP: float, N: float, dN: float,
            dphi_dN: float, observed: float) -> NoiseBudget:
    """Assemble the budget from sensitivities and fluctuation levels."""
    if min(dB, dP, dN) < 0 or N <= 0:
        raise ValueError("fluctuations must be >= 0 and N > 0")
    return NoiseBudget(abs(dphi_dB) * dB, abs(dphi_dP) * dP, 1 / math.sqrt(N), abs(dphi_dN) * dN,
                       observed, dphi_dB, dphi_dP)


def budget(cfg: ExperimentConfig, T_R: float | None = None, ctx: PhaseContext | None = None) -> NoiseBudget:
    """Noise budget at T_R (default: the configured noise T_R) with the configured fluctuations.

    The atom-number term uses the explicit dphi/dN hook from the config,
    zero unless set.
    """
    n = cfg.noise
    T_R = n.TR if T_R is None else T_R
    ctx = ctx or PhaseContext.from_config(cfg)
    sB = sensitivity(cfg, T_R, "B", ctx)
    sP = sensitivity(cfg, T_R, "P", ctx)
    return combine(sB.value, sP.value, n.dB, n.dP, cfg.dynamics.N, n.dN, n.dphi_dN, n.observed)
