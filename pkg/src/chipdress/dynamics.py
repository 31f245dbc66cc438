"""Two-component condensate dynamics along the splitting axis.

The 3D potentials are reduced to 1D by following the transverse valley: for
each x the potential is minimized over (y, z), and the condensate moves along
that valley with the 1D coupling g = 2 hbar omega_perp a.  The microwave
potential is switched with an amplitude-linear ramp, so the light shift
(proportional to power) grows as (t / t_switch)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import ExperimentConfig
from .potentials import PotentialModel

# valley-following settings
VALLEY_SPACING = 0.5e-6    # m, coarse x spacing for the transverse minimization
VALLEY_FD = 0.02e-6        # m, transverse finite-difference step
VALLEY_ITER = 8

PHASE_LIMIT = 0.1          # rad per step, potential/nonlinear and kinetic advance
POPULATED = 1e-8           # relative density (or momentum density) counted as occupied


class NonConfiningError(ValueError):
    pass


class StepSizeError(ValueError):
    """Time step too large for the phase advance per step."""


# -- 1D potentials -----------------------------------------------------------

def _valley(model: PotentialModel, label: str, xs: np.ndarray, y0: float, z0: float) -> tuple[np.ndarray, np.ndarray]:
    """(y, z) of the transverse minimum at each x, by batched Newton steps."""
    n = len(xs)
    yz = np.tile([y0, z0], (n, 1)).astype(float)
    h = VALLEY_FD
    offs = np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h], [h, h], [h, -h], [-h, h], [-h, -h]])
    for _ in range(VALLEY_ITER):
        pts = np.empty((n, 9, 3))
        pts[:, :, 0] = xs[:, None]
        pts[:, :, 1:] = yz[:, None, :] + offs[None]
        v = model.evaluate(pts.reshape(-1, 3)).of(label).reshape(n, 9)
        g = np.stack([(v[:, 1] - v[:, 2]) / (2 * h), (v[:, 3] - v[:, 4]) / (2 * h)], axis=1)
        hyy = (v[:, 1] - 2 * v[:, 0] + v[:, 2]) / h**2
        hzz = (v[:, 3] - 2 * v[:, 0] + v[:, 4]) / h**2
        hyz = (v[:, 5] - v[:, 6] - v[:, 7] + v[:, 8]) / (4 * h * h)
        det = hyy * hzz - hyz**2
        if np.any((det <= 0) | (hyy <= 0)):
            raise NonConfiningError("transverse potential not confining along the valley")
        step = -np.stack([hzz * g[:, 0] - hyz * g[:, 1], -hyz * g[:, 0] + hyy * g[:, 1]], axis=1) / det[:, None]
        yz = yz + step
        if np.max(np.abs(step)) < 1e-11:
            break
    return yz[:, 0], yz[:, 1]


def valley_potential(model: PotentialModel, label: str, x: np.ndarray) -> np.ndarray:
    """Potential (J) along the transverse valley of state ``label`` at positions x (m)."""
    rm = np.asarray(model.cfg.trap.r_m, float)
    lo, hi = x.min(), x.max()
    xs = np.arange(lo - VALLEY_SPACING, hi + 2 * VALLEY_SPACING, VALLEY_SPACING)
    y, z = _valley(model, label, xs, rm[1], rm[2])
    ys, zs = CubicSpline(xs, y)(x), CubicSpline(xs, z)(x)
    return model.evaluate(np.stack([x, ys, zs], axis=1)).of(label)


@dataclass
class LinePotentials:
    """Microwave-off and microwave-on potentials of both qubit states on a grid.

    ``V_off`` and ``V_on`` have shape (2, n): rows are states 0 and 1.
    """

    x: np.ndarray
    V_off: np.ndarray
    V_on: np.ndarray
    switch_time: float
    x_start: float          # minimum of V_off (state 0)
    x_on: np.ndarray        # minima of V_on, per state
    mass: float
    omega_perp: float

    def weight(self, t: float, t_off: float = math.inf) -> float:
        """Fraction of the final light shift at time t.

        The microwave amplitude rises linearly over ``switch_time`` from t = 0
        and falls linearly to zero at ``t_off``; the shift goes as amplitude^2.
        """
        edge = min(t, t_off - t)
        if edge <= 0:
            return 0.0
        if self.switch_time <= 0 or edge >= self.switch_time:
            return 1.0
        return (edge / self.switch_time) ** 2

    def at(self, t: float, t_off: float = math.inf) -> np.ndarray:
        w = self.weight(t, t_off)
        return self.V_off + w * (self.V_on - self.V_off)

    def pulse(self, t_off: float):
        """Potential callable for a microwave pulse ending at ``t_off``."""
        return lambda t: self.at(t, t_off)

    def splines(self, on: bool = True) -> list[CubicSpline]:
        V = self.V_on if on else self.V_off
        return [CubicSpline(self.x, V[k]) for k in range(2)]


def _grid_minimum(x, V):
    k = int(np.argmin(V))
    if k == 0 or k == len(V) - 1:
        raise NonConfiningError("potential minimum lies on the grid boundary")
    # parabolic refinement
    a, b, c = V[k - 1], V[k], V[k + 1]
    dx = x[1] - x[0]
    return x[k] + 0.5 * dx * (a - c) / (a - 2 * b + c)


def omega_perp(cfg: ExperimentConfig) -> float:
    if cfg.trap.mode == "ioffe":
        return 2 * math.pi * cfg.trap.f_perp
    from .trapchar import state_minimum, trap_frequencies
    c = cfg.replace(microwave={"P": 0.0})
    model = PotentialModel(c)
    r = state_minimum(c, "0", model=model, start=np.asarray(cfg.trap.r_m))
    rep = trap_frequencies(model.potential_function("0"), r, cfg.constants.mass_Rb87)
    return 2 * math.pi * float(np.sqrt(rep.frequencies[1] * rep.frequencies[2]))


def dynamics_grid(cfg: ExperimentConfig, center: float) -> np.ndarray:
    d = cfg.dynamics
    n = int(round(d.x_span / d.dx))
    return center + (np.arange(n) - n // 2) * d.dx


def line_potentials(cfg: ExperimentConfig, x: np.ndarray | None = None, P: float | None = None,
                    B_offset: float = 0.0) -> LinePotentials:
    """Valley potentials with the microwave off and on.

    Without ``x`` the grid is centred halfway between the microwave-off start
    position and the displaced state-0 minimum.
    """
    off = PotentialModel(cfg.replace(microwave={"P": 0.0}), B_offset=B_offset)
    on = PotentialModel(cfg, P=P, B_offset=B_offset)
    if x is None:
        coarse = np.asarray(cfg.trap.r_m)[0] + np.arange(-30e-6, 30e-6, 0.25e-6)
        x_s = _grid_minimum(coarse, valley_potential(off, "0", coarse))
        x_0 = _grid_minimum(coarse, valley_potential(on, "0", coarse))
        x = dynamics_grid(cfg, 0.5 * (x_s + x_0))
    v_off = valley_potential(off, "0", x)
    V_off = np.stack([v_off, valley_potential(off, "1", x)])
    V_on = np.stack([valley_potential(on, "0", x), valley_potential(on, "1", x)])
    return LinePotentials(x, V_off, V_on, cfg.ramsey.switch_time, _grid_minimum(x, v_off),
                          np.array([_grid_minimum(x, V_on[0]), _grid_minimum(x, V_on[1])]),
                          cfg.constants.mass_Rb87, omega_perp(cfg))


def couplings(cfg: ExperimentConfig, w_perp: float) -> np.ndarray:
    """1D couplings g_ij = 2 hbar omega_perp a_ij (J m), as a 2x2 matrix."""
    d = cfg.dynamics
    a = np.array([[d.a00, d.a01], [d.a01, d.a11]])
    return 2 * cfg.constants.hbar * w_perp * a


# -- states ------------------------------------------------------------------

@dataclass
class SpinorState:
    """Two-component wavefunction on a uniform grid, normalized to atom number."""

    x: np.ndarray
    psi: np.ndarray          # (2, n) complex
    t: float = 0.0

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def populations(self) -> np.ndarray:
        return np.sum(np.abs(self.psi) ** 2, axis=1) * self.dx

    @property
    def N(self) -> float:
        return float(self.populations.sum())

    def centroid(self) -> np.ndarray:
        """Centre of mass of each component (m); nan for an empty component."""
        n = np.abs(self.psi) ** 2
        w = n.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(w > 0, (n @ self.x) / np.where(w > 0, w, 1), np.nan)

    def overlap(self) -> complex:
        """<psi0|psi1> = integral conj(psi0) psi1 dx."""
        return complex(np.sum(np.conj(self.psi[0]) * self.psi[1]) * self.dx)

    def normalized_overlap(self) -> float:
        p = self.populations
        if p[0] <= 0 or p[1] <= 0:
            return 0.0
        return min(1.0, abs(self.overlap()) / math.sqrt(p[0] * p[1]))

    def copy(self) -> "SpinorState":
        return SpinorState(self.x.copy(), self.psi.copy(), self.t)


def _kinetic_k(x: np.ndarray) -> np.ndarray:
    return 2 * math.pi * np.fft.fftfreq(len(x), x[1] - x[0])


def energy(x, psi, V, g, mass, hbar) -> float:
    """Mean-field energy functional (J) for components psi (c, n), potentials V (c, n)."""
    psi = np.atleast_2d(psi)
    V = np.atleast_2d(V)
    g = np.atleast_2d(g)
    dx = x[1] - x[0]
    k = _kinetic_k(x)
    n = np.abs(psi) ** 2
    kin = np.sum(hbar**2 * k**2 / (2 * mass) * np.abs(np.fft.fft(psi, axis=1)) ** 2) * dx / len(x)
    pot = np.sum(V * n) * dx
    inter = 0.5 * np.einsum("in,ij,jn->", n, g, n) * dx
    return float(kin + pot + inter)


def ground_state(x: np.ndarray, V: np.ndarray, N: float, g: float, mass: float, hbar: float,
                 dtau: float = 5e-6, tol: float = 1e-10, max_steps: int = 200000,
                 history: list | None = None) -> np.ndarray:
    """Single-component ground state by imaginary-time split-step propagation.

    Stops when the relative energy change per step falls below ``tol``.  The
    energy per step is appended to ``history`` if given.
    """
    x = np.asarray(x, float)
    V = np.asarray(V, float)
    dx = x[1] - x[0]
    interior = V[len(V) // 10: -len(V) // 10 or None]
    if min(V[0], V[-1]) <= interior.min() or np.argmin(V) in (0, len(V) - 1):
        raise NonConfiningError("potential does not confine on the grid")
    Vs = V - V.min()
    # harmonic guess from the local curvature
    k0 = int(np.argmin(V))
    curv = (V[min(k0 + 1, len(V) - 1)] - 2 * V[k0] + V[max(k0 - 1, 0)]) / dx**2
    width = (hbar**2 / (mass * max(curv, 1e-40))) ** 0.25
    psi = np.exp(-((x - x[k0]) ** 2) / (2 * width**2)).astype(complex)
    psi *= math.sqrt(N / (np.sum(np.abs(psi) ** 2) * dx))
    kin = np.exp(-hbar * _kinetic_k(x) ** 2 * dtau / (2 * mass))
    e_old = energy(x, psi, Vs, g, mass, hbar)
    for _ in range(max_steps):
        half = np.exp(-(Vs + g * np.abs(psi) ** 2) * dtau / (2 * hbar))
        psi = half * psi
        psi = np.fft.ifft(kin * np.fft.fft(psi))
        psi = np.exp(-(Vs + g * np.abs(psi) ** 2) * dtau / (2 * hbar)) * psi
        psi *= math.sqrt(N / (np.sum(np.abs(psi) ** 2) * dx))
        e = energy(x, psi, Vs, g, mass, hbar)
        if history is not None:
            history.append(e + V.min() * N)
        if abs(e - e_old) <= tol * abs(e):
            return psi
        e_old = e
    raise RuntimeError("imaginary-time propagation did not converge")


def half_width(x: np.ndarray, psi: np.ndarray) -> float:
    """Half width at half maximum of |psi|^2 (m), with linear interpolation at the edges."""
    n = np.abs(psi) ** 2
    half = 0.5 * n.max()
    above = np.nonzero(n >= half)[0]
    i, j = above[0], above[-1]
    xl = np.interp(half, [n[i - 1], n[i]], [x[i - 1], x[i]])
    xr = np.interp(half, [n[j + 1], n[j]], [x[j + 1], x[j]])
    return 0.5 * (xr - xl)


# -- pulses ------------------------------------------------------------------

def rotation(area: float, phase: float) -> np.ndarray:
    """SU(2) matrix of a resonant pulse acting on (psi0, psi1)."""
    c, s = math.cos(area / 2), math.sin(area / 2)
    return np.array([[c, -1j * np.exp(-1j * phase) * s], [-1j * np.exp(1j * phase) * s, c]])


def apply_pulse(state: SpinorState, area: float, phase: float = 0.0, duration: float = 0.0,
                V: np.ndarray | None = None, g: np.ndarray | None = None, mass: float | None = None,
                hbar: float | None = None, dt: float = 1e-6) -> SpinorState:
    """Instantaneous rotation, or a finite pulse evolved together with the motion.

    The finite pulse runs at the Rabi frequency that gives ``area`` in
    ``duration``; it needs the potentials ``V`` (2, n), couplings, mass and hbar.
    """
    if not 0 <= area <= 2 * math.pi:
        raise ValueError("pulse area must lie in [0, 2 pi]")
    out = state.copy()
    if duration <= 0:
        out.psi = rotation(area, phase) @ state.psi
        return out
    if V is None or mass is None or hbar is None:
        raise ValueError("finite pulse needs potentials, mass and hbar")
    g = np.zeros((2, 2)) if g is None else g
    steps = max(1, int(round(duration / dt)))
    h = duration / steps
    rabi = area / duration
    kin = np.exp(-1j * hbar * _kinetic_k(state.x) ** 2 * h / (2 * mass))
    psi = out.psi
    for _ in range(steps):
        psi = _coupled_half(psi, V, g, rabi, phase, h / 2, hbar)
        psi = np.fft.ifft(kin[None] * np.fft.fft(psi, axis=1), axis=1)
        psi = _coupled_half(psi, V, g, rabi, phase, h / 2, hbar)
    out.psi = psi
    out.t = state.t + duration
    return out


def _coupled_half(psi, V, g, rabi, phase, tau, hbar):
    n = np.abs(psi) ** 2
    a = V[0] + g[0, 0] * n[0] + g[0, 1] * n[1]
    d = V[1] + g[1, 0] * n[0] + g[1, 1] * n[1]
    b = 0.5 * hbar * rabi * np.exp(-1j * phase)      # <0|H|1>
    mean = 0.5 * (a + d)
    half = 0.5 * (a - d)
    w = np.sqrt(half**2 + abs(b) ** 2) / hbar
    c = np.cos(w * tau)
    sinc = np.where(w > 0, np.sin(w * tau) / np.where(w > 0, w, 1.0), tau) / hbar
    ph = np.exp(-1j * mean * tau / hbar)
    p0 = ph * ((c - 1j * sinc * half) * psi[0] - 1j * sinc * b * psi[1])
    p1 = ph * (-1j * sinc * np.conj(b) * psi[0] + (c + 1j * sinc * half) * psi[1])
    return np.stack([p0, p1])


# -- real-time evolution -----------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    centroids: np.ndarray        # (n_t, 2)
    populations: np.ndarray      # (n_t, 2)
    overlaps: np.ndarray         # (n_t,) complex <psi0|psi1>
    final: SpinorState


def check_phase_advance(state: SpinorState, V: np.ndarray, g: np.ndarray, dt: float,
                        mass: float, hbar: float) -> dict:
    """Largest phase advance per step from the potential/nonlinear and kinetic terms.

    Both are measured where the state lives: the potential term over the
    occupied grid points (relative to its mean there, a common phase being
    irrelevant), the kinetic term over the occupied momenta.  The kinetic
    factor itself is applied exactly in Fourier space.
    """
    n = np.abs(state.psi) ** 2
    occ = n.sum(axis=0) > POPULATED * n.sum(axis=0).max()
    W = V + g @ n
    w_occ = W[:, occ]
    pot = float((w_occ.max() - w_occ.min()) * dt / hbar)
    pk = np.abs(np.fft.fft(state.psi, axis=1)) ** 2
    kocc = pk.sum(axis=0) > POPULATED * pk.sum(axis=0).max()
    k = _kinetic_k(state.x)[kocc]
    kin = float(hbar * np.max(k**2) * dt / (2 * mass))
    return {"potential": pot, "kinetic": kin}


class SplitStep:
    """Strang splitting: half potential + mean field, exact kinetic step, half potential."""

    def __init__(self, x: np.ndarray, dt: float, g: np.ndarray, mass: float, hbar: float):
        self.dt, self.g, self.hbar = dt, g, hbar
        self.kin = np.exp(-1j * hbar * _kinetic_k(x) ** 2 * dt / (2 * mass))[None]

    def step(self, psi: np.ndarray, V_a: np.ndarray, V_b: np.ndarray) -> np.ndarray:
        """One step; V_a and V_b are the potentials at the start and end of the step."""
        f = -1j * self.dt / (2 * self.hbar)
        psi = np.exp(f * (V_a + self.g @ (np.abs(psi) ** 2))) * psi
        psi = np.fft.ifft(self.kin * np.fft.fft(psi, axis=1), axis=1)
        return np.exp(f * (V_b + self.g @ (np.abs(psi) ** 2))) * psi


def _observables(psi, x, dx):
    n = np.abs(psi) ** 2
    w = n.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cent = np.where(w > 0, (n @ x) / np.where(w > 0, w, 1), np.nan)
    return cent, w * dx, complex(np.sum(np.conj(psi[0]) * psi[1]) * dx)


def evolve(state: SpinorState, potential, dt: float, T: float, g: np.ndarray, mass: float,
           hbar: float, record_every: int = 1, check: bool = True,
           renormalize: bool = False) -> Trajectory:
    """Strang split-step evolution of the coupled mean-field equations.

    ``potential`` is a (2, n) array or a callable t -> (2, n) array.
    Observables are recorded every ``record_every`` steps, including t = 0.
    """
    pot = potential if callable(potential) else (lambda t, _V=np.asarray(potential): _V)
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, dt):
        raise ValueError("T must be an integer number of time steps")
    if check:
        for V_chk in (pot(state.t), pot(state.t + T)):
            adv = check_phase_advance(state, V_chk, g, dt, mass, hbar)
            if max(adv.values()) > PHASE_LIMIT:
                raise StepSizeError(f"phase advance per step {adv} exceeds {PHASE_LIMIT} rad; reduce dt")
    stepper = SplitStep(state.x, dt, g, mass, hbar)
    psi = state.psi.copy()
    dx = state.dx
    N0 = np.sum(np.abs(psi) ** 2) * dx
    t0 = state.t
    nrec = steps // record_every + 1
    ts = np.empty(nrec)
    cents = np.empty((nrec, 2))
    pops = np.empty((nrec, 2))
    ovl = np.empty(nrec, complex)
    ts[0] = t0
    cents[0], pops[0], ovl[0] = _observables(psi, state.x, dx)
    V_a = pot(t0)
    for s in range(steps):
        t = t0 + s * dt
        V_b = pot(t + dt)
        psi = stepper.step(psi, V_a, V_b)
        V_a = V_b
        if renormalize:
            psi *= math.sqrt(N0 / (np.sum(np.abs(psi) ** 2) * dx))
        if (s + 1) % record_every == 0:
            i = (s + 1) // record_every
            ts[i] = t + dt
            cents[i], pops[i], ovl[i] = _observables(psi, state.x, dx)
    if not np.all(np.isfinite(psi)):
        raise FloatingPointError("non-finite wavefunction")
    return Trajectory(ts, cents, pops, ovl, SpinorState(state.x, psi, t0 + steps * dt))


# -- classical centre of mass ------------------------------------------------

@dataclass
class ComTrajectory:
    t: np.ndarray
    x: np.ndarray        # (n_t, 2)
    v: np.ndarray        # (n_t, 2)


def com_trajectory(lines: LinePotentials, T: float, dt: float, x_init=None, v_init=None,
                   t_off: float = math.inf, moving: bool = True) -> ComTrajectory:
    """Velocity-Verlet integration of m x'' = -dV/dx for both states (no interaction).

    The microwave follows the switching profile of ``lines`` and is ramped
    down to zero at ``t_off``.  ``moving=False`` pins both states at their
    initial positions (stationary-atom limit).
    """
    d_on = np.stack([lines.V_on[k] for k in range(2)])
    d_off = np.stack([lines.V_off[k] for k in range(2)])
    sp_on = CubicSpline(lines.x, d_on, axis=1).derivative()
    sp_off = CubicSpline(lines.x, d_off, axis=1).derivative()
    m = lines.mass
    idx = np.arange(2)

    def force(x, t):
        w = lines.weight(t, t_off)
        f_off = sp_off(x)[idx, idx]
        if w == 0:
            return -f_off
        return -(f_off + w * (sp_on(x)[idx, idx] - f_off))

    steps = int(round(T / dt))
    x = np.full(2, lines.x_start) if x_init is None else np.array(x_init, float)
    v = np.zeros(2) if v_init is None else np.array(v_init, float)
    xs = np.empty((steps + 1, 2))
    vs = np.empty((steps + 1, 2))
    xs[0], vs[0] = x, v
    if not moving:
        xs[:] = x
        vs[:] = 0.0
        return ComTrajectory(np.arange(steps + 1) * dt, xs, vs)
    a = force(x, 0.0) / m
    for s in range(steps):
        t = s * dt
        v_half = v + 0.5 * dt * a
        x = x + dt * v_half
        a = force(x, t + dt) / m
        v = v_half + 0.5 * dt * a
        xs[s + 1], vs[s + 1] = x, v
    return ComTrajectory(np.arange(steps + 1) * dt, xs, vs)


def oscillation_frequency(t: np.ndarray, x: np.ndarray) -> float:
    """Mean frequency from upward mean-crossings, interpolated (Hz)."""
    y = x - 0.5 * (x.max() + x.min())
    idx = np.nonzero((y[:-1] < 0) & (y[1:] >= 0))[0]
    if len(idx) < 2:
        raise ValueError("fewer than two oscillation periods recorded")
    tc = t[idx] - y[idx] * (t[idx + 1] - t[idx]) / (y[idx + 1] - y[idx])
    return float((len(tc) - 1) / (tc[-1] - tc[0]))


# -- sequences ---------------------------------------------------------------

@dataclass(frozen=True)
class Pulse:
    area: float
    phase: float = 0.0
    duration: float = 0.0


@dataclass(frozen=True)
class SetMicrowave:
    P: float
    Delta_m: float
    ramp: float


@dataclass(frozen=True)
class Hold:
    duration: float


@dataclass(frozen=True)
class Measure:
    pass


@dataclass
class SequenceSchedule:
    events: list = field(default_factory=list)

    def validate(self) -> None:
        for ev in self.events:
            if isinstance(ev, Pulse):
                if not 0 <= ev.area <= 2 * math.pi or ev.duration < 0:
                    raise ValueError(f"invalid pulse {ev}")
            elif isinstance(ev, SetMicrowave):
                if ev.ramp < 0 or ev.P < 0:
                    raise ValueError(f"invalid microwave setting {ev}")
            elif isinstance(ev, Hold):
                if ev.duration < 0:
                    raise ValueError("negative hold duration")
            elif not isinstance(ev, Measure):
                raise TypeError(f"unknown event {ev!r}")

    def times(self) -> list[float]:
        t, out = 0.0, []
        for ev in self.events:
            out.append(t)
            t += getattr(ev, "duration", 0.0) or getattr(ev, "ramp", 0.0)
        return out

    @classmethod
    def ramsey(cls, cfg: ExperimentConfig, T_R: float) -> "SequenceSchedule":
        r = cfg.ramsey
        d = r.pi2_duration if r.finite_pulses else 0.0
        return cls([Pulse(math.pi / 2, 0.0, d), SetMicrowave(cfg.microwave.P, cfg.microwave.Delta_m, r.switch_time),
                    Hold(max(T_R - r.switch_time, 0.0)), Pulse(math.pi / 2, 0.0, d), Measure()])


@dataclass
class RampReport:
    index: int
    duration: float
    internal_ratio: float     # max(|dDelta/dt|, |dOmega/dt|) / gap^2
    internal_adiabatic: bool
    periods: float            # ramp duration in trap periods
    motional: str             # sudden | adiabatic | intermediate


def check_adiabaticity(schedule: SequenceSchedule, cfg: ExperimentConfig,
                       sudden_below: float = 0.1, adiabatic_above: float = 10.0) -> list[RampReport]:
    """Classify every microwave ramp.

    Internal: the rates of change of the detuning and of the Rabi frequency
    (amplitude-linear ramp) against the squared dressed gap sqrt(Omega^2 +
    Delta^2), minimized over the ramp; flagged when the ratio exceeds 0.1.
    Motional: ramp time in units of the axial trap period.
    """
    from .trapchar import rabi_at
    from .magnetostatics import microwave_current
    schedule.validate()
    P, D = 0.0, cfg.microwave.Delta_m
    f_x = cfg.trap.f_x
    out = []
    for i, ev in enumerate(schedule.events):
        if not isinstance(ev, SetMicrowave):
            continue
        om0 = rabi_at(cfg, microwave_current(cfg, P)) if P > 0 else 0.0
        om1 = rabi_at(cfg, microwave_current(cfg, ev.P)) if ev.P > 0 else 0.0
        gap2 = min(om0**2 + D**2, om1**2 + ev.Delta_m**2, min(abs(D), abs(ev.Delta_m)) ** 2)
        if ev.ramp == 0:
            ratio = math.inf if (om1 != om0 or ev.Delta_m != D) else 0.0
        else:
            ratio = max(abs(om1 - om0), abs(ev.Delta_m - D)) / ev.ramp / gap2
        periods = ev.ramp * f_x
        regime = "sudden" if periods < sudden_below else "adiabatic" if periods > adiabatic_above else "intermediate"
        out.append(RampReport(i, ev.ramp, ratio, ratio <= 0.1, periods, regime))
        P, D = ev.P, ev.Delta_m
    return out


# -- Ramsey ------------------------------------------------------------------

@dataclass
class RamseyResult:
    T_R: np.ndarray
    N0: np.ndarray
    N1: np.ndarray
    overlap: np.ndarray
    phase: np.ndarray
    contrast: np.ndarray | None = None

    def rows(self):
        for i in range(len(self.T_R)):
            yield {"TR_ms": self.T_R[i] * 1e3, "N0": self.N0[i], "N1": self.N1[i],
                   "overlap": self.overlap[i],
                   "contrast_measure": np.nan if self.contrast is None else self.contrast[i]}


@dataclass
class RamseySetup:
    lines: LinePotentials
    g: np.ndarray
    psi0: SpinorState            # state right after the first pulse
    dV_ref: float                # V1 - V0 at the respective on-minima (J)


def prepare_ramsey(cfg: ExperimentConfig, lines: LinePotentials | None = None) -> RamseySetup:
    lines = lines or line_potentials(cfg)
    c = cfg.constants
    g = couplings(cfg, lines.omega_perp)
    N = cfg.dynamics.N
    psi = ground_state(lines.x, lines.V_off[0], N, g[0, 0], c.mass_Rb87, c.hbar)
    st = SpinorState(lines.x, np.stack([psi, np.zeros_like(psi)]))
    r = cfg.ramsey
    if r.finite_pulses:
        st = apply_pulse(st, math.pi / 2, 0.0, r.pi2_duration, lines.V_off, g, c.mass_Rb87, c.hbar,
                         cfg.dynamics.dt)
        st.t = 0.0
    else:
        st = apply_pulse(st, math.pi / 2)
    sp = lines.splines(True)
    dV = float(sp[1](lines.x_on[1]) - sp[0](lines.x_on[0]))
    return RamseySetup(lines, g, st, dV)


def _second_pulse(S: complex, n0: float, n1: float, phase: float) -> tuple[float, float]:
    """Populations after an instantaneous pi/2 pulse, from the norms and <psi0|psi1>."""
    cross = (1j * np.exp(-1j * phase) * S).real
    N1 = 0.5 * (n0 + n1) + cross
    N0 = 0.5 * (n0 + n1) - cross
    return float(N0), float(N1)


def ramsey_scan(cfg: ExperimentConfig, T_R: np.ndarray | None = None, setup: RamseySetup | None = None,
                pulse_phase: float = 0.0) -> RamseyResult:
    """Ramsey populations for a set of delays.

    T_R is the total microwave on-time: the amplitude ramps up over the switch
    time after the first pulse and back down before the second.  One main
    trajectory carries the state with the microwave on; for each delay a copy
    branches off and is evolved through the switch-off ramp.  The second
    pulse's phase advances at the fringe frequency and tracks the dressed
    transition between the trap bottoms (V1 - V0 at the minima, weighted by
    the switching profile).
    """
    r = cfg.ramsey
    dt = cfg.dynamics.dt
    if T_R is None:
        T_R = np.arange(0.0, r.TR_max + 0.5 * r.TR_step, r.TR_step)
    T_R = np.asarray(T_R, float)
    if np.any(T_R < 0):
        raise ValueError("T_R must be >= 0")
    setup = setup or prepare_ramsey(cfg)
    c = cfg.constants
    lines = setup.lines
    steps = np.round(T_R / dt).astype(int)
    n_sw = int(round(lines.switch_time / dt))
    stepper = SplitStep(lines.x, dt, setup.g, c.mass_Rb87, c.hbar)
    start = setup.psi0
    if steps.max() > 0:
        adv = check_phase_advance(start, lines.V_on, setup.g, dt, c.mass_Rb87, c.hbar)
        if max(adv.values()) > PHASE_LIMIT:
            raise StepSizeError(f"phase advance per step {adv} exceeds {PHASE_LIMIT} rad; reduce dt")

    def branch(psi, s0, s_end):
        pot = lines.pulse(s_end * dt)
        V_a = pot(s0 * dt)
        for s in range(s0, s_end):
            V_b = pot((s + 1) * dt)
            psi = stepper.step(psi, V_a, V_b)
            V_a = V_b
        return psi

    finals: dict[int, np.ndarray] = {}
    for s in sorted({int(s) for s in steps if s < 2 * n_sw}):
        finals[s] = branch(start.psi.copy(), 0, s)
    long_ = sorted({int(s) for s in steps if s >= 2 * n_sw})
    if long_:
        # the main trajectory is at full power from n_sw on; delays branch at s - n_sw
        bp = {s - n_sw: s for s in long_}
        last = max(bp)
        psi = start.psi.copy()
        V_a = lines.at(0.0)
        for s in range(last + 1):
            if s in bp:
                finals[bp[s]] = branch(psi.copy(), s, bp[s])
            if s == last:
                break
            V_b = lines.at((s + 1) * dt)
            psi = stepper.step(psi, V_a, V_b)
            V_a = V_b
    N0 = np.empty(len(T_R))
    N1 = np.empty(len(T_R))
    ov = np.empty(len(T_R))
    ph = np.empty(len(T_R))
    for i, s in enumerate(steps):
        psi = finals[int(s)]
        if not np.all(np.isfinite(psi)):
            raise FloatingPointError("non-finite wavefunction")
        _, (n0, n1), S = _observables(psi, lines.x, start.dx)
        frame = _profile_integral(lines.switch_time, s * dt) * setup.dV_ref / c.hbar
        phase = pulse_phase + 2 * math.pi * r.fringe_freq * s * dt - frame
        N0[i], N1[i] = _second_pulse(S, n0, n1, phase)
        ov[i] = min(1.0, abs(S) / math.sqrt(n0 * n1)) if n0 > 0 and n1 > 0 else 0.0
        ph[i] = float(np.angle(S))
    res = RamseyResult(T_R, N0, N1, ov, ph)
    try:
        res.contrast = contrast_measure(T_R, N1, r.window)
    except ValueError:
        res.contrast = None
    return res


def _profile_integral(tau: float, T: float) -> float:
    """Integral over [0, T] of the switching weight (amplitude-linear ramps of length tau)."""
    if tau <= 0:
        return T
    if T >= 2 * tau:
        return T - 4 * tau / 3
    h = T / 2
    return 2 * h**3 / (3 * tau**2)


def ramsey_run(cfg: ExperimentConfig, T_R: float, pulse_phase: float = 0.0,
               setup: RamseySetup | None = None) -> RamseyResult:
    return ramsey_scan(cfg, np.array([T_R]), setup=setup, pulse_phase=pulse_phase)


def contrast_measure(T_R: np.ndarray, N1: np.ndarray, window: float) -> np.ndarray:
    """Running sigma(N1) / mean(N1) over the half-open window [T - w/2, T + w/2).

    Entries whose window is cut by the ends of the series are nan.
    """
    T_R = np.asarray(T_R, float)
    N1 = np.asarray(N1, float)
    dt = T_R[1] - T_R[0] if len(T_R) > 1 else np.inf
    if window / dt < 4:
        raise ValueError("contrast window holds fewer than 4 samples")
    if dt > window / 4:
        raise ValueError("T_R sampling coarser than a quarter of the window")
    tol = 1e-9 * dt
    out = np.full(len(T_R), np.nan)
    for i, t in enumerate(T_R):
        lo, hi = t - window / 2, t + window / 2
        if lo < T_R[0] - tol or hi > T_R[-1] + dt + tol:
            continue
        sel = (T_R >= lo - tol) & (T_R < hi - tol)
        vals = N1[sel]
        m = vals.mean()
        out[i] = vals.std() / m if m > 0 else np.nan
    return out


@dataclass
class Recurrence:
    T_peak: float        # delay of the largest contrast measure after the collapse (s)
    peak: float
    floor: float         # median contrast measure between collapse and revival

    @property
    def ratio(self) -> float:
        return self.peak / self.floor if self.floor > 0 else math.inf


def recurrence(T_R: np.ndarray, contrast: np.ndarray, f_osc: float) -> Recurrence:
    """Locate the contrast revival for a cloud oscillating at f_osc (Hz).

    The peak is searched for T_R beyond half an oscillation period; the
    floor is the median over the second quarter of the period, where the
    two wavepackets are farthest apart.
    """
    T_R = np.asarray(T_R, float)
    c = np.asarray(contrast, float)
    period = 1.0 / f_osc
    ok = np.isfinite(c)
    late = ok & (T_R >= 0.5 * period)
    mid = ok & (T_R >= 0.25 * period) & (T_R <= 0.5 * period)
    if not late.any() or not mid.any():
        raise ValueError("T_R range does not cover the collapse and the revival")
    i = np.flatnonzero(late)[np.argmax(c[late])]
    return Recurrence(float(T_R[i]), float(c[i]), float(np.median(c[mid])))


# -- oscillation experiment --------------------------------------------------

@dataclass
class OscillationResult:
    t: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    x_start: float
    x_on: np.ndarray

    @property
    def peak_to_peak(self) -> float:
        return float(self.x0.max() - self.x0.min())

    def frequency(self) -> float:
        return oscillation_frequency(self.t, self.x0)


def oscillation(cfg: ExperimentConfig, T: float, record_every: int = 10,
                setup: RamseySetup | None = None) -> OscillationResult:
    """Centroids of both components after the first pulse and the microwave switch-on."""
    setup = setup or prepare_ramsey(cfg)
    c = cfg.constants
    traj = evolve(setup.psi0, setup.lines.at, cfg.dynamics.dt, T, setup.g, c.mass_Rb87, c.hbar,
                  record_every=record_every)
    return OscillationResult(traj.t, traj.centroids[:, 0], traj.centroids[:, 1],
                             setup.lines.x_start, setup.lines.x_on)
