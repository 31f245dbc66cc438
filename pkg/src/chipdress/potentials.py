"""State-dependent potentials of the dressed qubit states.

V_0bar = E(0) - hbar Delta0 / 2 and V_1bar = E(1) + hbar Delta0 / 2, where E(n)
is the dressed energy adiabatically connected to |1,-1> (resp. |2,+1>), plus
the state-independent terms: gravity, the quasi-electrostatic microwave
potential -alpha0 |E|^2 / 4, and a Casimir-Polder -C4 / z^4 attraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hyperfine as hf
from .core import ExperimentConfig, Grid3
from .magnetostatics import (CpwGeometry, cpw_electric_field, cpw_microwave_field,
                             microwave_current, static_trap_model)

_M_F = np.array([m for _, m in hf.BASIS], float)
LABELS = {"0": hf.STATE_0, "1": hf.STATE_1, "2": hf.STATE_2}


def _label_index(label) -> int:
    if isinstance(label, str):
        if label not in LABELS:
            raise KeyError(f"unknown state label {label!r}; use '0', '1', '2' or (F, m)")
        return LABELS[label]
    if isinstance(label, tuple):
        return hf.index(*label)
    if isinstance(label, (int, np.integer)) and 0 <= label < 8:
        return int(label)
    raise KeyError(f"label {label!r} not in basis")


@dataclass
class PotentialSample:
    """Potentials (J) and local microwave parameters at a batch of points."""

    points: np.ndarray
    V: np.ndarray            # (N, 8) total potential per bare label
    V_Z: np.ndarray          # mu_B |B| / 2
    V_common: np.ndarray     # gravity + V_e + V_CP
    Vmw_exact: np.ndarray | None
    Vmw_pert: np.ndarray | None
    Omega_R: np.ndarray
    Delta: np.ndarray
    ratio0: np.ndarray       # largest |Omega| / |Delta| among the transitions of |1,-1>

    def of(self, label) -> np.ndarray:
        return self.V[:, _label_index(label)]


class PotentialModel:
    """Evaluates the full potential landscape for one configuration.

    ``overrides`` are handy for sensitivities: ``P`` (W) sets the microwave
    power, ``B_offset`` (T) adds a uniform field along the local trap bias
    while keeping the drive frequency fixed at its nominal value.
    """

    def __init__(self, cfg: ExperimentConfig, P: float | None = None, B_offset: float = 0.0,
                 mode: str | None = None):
        self.cfg = cfg
        self.const = cfg.constants
        self.trap = static_trap_model(cfg.trap, cfg.constants)
        self.geom = CpwGeometry.from_config(cfg.cpw)
        self.P = cfg.microwave.P if P is None else P
        self.I_mw = microwave_current(cfg, self.P)
        self.omega = cfg.omega
        self.B_offset = B_offset
        self.mode = mode or cfg.potential.mode
        self.r_ref = np.asarray(cfg.trap.r_m)
        b = self.trap.field(self.r_ref)
        self.bias_dir = b / np.linalg.norm(b)

    @property
    def microwave_on(self) -> bool:
        return self.P > 0

    def static_field(self, pts: np.ndarray) -> np.ndarray:
        B = self.trap.field(pts)
        if self.B_offset:
            B = B + self.B_offset * self.bias_dir
        return B

    def common_terms(self, pts: np.ndarray) -> np.ndarray:
        pc = self.cfg.potential
        c = self.const
        out = np.zeros(len(pts))
        if pc.gravity:
            g = np.asarray(pc.gravity_dir, float)
            g = g / np.linalg.norm(g)
            out += -c.mass_Rb87 * c.g_grav * ((pts - self.r_ref) @ g)
        if pc.electric and self.microwave_on:
            E = cpw_electric_field(self.geom, self.P, pts, c)
            out += -0.25 * c.alpha_0 * np.sum(E**2, axis=-1)
        if pc.casimir_polder:
            z = np.maximum(pts[:, 2], pc.cp_cutoff)
            out += -c.C4 / z**4
        return out

    def evaluate(self, r, mode: str | None = None, follow: bool = False,
                 with_perturbative: bool = False) -> PotentialSample:
        """Evaluate at points r (m), shape (3,) or (N, 3).

        ``follow`` labels dressed states by continuity along the point order
        (for lines), instead of by overlap with the bare basis at each point.
        The second-order shifts are filled in for ``mode="perturbative"`` or
        when ``with_perturbative`` is set.
        """
        mode = mode or self.mode
        pts = np.atleast_2d(np.asarray(r, float))
        if np.any(pts[:, 2] <= 0):
            raise ValueError("evaluation point at or below the chip surface (z <= 0)")
        c = self.const
        B = self.static_field(pts)
        common = self.common_terms(pts)
        Bmw = cpw_microwave_field(self.geom, self.I_mw, pts) if self.microwave_on else np.zeros_like(pts)
        H = hf.build_rwa_hamiltonian(B, Bmw, self.omega, self.cfg.potential.zeeman, c)
        V_Z = c.hbar * H.omega_L          # mu_B |B| / 2
        diag = np.real(np.diagonal(H.matrix, axis1=1, axis2=2))
        offset = np.where(np.arange(8) < 3, -0.5, 0.5) * c.hbar * H.Delta0
        if self.cfg.potential.zeeman == "linear":
            # written out so that the +-hbar Delta0 / 2 bookkeeping cancels exactly
            bare = c.hbar * H.omega_L[:, None] * np.where(np.arange(8) < 3, -1.0, 1.0) * _M_F
        else:
            bare = diag + offset
        Vmw_exact = Vmw_pert = None
        if not self.microwave_on:
            level = bare
        else:
            if (with_perturbative or mode == "perturbative") and _pert_ok(H):
                Vmw_pert = hf.perturbative_shifts(H)
            if mode == "exact":
                spec = hf.dressed_spectrum(H)
                if follow:
                    spec = _follow_labels(spec)
                E = np.stack([spec.energy_of(k) for k in range(8)], axis=1)
                level = E + offset
                Vmw_exact = level - bare
            elif mode == "perturbative":
                if Vmw_pert is None:
                    raise ValueError("perturbative limit invalid: a coupled transition is resonant")
                level = bare + Vmw_pert
            else:
                raise ValueError(f"unknown potential mode {mode!r}")
        return PotentialSample(pts, level + common[:, None], V_Z, common, Vmw_exact, Vmw_pert,
                               H.Omega_R, H.Delta, hf.perturbation_parameter(H, hf.STATE_0))

    def V(self, label, r, mode: str | None = None) -> np.ndarray:
        s = self.evaluate(r, mode)
        v = s.of(label)
        return v[0] if np.ndim(r) == 1 else v

    def potential_function(self, label, mode: str | None = None):
        """Scalar callable V(r) for minimizers, plus a batched ``.batch`` attribute."""
        idx = _label_index(label)

        def f(r):
            return float(self.evaluate(r, mode).V[0, idx])

        f.batch = lambda pts: self.evaluate(pts, mode).V[:, idx]
        return f


def _pert_ok(H: hf.RwaHamiltonian) -> bool:
    return not np.any(hf.resonant(H))


def _follow_labels(spec: hf.DressedSpectrum) -> hf.DressedSpectrum:
    """Relabel sequentially: point i inherits labels from point i-1 by eigenvector overlap."""
    labels = spec.labels.copy()
    for i in range(1, len(labels)):
        ov = np.abs(np.conj(spec.vectors[i - 1]).T @ spec.vectors[i]) ** 2  # [prev dressed, cur dressed]
        prev_to_cur = np.argmax(ov, axis=1)
        if len(set(prev_to_cur)) == 8:
            labels[i, prev_to_cur] = labels[i - 1]
    return hf.DressedSpectrum(spec.energies, spec.vectors, labels, spec.ambiguous)


def state_potential(label, r, cfg: ExperimentConfig, mode: str = "exact"):
    """Total potential (J) of the dressed state with bare label ``label`` at r (m)."""
    return PotentialModel(cfg, mode=mode).V(label, r)


@dataclass
class PotentialGrid:
    """Potentials sampled on a grid, J, arrays shaped like ``grid.shape``."""

    grid: Grid3
    V0: np.ndarray
    V1: np.ndarray
    Vmw_exact: np.ndarray
    Vmw_pert: np.ndarray
    Omega_R: np.ndarray
    ratio0: np.ndarray           # perturbation parameter of |0bar>
    provenance: dict = field(default_factory=dict)

    def coordinate(self) -> np.ndarray:
        """Coordinate along the single sampled axis of a line grid (m)."""
        axes = [k for k, n in enumerate(self.grid.counts) if n > 1]
        if len(axes) != 1:
            raise ValueError("coordinate() needs a line grid")
        return self.grid.axes()[axes[0]]

    def in_kHz(self, h: float) -> dict[str, np.ndarray]:
        return {"V0_kHz": self.V0 / h / 1e3, "V1_kHz": self.V1 / h / 1e3,
                "Vmw_exact_kHz": self.Vmw_exact / h / 1e3, "Vmw_pert_kHz": self.Vmw_pert / h / 1e3}


def potential_slice(cfg: ExperimentConfig, grid: Grid3, follow: bool = True) -> PotentialGrid:
    model = PotentialModel(cfg)
    pts = grid.points()
    s = model.evaluate(pts, follow=follow, with_perturbative=True)
    if model.microwave_on:
        s_exact = s if s.Vmw_exact is not None else model.evaluate(pts, mode="exact", follow=follow)
        exact = s_exact.Vmw_exact[:, hf.STATE_0]
        pert = s.Vmw_pert[:, hf.STATE_0] if s.Vmw_pert is not None else np.full(len(pts), np.nan)
    else:
        exact = pert = np.zeros(len(pts))
    V0, V1 = s.of("0"), s.of("1")
    if not (np.all(np.isfinite(V0)) and np.all(np.isfinite(V1))):
        raise FloatingPointError("non-finite potential on grid")
    pc = cfg.potential
    prov = {"mode": model.mode, "zeeman": pc.zeeman, "microwave": model.microwave_on,
            "gravity": pc.gravity, "electric": pc.electric and model.microwave_on,
            "casimir_polder": pc.casimir_polder, "P_mw_mW": model.P * 1e3,
            "Delta_kHz": cfg.microwave.Delta_m / (2e3 * np.pi), "I_mw_mA": model.I_mw * 1e3}
    shp = grid.shape
    return PotentialGrid(grid, V0.reshape(shp), V1.reshape(shp), exact.reshape(shp), pert.reshape(shp),
                         np.abs(s.Omega_R).reshape(shp), s.ratio0.reshape(shp), prov)
