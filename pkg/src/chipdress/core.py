"""Constants, unit conventions, grids and the experiment configuration.

Everything inside the package is SI.  Config files and CLI output use the
lab units (um, G, mA, mW, kHz, ms); every key in a config file carries its
unit as a suffix, e.g. ``P_mw_mW`` or ``r_m_um``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import scipy.constants as sc

TWO_PI = 2.0 * math.pi

# unit scale factors: external value * scale = SI value
UM = 1e-6
GAUSS = 1e-4
MG = 1e-7
MA = 1e-3
MW = 1e-3
UW = 1e-6
KHZ_ANG = TWO_PI * 1e3
MS = 1e-3
US = 1e-6
BOHR = sc.physical_constants["Bohr radius"][0]


class ConfigError(ValueError):
    """Invalid or unparsable configuration."""


@dataclass(frozen=True)
class PhysicalConstants:
    mu_B: float = sc.physical_constants["Bohr magneton"][0]
    hbar: float = sc.hbar
    h: float = sc.h
    mu_0: float = sc.mu_0
    eps_0: float = sc.epsilon_0
    mass_Rb87: float = 86.909180527 * sc.atomic_mass
    g_J: float = 2.002331
    g_I: float = -0.000995
    omega_hfs: float = TWO_PI * 6.834682611e9
    g_grav: float = sc.g
    # literature values, not fixed by the experiment; overridable from config
    alpha_0: float = 4.0 * math.pi * sc.epsilon_0 * 47.39e-30
    C4: float = 8.2e-56

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "g_I":
                if not v < 0:
                    raise ConfigError(f"constant g_I must be negative, got {v}")
            elif not (math.isfinite(v) and v > 0):
                raise ConfigError(f"constant {f.name} must be positive, got {v}")

    @property
    def mu_B_over_h(self) -> float:
        """Bohr magneton in Hz/T."""
        return self.mu_B / self.h


CONSTANTS = PhysicalConstants()


def _unit(key: str, scale: float = 1.0, **kw):
    return field(metadata={"key": key, "scale": scale}, **kw)


@dataclass(frozen=True)
class Grid3:
    """Axis-aligned sampling grid. Origin and spacing in metres."""

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    counts: tuple[int, int, int]

    def __post_init__(self):
        for d, n in zip(self.spacing, self.counts):
            if n < 1:
                raise ValueError("grid counts must be >= 1")
            if n >= 2 and not d > 0:
                raise ValueError("grid spacing must be > 0 on sampled axes")
        if not any(n >= 2 for n in self.counts):
            raise ValueError("grid must sample at least one axis with >= 2 points")

    def axes(self) -> list[np.ndarray]:
        return [o + d * np.arange(n) for o, d, n in zip(self.origin, self.spacing, self.counts)]

    def points(self) -> np.ndarray:
        """All grid points as an (N, 3) array, C-ordered over (x, y, z)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts

    @classmethod
    def line(cls, start, direction_axis: int, spacing: float, n: int) -> "Grid3":
        sp = [0.0, 0.0, 0.0]
        cnt = [1, 1, 1]
        sp[direction_axis] = spacing
        cnt[direction_axis] = n
        return cls(tuple(float(v) for v in start), tuple(sp), tuple(cnt))


@dataclass(frozen=True)
class WireSpec:
    start: tuple[float, float, float] = _unit("start_um", UM)
    end: tuple[float, float, float] = _unit("end_um", UM)
    width: float = _unit("width_um", UM, default=6 * UM)
    height: float = _unit("height_um", UM, default=1 * UM)
    current: float = _unit("I_mA", MA, default=0.0)


@dataclass(frozen=True)
class TrapConfig:
    mode: str = _unit("mode", default="ioffe")
    B0: float = _unit("B0_G", GAUSS, default=3.23 * GAUSS)
    r_m: tuple[float, float, float] = _unit("r_m_um", UM, default=(-12 * UM, 0.0, 44 * UM))
    f_x: float = _unit("f_x_Hz", default=109.0)
    f_perp: float = _unit("f_perp_Hz", default=500.0)
    axis: str = _unit("axis", default="x")
    bias: tuple[float, float, float] = _unit("bias_G", GAUSS, default=(0.0, 0.0, 0.0))
    wires: tuple[WireSpec, ...] = _unit("wires", default=())


@dataclass(frozen=True)
class CpwConfig:
    width: float = _unit("width_um", UM, default=6 * UM)
    height: float = _unit("height_um", UM, default=1 * UM)
    gap: float = _unit("gap_um", UM, default=4 * UM)
    length: float = _unit("length_um", UM, default=4000 * UM)
    center_x: float = _unit("center_x_um", UM, default=0.0)
    a1: float = _unit("a1", default=0.5)
    a2: float = _unit("a2", default=0.5)
    Z0: float = _unit("Z0_ohm", default=70.0)


@dataclass(frozen=True)
class MicrowaveConfig:
    P: float = _unit("P_mw_mW", MW, default=120 * MW)
    Delta_m: float = _unit("Delta_kHz", KHZ_ANG, default=150 * KHZ_ANG)
    P_ref: float = _unit("P_ref_mW", MW, default=120 * MW)
    I_ref: float = _unit("I_ref_mA", MA, default=76 * MA)
    Omega_ref: float = _unit("Omega_ref_kHz", KHZ_ANG, default=122 * KHZ_ANG)

    @property
    def enabled(self) -> bool:
        return self.P > 0

    @property
    def I_mw(self) -> float:
        """Current amplitude at the chip centre, I_ref * sqrt(P / P_ref)."""
        return self.I_ref * math.sqrt(self.P / self.P_ref)


@dataclass(frozen=True)
class PotentialConfig:
    mode: str = _unit("mode", default="exact")
    zeeman: str = _unit("zeeman", default="linear")
    gravity: bool = _unit("gravity", default=True)
    gravity_dir: tuple[float, float, float] = _unit("gravity_dir", default=(0.0, 0.0, -1.0))
    casimir_polder: bool = _unit("casimir_polder", default=True)
    cp_cutoff: float = _unit("cp_cutoff_um", UM, default=0.5 * UM)
    electric: bool = _unit("electric", default=False)


@dataclass(frozen=True)
class DynamicsConfig:
    N: int = _unit("N", default=400)
    dx: float = _unit("dx_um", UM, default=0.05 * UM)
    dt: float = _unit("dt_us", US, default=1.0 * US)
    x_span: float = _unit("x_span_um", UM, default=40 * UM)
    a00: float = _unit("a00_bohr", BOHR, default=100.4 * BOHR)
    a11: float = _unit("a11_bohr", BOHR, default=100.4 * BOHR)
    a01: float = _unit("a01_bohr", BOHR, default=100.4 * BOHR)


@dataclass(frozen=True)
class RamseyConfig:
    pi2_duration: float = _unit("pi2_duration_us", US, default=170 * US)
    fringe_freq: float = _unit("fringe_freq_kHz", 1e3, default=1e3 / 0.150)
    window: float = _unit("window_ms", MS, default=0.150 * MS)
    switch_time: float = _unit("switch_time_us", US, default=50 * US)
    TR_max: float = _unit("TR_max_ms", MS, default=10 * MS)
    TR_step: float = _unit("TR_step_ms", MS, default=0.01 * MS)
    finite_pulses: bool = _unit("finite_pulses", default=False)


@dataclass(frozen=True)
class NoiseConfig:
    dB: float = _unit("dB_mG", MG, default=0.2 * MG)
    dP: float = _unit("dP_uW", UW, default=20 * UW)
    dN: float = _unit("dN", default=21.0)
    dphi_dN: float = _unit("dphi_dN_rad", default=0.0)
    observed: float = _unit("observed_pi", math.pi, default=0.037 * math.pi / 0.30)
    TR: float = _unit("TR_ms", MS, default=8.4 * MS)


@dataclass(frozen=True)
class ExperimentConfig:
    trap: TrapConfig = _unit("trap", default_factory=TrapConfig)
    cpw: CpwConfig = _unit("cpw", default_factory=CpwConfig)
    microwave: MicrowaveConfig = _unit("microwave", default_factory=MicrowaveConfig)
    potential: PotentialConfig = _unit("potential", default_factory=PotentialConfig)
    dynamics: DynamicsConfig = _unit("dynamics", default_factory=DynamicsConfig)
    ramsey: RamseyConfig = _unit("ramsey", default_factory=RamseyConfig)
    noise: NoiseConfig = _unit("noise", default_factory=NoiseConfig)
    constants: PhysicalConstants = field(default=CONSTANTS, metadata={"key": "constants"})

    @property
    def omega(self) -> float:
        """Drive frequency putting the detuning at the trap minimum at Delta_m."""
        return resolve_drive_frequency(self.microwave.Delta_m, self.trap.B0, self.constants)

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with some sub-config fields replaced, e.g. replace(microwave={"P": 0.0})."""
        kw = {}
        for name, changes in sections.items():
            sub = getattr(self, name)
            kw[name] = dataclasses.replace(sub, **changes) if isinstance(changes, dict) else changes
        return dataclasses.replace(self, **kw)


_CONSTANT_KEYS = {"alpha_0": ("alpha0_Cm2_per_V", 1.0), "C4": ("C4_Jm4", 1.0)}


def _convert(value, scale, inverse=False):
    if isinstance(value, bool) or isinstance(value, str) or scale == 1.0:
        return tuple(value) if isinstance(value, list) else value
    # external values are rounded to 12 significant digits to drop unit-conversion noise
    op = (lambda v: float(f"{v / scale:.12g}")) if inverse else (lambda v: v * scale)
    if isinstance(value, (list, tuple)):
        return tuple(op(float(v)) for v in value)
    return op(float(value))


def _section_from_dict(cls, data: dict, where: str):
    known = {f.metadata["key"]: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {}
    for key, value in data.items():
        f = known[key]
        if f.name == "wires":
            kw["wires"] = tuple(_section_from_dict(WireSpec, w, f"{where}.wires") for w in value)
        else:
            kw[f.name] = _convert(value, f.metadata["scale"])
    return cls(**kw)


def _section_to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if f.name == "wires":
            out[f.metadata["key"]] = [_section_to_dict(w) for w in v]
        else:
            conv = _convert(v, f.metadata["scale"], inverse=True)
            out[f.metadata["key"]] = list(conv) if isinstance(conv, tuple) else conv
    return out


def config_from_dict(data: dict) -> ExperimentConfig:
    sections = {f.metadata["key"]: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kw = {}
    for key, value in data.items():
        f = sections[key]
        if key == "constants":
            inv = {k: name for name, (k, _) in _CONSTANT_KEYS.items()}
            bad = set(value) - set(inv)
            if bad:
                raise ConfigError(f"constants: unknown keys {sorted(bad)}")
            kw["constants"] = dataclasses.replace(CONSTANTS, **{inv[k]: float(v) for k, v in value.items()})
        else:
            kw[f.name] = _section_from_dict(f.type if isinstance(f.type, type) else globals()[f.type], value, key)
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        if f.name == "constants":
            out["constants"] = {k: getattr(cfg.constants, name) for name, (k, _) in _CONSTANT_KEYS.items()}
        else:
            out[f.metadata["key"]] = _section_to_dict(getattr(cfg, f.name))
    return out


def validate(cfg: ExperimentConfig) -> None:
    """Raise ConfigError naming the offending field and its bound."""
    mw, trap, dyn = cfg.microwave, cfg.trap, cfg.dynamics
    if not mw.P >= 0:
        raise ConfigError("microwave.P_mw_mW must be >= 0")
    if mw.enabled and mw.Delta_m == 0:
        raise ConfigError("microwave.Delta_kHz = 0: resonant drive unsupported")
    if not (mw.P_ref > 0 and mw.I_ref > 0):
        raise ConfigError("microwave.P_ref_mW and I_ref_mA must be > 0")
    if dyn.N < 1:
        raise ConfigError("dynamics.N must be >= 1")
    if not (dyn.dx > 0 and dyn.dt > 0 and dyn.x_span > 2 * dyn.dx):
        raise ConfigError("dynamics.dx_um, dt_us must be > 0 and x_span_um > 2 dx")
    if trap.mode not in ("ioffe", "wires"):
        raise ConfigError(f"trap.mode must be 'ioffe' or 'wires', got {trap.mode!r}")
    if trap.axis != "x":
        raise ConfigError("trap.axis: only 'x' is supported")
    if not trap.r_m[2] > 0:
        raise ConfigError("trap.r_m_um: z must lie above the chip surface (z > 0)")
    if trap.mode == "ioffe":
        if not (trap.B0 > 0 and trap.f_x > 0 and trap.f_perp > 0):
            raise ConfigError("trap.B0_G, f_x_Hz, f_perp_Hz must be > 0")
    c = cfg.cpw
    if not (c.width > 0 and c.height > 0 and c.gap > 0 and c.length > 0):
        raise ConfigError("cpw.width_um, height_um, gap_um, length_um must be > 0")
    if abs(c.a1 + c.a2 - 1.0) > 1e-12:
        raise ConfigError(f"cpw.a1 + cpw.a2 must equal 1, got {c.a1 + c.a2}")
    if cfg.potential.mode not in ("exact", "perturbative"):
        raise ConfigError("potential.mode must be 'exact' or 'perturbative'")
    if cfg.potential.zeeman not in ("linear", "breit_rabi"):
        raise ConfigError("potential.zeeman must be 'linear' or 'breit_rabi'")
    if np.linalg.norm(cfg.potential.gravity_dir) == 0:
        raise ConfigError("potential.gravity_dir must be non-zero")
    n = cfg.noise
    if min(n.dB, n.dP, n.dN) < 0 or not n.observed > 0:
        raise ConfigError("noise fluctuations must be >= 0 and observed_pi > 0")


def default_config_path() -> Path:
    return Path(str(resources.files("chipdress") / "data" / "splitting_config.json"))


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Read a JSON config; ``None`` loads the bundled experiment config."""
    path = Path(path) if path is not None else default_config_path()
    try:
        data: Any = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return config_from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_drive_frequency(Delta_m: float, B_at_minimum: float,
                            constants: PhysicalConstants = CONSTANTS) -> float:
    """Angular drive frequency omega with omega - omega_hfs + mu_B B / hbar = Delta_m."""
    if not B_at_minimum >= 0:
        raise ValueError("field magnitude at the trap minimum must be >= 0")
    return constants.omega_hfs - constants.mu_B * B_at_minimum / constants.hbar + Delta_m


def detuning(omega: float, B: float | np.ndarray, constants: PhysicalConstants = CONSTANTS):
    """Detuning of the |1,-1> <-> |2,-1> transition at local field magnitude B."""
    return omega - constants.omega_hfs + constants.mu_B * np.asarray(B) / constants.hbar
