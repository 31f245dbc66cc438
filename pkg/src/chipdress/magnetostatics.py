"""Static trap fields and quasi-static CPW near-fields.

All positions in metres, fields in tesla, currents in ampere.  Functions take
a single point (3,) or a batch (N, 3) and return the same leading shape.

The microwave field is the static field of the CPW current amplitudes
(homogeneous current density, no retardation, no induced currents); treat it
as carrying a ~10 % model error in its spatial dependence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import CONSTANTS, CpwConfig, ExperimentConfig, PhysicalConstants, TrapConfig

MU0_4PI = CONSTANTS.mu_0 / (4 * math.pi)
MICROWAVE_MODEL_ERROR = 0.10

_GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)
_MAX_PANELS = 64


class InsideConductorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WireSegment:
    """Straight bar with rectangular cross-section and uniform current density.

    ``width_dir`` fixes the orientation of the cross-section; by default it is
    the horizontal direction perpendicular to the wire.
    """

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    width: float
    height: float
    current: float
    width_dir: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("wire segment must have finite length > 0")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("wire cross-section must be > 0")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.end, self.start)))

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Unit vectors (along current, across width, across height)."""
        u = np.subtract(self.end, self.start) / self.length
        if self.width_dir is not None:
            w = np.asarray(self.width_dir, float)
            w = w - (w @ u) * u
        else:
            w = np.cross([0.0, 0.0, 1.0], u)
            if np.linalg.norm(w) < 1e-12:
                w = np.cross([0.0, 1.0, 0.0], u)
        w /= np.linalg.norm(w)
        hdir = np.cross(u, w)
        return u, w, hdir

    def scaled(self, factor: float) -> "WireSegment":
        return WireSegment(self.start, self.end, self.width, self.height, self.current * factor, self.width_dir)


def thin_wire_field(a: np.ndarray, b: np.ndarray, current: float, r: np.ndarray) -> np.ndarray:
    """Field of a filament from ``a`` to ``b`` at points r (N, 3); a, b may be (N, 3)."""
    ab = b - a
    L = np.linalg.norm(ab, axis=-1, keepdims=True)
    u = ab / L
    d = r - a
    ell = np.sum(d * u, axis=-1, keepdims=True)
    rho_vec = d - ell * u
    rho2 = np.sum(rho_vec**2, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        geom = ell / np.sqrt(rho2 + ell**2) - (ell - L) / np.sqrt(rho2 + (ell - L) ** 2)
        coef = np.where(rho2 > 0, MU0_4PI * current * geom / rho2, 0.0)
    return coef * np.cross(u, rho_vec)


def _panel_counts(seg: WireSegment, r: np.ndarray, frame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u, w, hdir = frame
    mid = 0.5 * (np.asarray(seg.start) + np.asarray(seg.end))
    d = r - mid
    dw = np.abs(d @ w) - seg.width / 2
    dh = np.abs(d @ hdir) - seg.height / 2
    du = np.abs(d @ u) - seg.length / 2
    # distance to the bar's bounding box
    dist = np.sqrt(np.maximum(dw, 0) ** 2 + np.maximum(dh, 0) ** 2 + np.maximum(du, 0) ** 2)
    inside = (dw < 0) & (dh < 0) & (du < 0)
    safe = np.where(dist > 0, dist, np.inf)
    nw = np.clip(np.ceil(seg.width / safe), 1, _MAX_PANELS).astype(int)
    nh = np.clip(np.ceil(seg.height / safe), 1, _MAX_PANELS).astype(int)
    nw[dist == 0] = _MAX_PANELS
    nh[dist == 0] = _MAX_PANELS
    return nw, nh, inside


def _cross_section_nodes(seg: WireSegment, nw: int, nh: int, frame):
    _, w, hdir = frame
    edges_w = np.linspace(-seg.width / 2, seg.width / 2, nw + 1)
    edges_h = np.linspace(-seg.height / 2, seg.height / 2, nh + 1)
    cw = 0.5 * (edges_w[:-1] + edges_w[1:])
    ch = 0.5 * (edges_h[:-1] + edges_h[1:])
    hw = 0.5 * (edges_w[1] - edges_w[0])
    hh = 0.5 * (edges_h[1] - edges_h[0])
    sw = (cw[:, None] + hw * _GL_X[None, :]).ravel()
    ww = np.tile(hw * _GL_W, nw)
    sh = (ch[:, None] + hh * _GL_X[None, :]).ravel()
    wh = np.tile(hh * _GL_W, nh)
    offs = sw[:, None, None] * w + sh[None, :, None] * hdir
    weights = ww[:, None] * wh[None, :] / (seg.width * seg.height)
    return offs.reshape(-1, 3), weights.ravel()


def field_of_segment(seg: WireSegment, r) -> np.ndarray:
    """Field of a uniform-current rectangular bar.

    Tensor Gauss-Legendre quadrature of the filament kernel over the
    cross-section, with panel size no larger than the distance to the bar, so
    the relative error stays far below 1e-6 outside the conductor.  Points
    inside the conductor get a finely paneled result and an
    InsideConductorWarning.
    """
    r = np.asarray(r, float)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite evaluation point")
    single = r.ndim == 1
    pts = np.atleast_2d(r)
    out = np.zeros_like(pts)
    if seg.current == 0:
        return out[0] if single else out
    frame = seg.frame()
    nw, nh, inside = _panel_counts(seg, pts, frame)
    if inside.any():
        warnings.warn(f"{int(inside.sum())} point(s) inside conductor; field is a quadrature estimate",
                      InsideConductorWarning, stacklevel=2)
    a0, b0 = np.asarray(seg.start, float), np.asarray(seg.end, float)
    keys = nw * (_MAX_PANELS + 1) + nh
    for key in np.unique(keys):
        sel = np.nonzero(keys == key)[0]
        offs, wts = _cross_section_nodes(seg, int(key // (_MAX_PANELS + 1)), int(key % (_MAX_PANELS + 1)), frame)
        f = thin_wire_field((a0 + offs)[:, None, :], (b0 + offs)[:, None, :], seg.current, pts[sel][None, :, :])
        out[sel] = np.tensordot(wts, f, axes=1)
    return out[0] if single else out


# -- static trap -----------------------------------------------------------

@dataclass(frozen=True)
class IoffeTrap:
    """Ioffe-Pritchard field about r_m: bias B0 along x, curvature b2, radial gradient Bp.

    B = B0 x + Bp (0, y, -z) + b2/2 (x^2 - (y^2+z^2)/2, -x y, -x z), coordinates
    relative to r_m.  Divergence- and curl-free.
    """

    B0: float
    b2: float
    Bp: float
    r_m: tuple[float, float, float]

    @classmethod
    def from_frequencies(cls, B0, f_x, f_perp, r_m, constants: PhysicalConstants = CONSTANTS):
        # V = mu_B |B| / 2 ;  m w_x^2 = mu_B b2 / 2 ;  m w_p^2 = mu_B (Bp^2/B0 - b2/2) / 2
        m, muB = constants.mass_Rb87, constants.mu_B
        wx, wp = 2 * math.pi * f_x, 2 * math.pi * f_perp
        b2 = 2 * m * wx**2 / muB
        Bp = math.sqrt(B0 * (2 * m * wp**2 / muB + b2 / 2))
        return cls(B0, b2, Bp, tuple(r_m))

    def field(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        d = r - np.asarray(self.r_m)
        x, y, z = d[..., 0], d[..., 1], d[..., 2]
        bx = self.B0 + 0.5 * self.b2 * (x**2 - 0.5 * (y**2 + z**2))
        by = self.Bp * y - 0.5 * self.b2 * x * y
        bz = -self.Bp * z - 0.5 * self.b2 * x * z
        return np.stack([bx, by, bz], axis=-1)


@dataclass(frozen=True)
class WireTrap:
    segments: tuple[WireSegment, ...]
    bias: tuple[float, float, float]

    def field(self, r) -> np.ndarray:
        r = np.asarray(r, float)
        out = np.broadcast_to(np.asarray(self.bias, float), r.shape).copy()
        for seg in self.segments:
            out = out + field_of_segment(seg, r)
        return out


def static_trap_model(trap: TrapConfig, constants: PhysicalConstants = CONSTANTS):
    if trap.mode == "ioffe":
        return IoffeTrap.from_frequencies(trap.B0, trap.f_x, trap.f_perp, trap.r_m, constants)
    segs = tuple(WireSegment(w.start, w.end, w.width, w.height, w.current) for w in trap.wires)
    return WireTrap(segs, trap.bias)


def static_field(model, r) -> np.ndarray:
    return model.field(r)


# -- coplanar waveguide ----------------------------------------------------

@dataclass(frozen=True)
class CpwGeometry:
    """Signal wire centred at ``center_x`` with ground wires on either side, all along y.

    Ground 1 sits at negative x, ground 2 at positive x.  ``gap`` is the
    edge-to-edge spacing between signal and ground.  Wire top surfaces are at
    z = 0.  Microwave currents: I_s = I, I_g1 = -a1 I, I_g2 = -a2 I.
    """

    width: float = 6e-6
    height: float = 1e-6
    gap: float = 4e-6
    length: float = 4e-3
    center_x: float = 0.0
    a1: float = 0.5
    a2: float = 0.5
    Z0: float = 70.0

    def __post_init__(self):
        if abs(self.a1 + self.a2 - 1.0) > 1e-12:
            raise ValueError("ground current fractions must sum to one")

    @classmethod
    def from_config(cls, c: CpwConfig) -> "CpwGeometry":
        return cls(c.width, c.height, c.gap, c.length, c.center_x, c.a1, c.a2, c.Z0)

    @property
    def pitch(self) -> float:
        return self.width + self.gap

    @property
    def wire_x(self) -> tuple[float, float, float]:
        return (self.center_x - self.pitch, self.center_x, self.center_x + self.pitch)

    @property
    def partition(self) -> tuple[float, float, float]:
        return (-self.a1, 1.0, -self.a2)

    def segments(self, I_mw: float) -> list[WireSegment]:
        zc = -self.height / 2
        half = self.length / 2
        return [WireSegment((x, -half, zc), (x, half, zc), self.width, self.height, frac * I_mw)
                for x, frac in zip(self.wire_x, self.partition)]


def cpw_microwave_field(geom: CpwGeometry, I_mw: float, r) -> np.ndarray:
    """Microwave amplitude B_mw(r) (T).  All currents are in phase, so the
    amplitude is returned as a real vector (global phase 0)."""
    r = np.asarray(r, float)
    out = np.zeros(np.atleast_2d(r).shape)
    if I_mw != 0:
        for seg in geom.segments(I_mw):
            out += field_of_segment(seg, np.atleast_2d(r))
    return out[0] if r.ndim == 1 else out


def line_voltage(Z0: float, P: float) -> float:
    """Peak voltage amplitude V = sqrt(2 Z0 P)."""
    if P < 0:
        raise ValueError("power must be >= 0")
    return math.sqrt(2 * Z0 * P)


def cpw_line_charges(geom: CpwGeometry, P: float, constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Per-unit-length charges (C/m) on ground1, signal, ground2.

    Charges follow the current partition (TEM mode); the signal charge is set
    so that signal minus the mean ground potential equals the line voltage.
    A flat strip of width w is represented by a line of equivalent radius w/4.
    """
    V = line_voltage(geom.Z0, P)
    if V == 0:
        return np.zeros(3)
    xs = np.array(geom.wire_x)
    q = np.array(geom.partition)
    d = np.abs(xs[:, None] - xs[None, :])
    np.fill_diagonal(d, geom.width / 4)
    pot = -np.log(d) / (2 * math.pi * constants.eps_0) @ q  # potential per unit signal charge
    dv = pot[1] - 0.5 * (pot[0] + pot[2])
    return q * V / dv


def cpw_electric_field(geom: CpwGeometry, P: float, r, constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Electric field amplitude (V/m) of the 2D line-charge model."""
    r = np.asarray(r, float)
    pts = np.atleast_2d(r)
    lam = cpw_line_charges(geom, P, constants)
    out = np.zeros_like(pts)
    zc = -geom.height / 2
    for x, q in zip(geom.wire_x, lam):
        dx = pts[:, 0] - x
        dz = pts[:, 2] - zc
        rho2 = dx**2 + dz**2
        c = q / (2 * math.pi * constants.eps_0 * rho2)
        out[:, 0] += c * dx
        out[:, 2] += c * dz
    return out[0] if r.ndim == 1 else out


def microwave_current(cfg: ExperimentConfig, P: float | None = None) -> float:
    """I_mw for power P (defaults to the configured power)."""
    mw = cfg.microwave
    P = mw.P if P is None else P
    return mw.I_ref * math.sqrt(P / mw.P_ref)
