"""Acceptance criteria with pinned tolerances.

Every test prints exactly one ``CRITERION n PASS/FAIL`` line (collected in the
terminal summary) before asserting, so a failing criterion still reports its
measured values.
"""

import math
import time
import warnings

import numpy as np
import pytest

from chipdress import hyperfine as hf
from chipdress.core import CONSTANTS, GAUSS, KHZ_ANG, MA, MS, MW, UM, Grid3, resolve_drive_frequency
from chipdress.dynamics import (SpinorState, evolve, ground_state, oscillation, prepare_ramsey,
                                recurrence)
from chipdress.magnetostatics import CpwGeometry, cpw_microwave_field
from chipdress.noise import PhaseContext, budget
from chipdress.potentials import potential_slice
from chipdress.trapchar import calibrate, rabi_at, split_scan, splitting_distance

from conftest import report

M, HBAR = CONSTANTS.mass_Rb87, CONSTANTS.hbar


def verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


def within(value, target, rel=None, abs_=None) -> bool:
    tol = abs_ if abs_ is not None else rel * abs(target)
    return abs(value - target) <= tol


# -- 1 --------------------------------------------------------------------------

def test_criterion_1_calibration(cfg):
    t0 = time.perf_counter()
    cal = calibrate(cfg)
    c = cfg.replace(cpw={"gap": cal.gap})
    om = rabi_at(c, 76 * MA) / KHZ_ANG
    lin = max(abs(rabi_at(c, k * 76 * MA) / (k * om * KHZ_ANG) - 1) for k in (0.1, 0.5, 2.0))
    wall = time.perf_counter() - t0
    ok = within(om, 122.0, rel=0.01) and lin <= 1e-6 and wall < 1.0
    report(f"CRITERION 1 {verdict(ok)}: Omega_R(r_m, 76 mA) = {om:.4f} kHz (122 +- 1%), "
           f"linearity {lin:.1e} (<= 1e-6), gap {cal.gap / UM:.4f} um, {wall:.2f} s (< 1 s)")
    assert within(om, 122.0, rel=0.01)
    assert lin <= 1e-6
    assert wall < 1.0


# -- 2 --------------------------------------------------------------------------

RATIOS = np.linspace(0.02, 0.2, 10)
DETUNINGS = (150.0, 300.0, 600.0)


def test_criterion_2_splitting(cfg):
    s_ref = splitting_distance(cfg, 120 * MW, 150 * KHZ_ANG) / UM
    s_small = [splitting_distance(cfg, f * 120 * MW, 150 * KHZ_ANG) / UM for f in (1e-2, 1e-3)]
    s_zero = splitting_distance(cfg, 0.0, 150 * KHZ_ANG)
    to_zero = s_zero == 0.0 and s_small[1] < s_small[0] < s_ref and s_small[1] < 0.1

    pts = [(r * d * MW, d * KHZ_ANG) for d in DETUNINGS for r in RATIOS]
    t0 = time.perf_counter()
    rows = split_scan(cfg, pts)
    wall = time.perf_counter() - t0
    cal = calibrate(cfg)
    s = np.array([r["s_um"] for r in rows]).reshape(len(DETUNINGS), len(RATIOS))
    # Omega / Delta at the trap centre for each scan point
    om = np.array([rabi_at(cfg, cal.current(P)) / D for P, D in pts]).reshape(s.shape)
    valid = om <= 0.3
    dev_mean, dev_pair = 0.0, 0.0
    for j in range(len(RATIOS)):
        col = s[valid[:, j], j]
        if len(col) < 2:
            continue
        dev_mean = max(dev_mean, float(np.max(np.abs(col / col.mean() - 1))))
        dev_pair = max(dev_pair, float(col.max() / col.min() - 1))
    ok_s = within(s_ref, 9.4, rel=0.15)
    ok = ok_s and to_zero and dev_mean <= 0.05 and wall < 30
    report(f"CRITERION 2 {verdict(ok)}: s(120 mW, 150 kHz) = {s_ref:.3f} um (9.4 +- 15%), "
           f"s(1.2, 0.12, 0 mW) = {s_small[0]:.3f}, {s_small[1]:.4f}, {s_zero} um, "
           f"collapse where Omega/Delta <= 0.3: max deviation from mean curve {dev_mean:.1%} (<= 5%), "
           f"largest pairwise spread {dev_pair:.1%}, {len(pts)}-point scan {wall:.1f} s (< 30 s)")
    assert ok_s
    assert to_zero
    assert dev_mean <= 0.05
    assert wall < 30


# -- 3 --------------------------------------------------------------------------

def test_criterion_3_exact_vs_perturbative(cfg):
    n, span = 200, 40 * UM
    rm = np.asarray(cfg.trap.r_m)
    grid = Grid3.line(rm - [span / 2, 0, 0], 0, span / (n - 1), n)
    t0 = time.perf_counter()
    pg = potential_slice(cfg, grid)
    wall = time.perf_counter() - t0
    r = pg.ratio0.ravel()
    sel = r <= 0.2
    ex, pe = pg.Vmw_exact.ravel()[sel], pg.Vmw_pert.ravel()[sel]
    worst = float(np.max(np.abs(ex - pe) / (np.abs(pe) * r[sel] ** 2)))
    ok = sel.sum() > 0 and worst <= 1.0 and wall < 5
    report(f"CRITERION 3 {verdict(ok)}: {sel.sum()} of {n} slice points with Omega/Delta <= 0.2, "
           f"worst |exact - pert| / pert = {worst:.3f} (Omega/Delta)^2 (<= 1), {wall:.2f} s (< 5 s)")
    assert sel.sum() > 0
    assert worst <= 1.0
    assert wall < 5


# -- 4 --------------------------------------------------------------------------

def test_criterion_4_dynamics(icfg, ramsey_full, lines):
    dyn = icfg.dynamics
    assert dyn.dx == pytest.approx(0.05 * UM) and dyn.dt == pytest.approx(1e-6)
    shift = (lines.x_on[0] - lines.x_start) / UM
    t0 = time.perf_counter()
    # 20 ms gives the two full periods the frequency estimate needs; its wall
    # time is held to the budget of a 10 ms trajectory
    res = oscillation(icfg, 20 * MS, setup=prepare_ramsey(icfg))
    wall = time.perf_counter() - t0
    f = res.frequency()
    p2p = res.peak_to_peak / UM
    rec = recurrence(ramsey_full.T_R, ramsey_full.contrast, f)
    T_ms = rec.T_peak / MS
    ok_f = within(f, 116.0, rel=0.05)
    ok_p = within(p2p, 8.5, rel=0.10)
    ok_r = within(T_ms, 8.6, abs_=0.3) and rec.ratio > 3
    ok = ok_f and ok_p and ok_r and wall < 300
    report(f"CRITERION 4 {verdict(ok)}: V0 shift {abs(shift):.2f} um along -x, centroid {f:.1f} Hz (116 +- 5%), "
           f"p2p {p2p:.2f} um (8.5 +- 10%), contrast revival at {T_ms:.2f} ms (8.6 +- 0.3), "
           f"peak / floor {rec.ratio:.3g} (> 3), 20 ms trajectory {wall:.1f} s (< 300 s)")
    assert ok_f
    assert ok_p
    assert wall < 300
    assert rec.ratio > 3
    assert within(T_ms, 8.6, abs_=0.3)


# -- 5 --------------------------------------------------------------------------

def test_criterion_5_noise_budget(icfg):
    n = icfg.noise
    assert n.TR == pytest.approx(8.4 * MS)
    t0 = time.perf_counter()
    b = budget(icfg, ctx=PhaseContext.from_config(icfg))
    wall = time.perf_counter() - t0
    d = b.as_dict()
    factor = abs(d["dphi_dB_rad_per_G"]) / (2 * math.pi / 16e-3)
    checks = {
        "B": within(d["dphi_B_pi"], 0.03, abs_=0.005),
        "factor": 0.5 <= factor <= 2.0,
        "P": within(d["dphi_P_pi"], 0.01, abs_=0.005),
        "S": b.dphi_S == 1 / math.sqrt(400),
        # component tolerances carried through the quadrature sum and the ratio
        "total": within(d["total_pi"], 0.037, abs_=0.005),
        "fraction": within(d["observed_fraction"], 0.30, abs_=0.005 / 0.12),
        "time": wall < 60,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(f"CRITERION 5 {verdict(ok)}: dphi_B = {d['dphi_B_pi']:.4f} pi (0.03 +- 0.005), "
           f"dphi/dB = {d['dphi_dB_rad_per_G']:.1f} rad/G = {factor:.2f} x 2pi/16 mG (0.5..2), "
           f"dphi_P = {d['dphi_P_pi']:.4f} pi (0.01 +- 0.005), dphi_S = {b.dphi_S:.4f} rad (1/sqrt(400)), "
           f"total = {d['total_pi']:.4f} pi (0.037 +- 0.005), fraction = {d['observed_fraction']:.3f} "
           f"of {d['observed_pi']:.3f} pi (0.30 +- 0.042), {wall:.1f} s (< 60 s)"
           + (f"; failing: {', '.join(failed)}" if failed else ""))
    for k in ("factor", "P", "S", "time", "B", "total", "fraction"):
        assert checks[k], k


# -- 6 --------------------------------------------------------------------------

def _maxwell(field, r, h=0.05 * UM):
    J = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        J[:, j] = (field(r + e) - field(r - e)) / (2 * h)
    s = np.linalg.norm(J)
    curl = [J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]]
    return max(abs(np.trace(J)), np.linalg.norm(curl)) / s


def test_criterion_6_property_suite(cfg):
    results = {}
    geom = CpwGeometry.from_config(cfg.cpw)
    rm = np.asarray(cfg.trap.r_m)
    results["maxwell"] = _maxwell(lambda p: cpw_microwave_field(geom, 76 * MA, p), rm) <= 1e-4

    rng = np.random.default_rng(1)
    B = np.array([3.23 * GAUSS, 0, 0]) + rng.normal(size=3) * 2e-5
    Bmw = rng.normal(size=3) * 3e-7 + 1j * rng.normal(size=3) * 3e-7
    H = hf.build_rwa_hamiltonian(B, Bmw, resolve_drive_frequency(300 * KHZ_ANG, 3.23 * GAUSS))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", hf.LabellingWarning)
        sp = hf.dressed_spectrum(H)
    U = sp.vectors[0]
    scale = np.abs(sp.energies).max()
    results["unitarity"] = np.allclose(U.conj().T @ U, np.eye(8), atol=1e-12)
    results["trace"] = abs(np.sum(sp.energies[0]) - np.trace(H.matrix[0]).real) <= 1e-12 * 8 * scale

    # pi polarization at resonance: the |1,-1>, |2,-1> block splits by hbar |Omega|
    om = 122 * KHZ_ANG
    Bx = np.array([3.23 * GAUSS, 0, 0])
    amp = om / abs(hf.build_rwa_hamiltonian(Bx, np.array([1e-7, 0, 0]), 1.0).Omega_R[0]) * 1e-7
    Hr = hf.build_rwa_hamiltonian(Bx, np.array([amp, 0, 0]), resolve_drive_frequency(0.0, 3.23 * GAUSS))
    pair = [hf.STATE_0, hf.STATE_2]
    w = np.linalg.eigvalsh(Hr.matrix[0][np.ix_(pair, pair)])
    results["avoided crossing"] = abs((w[1] - w[0]) / (HBAR * om) - 1) <= 1e-9

    W = 2 * np.pi * 109.0
    x = (np.arange(512) - 255.5) * 0.05e-6
    V = 0.5 * M * W**2 * x**2
    psi = ground_state(x, V, 1.0, 0.0, M, HBAR)
    dx = x[1] - x[0]
    width = math.sqrt(2 * np.sum(np.abs(psi) ** 2 * x**2) * dx)
    results["oscillator"] = abs(width / math.sqrt(HBAR / (M * W)) - 1) <= 1e-4

    hist = []
    ground_state(x, V * (1 + x**2 / 4e-6**2), 400.0, 2e-38, M, HBAR, history=hist)
    e = np.array(hist)
    results["imaginary time"] = bool(np.all(np.diff(e) <= 1e-13 * np.abs(e[1:])))

    xs = (np.arange(256) - 127.5) * 0.1e-6
    sig = math.sqrt(HBAR / (M * W))
    g0 = np.exp(-((xs - 1e-6) ** 2) / (2 * sig**2)).astype(complex)
    g0 *= math.sqrt(200.0 / (np.sum(np.abs(g0) ** 2) * 0.1e-6))
    st = SpinorState(xs, np.stack([g0, g0]) / math.sqrt(2))
    g = np.full((2, 2), 3e-38)
    V2 = np.stack([0.5 * M * W**2 * xs**2, 0.5 * M * (2 * np.pi * 140) ** 2 * (xs - 2e-6) ** 2])
    tr = evolve(st, V2, 1e-6, 1000e-6, g, M, HBAR, record_every=1000)
    results["norm"] = abs(tr.final.N - st.N) <= 1e-10 * st.N

    T = 2e-3

    def final(dt):
        return evolve(st, V2, dt, T, g, M, HBAR, record_every=10**6, check=False).final.psi

    ref = final(T / 4000)
    order = math.log2(np.linalg.norm(final(T / 250) - ref) / np.linalg.norm(final(T / 500) - ref))
    results["step order"] = abs(order - 2) <= 0.2

    ok = all(results.values())
    report(f"CRITERION 6 {verdict(ok)}: " + ", ".join(f"{k} {verdict(v)}" for k, v in results.items())
           + f" (Strang order {order:.2f}); full-suite runtime in the session summary")
    for k, v in results.items():
        assert v, k
