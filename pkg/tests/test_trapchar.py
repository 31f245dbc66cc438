import math

import numpy as np
import pytest

from chipdress.core import CONSTANTS, KHZ_ANG, MA, MW, UM
from chipdress.potentials import PotentialModel
from chipdress.trapchar import (CalibrationError, MinimizationError, SaddlePointError, calibrate,
                                calibrated_config, find_minimum, rabi_at, split_scan,
                                splitting_distance, state_minimum, trap_frequencies)

M = CONSTANTS.mass_Rb87


def bowl(center, omegas, axes=None):
    center = np.asarray(center, float)
    R = np.eye(3) if axes is None else axes
    K = R @ np.diag(M * np.asarray(omegas) ** 2) @ R.T

    def V(r):
        d = np.asarray(r) - center
        return 0.5 * d @ K @ d

    V.batch = lambda pts: 0.5 * np.einsum("ni,ij,nj->n", pts - center, K, pts - center)
    return V


def test_quadratic_bowl_center_exact():
    c = np.array([3.3, -1.2, 20.7]) * UM
    V = bowl(c, 2 * np.pi * np.array([100.0, 400.0, 700.0]))
    x = find_minimum(V, c + np.array([2.0, -1.0, 1.5]) * UM)
    assert np.linalg.norm(x - c) < 1e-8 * UM


def test_isotropic_bowl_frequencies():
    c = np.array([0.0, 0.0, 30.0]) * UM
    V = bowl(c, [2 * np.pi * 250.0] * 3)
    rep = trap_frequencies(V, c, M)
    assert np.max(np.abs(rep.frequencies / 250.0 - 1)) < 1e-6
    assert rep.condition == pytest.approx(1.0, abs=1e-5)


def test_rotated_anisotropic_bowl():
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    c = np.array([1.0, 2.0, 25.0]) * UM
    f = np.array([90.0, 300.0, 800.0])
    rep = trap_frequencies(bowl(c, 2 * np.pi * f, Q), c, M)
    assert rep.frequencies == pytest.approx(f, rel=1e-6)
    # principal axes match up to sign
    assert np.allclose(np.abs(rep.axes.T @ Q), np.eye(3), atol=1e-6)


def test_saddle_point_detected():
    def V(r):
        d = np.asarray(r) - [0, 0, 20e-6]
        return M * (d[0] ** 2 - d[1] ** 2 + d[2] ** 2) * 1e5

    with pytest.raises(SaddlePointError, match="saddle"):
        trap_frequencies(V, np.array([0, 0, 20e-6]), M)


def test_minimizer_errors():
    # unbounded slope: the search runs away from the start
    def V(r):
        return -1e-30 * r[0] / 1e-6

    with pytest.raises(MinimizationError):
        find_minimum(V, np.array([0.0, 0.0, 20e-6]))


def test_parametric_trap_minimum_and_frequencies(cfg):
    c = cfg.replace(microwave={"P": 0.0}, potential={"gravity": False, "casimir_polder": False})
    r = state_minimum(c, "0")
    rm = np.asarray(cfg.trap.r_m)
    assert np.linalg.norm(r - rm) < 0.01 * UM
    rep = trap_frequencies(PotentialModel(c).potential_function("0"), r, M)
    assert rep.frequencies == pytest.approx([109.0, 500.0, 500.0], rel=5e-3)
    assert rep.gradient_norm < 1e-4 * M * (2 * np.pi * 109.0) ** 2 * 1e-6
    d = rep.as_dict(CONSTANTS.h)
    assert d["minimum_um"] == pytest.approx(list(rm * 1e6), abs=0.01)


def test_gravitational_sag(cfg):
    c = cfg.replace(microwave={"P": 0.0}, potential={"casimir_polder": False})
    r = state_minimum(c, "0", start=np.asarray(cfg.trap.r_m))
    sag = CONSTANTS.g_grav / (2 * np.pi * cfg.trap.f_perp) ** 2
    assert r[2] - cfg.trap.r_m[2] == pytest.approx(-sag, rel=2e-3)


def test_minimum_independent_of_start(cfg):
    model = PotentialModel(cfg)
    f = model.potential_function("0")
    ref = state_minimum(cfg, "0", model=model)
    rng = np.random.default_rng(11)
    for _ in range(5):
        start = ref + rng.uniform(-1.5, 1.5, 3) * UM
        assert np.linalg.norm(find_minimum(f, start) - ref) < 1e-3 * UM


def test_state0_displaced_along_x(cfg):
    model = PotentialModel(cfg)
    x0 = state_minimum(cfg, "0", model=model)
    x1 = state_minimum(cfg, "1", model=model, start=np.asarray(cfg.trap.r_m))
    d = x0 - x1
    assert d[0] < -5 * UM
    # the splitting is nearly one-dimensional
    assert abs(d[0]) > 5 * np.hypot(d[1], d[2])


def test_shifted_trap_axial_frequency(icfg):
    c = icfg.replace(microwave={"P": 120 * MW})
    model = PotentialModel(c)
    r0 = state_minimum(c, "0", model=model)
    rep = trap_frequencies(model.potential_function("0"), r0, M)
    axial = rep.frequencies[0]
    assert axial == pytest.approx(116.0, rel=0.10)
    # the axial eigenvector lies along x
    assert abs(rep.axes[0, 0]) > 0.99


def test_splitting_zero_power_and_monotone(cfg):
    assert splitting_distance(cfg, P=0.0) == 0.0
    s = [splitting_distance(cfg, P=p * MW) for p in (5, 30, 60, 90, 120)]
    assert all(b > a for a, b in zip(s, s[1:]))
    # s -> 0 continuously as P -> 0
    assert splitting_distance(cfg, P=0.05 * MW) < 0.05 * UM


def test_scaling_collapse_150_vs_300(cfg):
    # P / Delta up to 0.108 mW/kHz keeps Omega / Delta <= 0.3 at 150 kHz
    pts = []
    for r in (0.03, 0.06, 0.108):
        pts += [(r * 150 * MW, 150 * KHZ_ANG), (r * 300 * MW, 300 * KHZ_ANG)]
    rows = split_scan(cfg, pts)
    for a, b in zip(rows[::2], rows[1::2]):
        assert a["P_over_Delta"] == pytest.approx(b["P_over_Delta"])
        assert abs(a["s_um"] - b["s_um"]) <= 0.05 * 0.5 * (a["s_um"] + b["s_um"])


def test_split_scan_rows_and_parallel_determinism(cfg):
    pts = [(20 * MW, 150 * KHZ_ANG), (40 * MW, 300 * KHZ_ANG)]
    serial = split_scan(cfg, pts)
    parallel = split_scan(cfg, pts, workers=2)
    assert serial == parallel
    assert set(serial[0]) == {"P_mW", "Delta_kHz", "P_over_Delta", "s_um"}
    assert serial[1]["Delta_kHz"] == pytest.approx(300.0)


def test_calibration(cfg):
    cal = calibrate(cfg)
    assert cal.residual < 1e-10
    assert cal.Omega_at_ref / (2e3 * math.pi) == pytest.approx(122.0, rel=0.01)
    assert cal.current(cfg.microwave.P_ref / 4) == pytest.approx(38 * MA)
    c2 = cfg.replace(cpw={"gap": cal.gap})
    half = rabi_at(c2, 38 * MA) / (2e3 * math.pi)
    assert half == pytest.approx(61.0, rel=1e-6)
    assert rabi_at(c2, 76 * MA) == pytest.approx(2 * rabi_at(c2, 38 * MA), rel=1e-12)
    assert set(cal.as_dict()) >= {"gap_um", "relative_residual"}


def test_calibration_infeasible(cfg):
    with pytest.raises(CalibrationError, match="best gap"):
        calibrate(cfg.replace(microwave={"Omega_ref": 2 * math.pi * 5e6}))


def test_asymmetric_mode_steepens_the_curve(cfg):
    ideal = calibrated_config(cfg)
    asym = calibrated_config(cfg.replace(cpw={"a1": 0.45, "a2": 0.55}))
    assert asym.cpw.gap != pytest.approx(ideal.cpw.gap)
    ratios = (0.2, 0.4, 0.6, 0.8)
    diff = [splitting_distance(asym, r * 150 * MW, 150 * KHZ_ANG)
            - splitting_distance(ideal, r * 150 * MW, 150 * KHZ_ANG) for r in ratios]
    assert all(b > a for a, b in zip(diff, diff[1:]))
    assert diff[-1] > 0
