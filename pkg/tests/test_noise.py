import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chipdress import hyperfine as hf
from chipdress.core import MG, MS, MW
from chipdress.dynamics import line_potentials
from chipdress.noise import (NoiseBudget, PhaseContext, accumulated_phase, budget, combine,
                             sensitivity)
from chipdress.potentials import PotentialModel
from chipdress.trapchar import state_minimum


def test_microwave_off_gives_fringe_only(icfg):
    c = icfg.replace(microwave={"P": 0.0})
    ctx = PhaseContext.from_config(c)
    T = 8.4 * MS
    phi = accumulated_phase(c, T, ctx=ctx)
    assert phi == 2 * math.pi * c.ramsey.fringe_freq * T
    assert accumulated_phase(c, T, fringe=False, ctx=ctx) == 0.0


def test_phase_is_additive_over_intervals(icfg, phase_ctx):
    T = 8.4 * MS
    whole = accumulated_phase(icfg, T, ctx=phase_ctx)
    first = accumulated_phase(icfg, T, ctx=phase_ctx, t_stop=T / 2)
    second = accumulated_phase(icfg, T, ctx=phase_ctx, t_start=T / 2)
    assert first + second == pytest.approx(whole, rel=1e-12)
    with pytest.raises(ValueError):
        accumulated_phase(icfg, T, ctx=phase_ctx, t_start=T / 2, t_stop=T / 4)


def test_stationary_rate_matches_perturbative_oracle(icfg):
    c = icfg.replace(microwave={"P": 120 * MW})
    ctx = PhaseContext.from_config(c, moving=False)
    T1, T2 = 2 * MS, 6 * MS
    rate = (accumulated_phase(c, T2, fringe=False, ctx=ctx)
            - accumulated_phase(c, T1, fringe=False, ctx=ctx)) / (T2 - T1)
    # oracle: second-order shifts of |1> and |0> at the cloud position, all transitions included
    off = c.replace(microwave={"P": 0.0})
    r = state_minimum(off, "0", start=np.asarray(c.trap.r_m))
    s = PotentialModel(c).evaluate(r, with_perturbative=True)
    d_pert = (s.Vmw_pert[0, hf.STATE_1] - s.Vmw_pert[0, hf.STATE_0]) / c.constants.hbar
    assert rate == pytest.approx(d_pert, rel=1.5 * s.ratio0[0] ** 2)
    # and about 122^2 / (4 * 600) kHz, the closed form at the trap centre
    assert abs(rate) / (2 * math.pi) == pytest.approx(6.2e3, rel=0.10)


def test_sensitivity_scales_linearly_with_TR(icfg, phase_ctx, sensitivities):
    half = sensitivity(icfg, 4.2 * MS, "B", phase_ctx)
    assert sensitivities["B"].value / half.value == pytest.approx(2.0, rel=0.05)


def test_step_study_stable(sensitivities):
    for s in sensitivities.values():
        assert s.spread < 0.02
        steps = sorted(s.study)
        assert steps[-1] / steps[0] >= 10 * (1 - 1e-9)


def test_magnetic_sensitivity_order_of_magnitude(sensitivities):
    # 2 pi per 16 mG within a factor of two
    per_G = sensitivities["B"].per_lab_unit()
    target = 2 * math.pi / 16e-3
    assert 0.5 < abs(per_G) / target < 2.0


@pytest.mark.parametrize("zeeman", ["linear", "breit_rabi"])
def test_microwave_off_magnetic_sensitivity_small(icfg, sensitivities, zeeman):
    c = icfg.replace(microwave={"P": 0.0}, potential={"zeeman": zeeman})
    ctx = PhaseContext.from_config(c)
    s = sensitivity(c, c.noise.TR, "B", ctx, steps=(1 * MG, 0.5 * MG, 2 * MG, 10 * MG))
    assert abs(s.value) * 100 <= abs(sensitivities["B"].value)
    if zeeman == "linear":
        assert s.value == 0.0


def test_sensitivity_argument_check(icfg, phase_ctx):
    with pytest.raises(ValueError):
        sensitivity(icfg, 1 * MS, "N", phase_ctx)


def test_quadrature_of_reference_values():
    b = NoiseBudget(0.03 * math.pi, 0.01 * math.pi, 0.02 * math.pi, 0.0, 0.12 * math.pi)
    assert b.total / math.pi == pytest.approx(math.sqrt(0.03**2 + 0.01**2 + 0.02**2), rel=1e-14)
    assert b.total / math.pi == pytest.approx(0.037, rel=0.02)
    assert b.observed_fraction == pytest.approx(b.total / (0.12 * math.pi))


def test_projection_noise_and_zero_budget():
    b = combine(1.0, 1.0, 0.0, 0.0, 400, 0.0, 0.0, 1.0)
    assert b.dphi_S == 0.05
    assert b.total == 0.05
    z = combine(123.0, -7.0, 0.0, 0.0, math.inf, 0.0, 0.0, 1.0)
    assert z.total == 0.0
    with pytest.raises(ValueError):
        combine(1.0, 1.0, -1e-9, 0.0, 400, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        combine(1.0, 1.0, 0.0, 0.0, 0, 0.0, 0.0, 1.0)


def test_atom_number_hook():
    b = combine(0.0, 0.0, 0.0, 0.0, math.inf, 21.0, -0.01, 1.0)
    assert b.dphi_N == pytest.approx(0.21)


@given(st.lists(st.floats(0.0, 10.0), min_size=4, max_size=4), st.floats(-1e4, 1e4), st.floats(-1e2, 1e2))
def test_budget_entries_and_order_invariance(vals, sB, sP):
    b = combine(sB, sP, vals[0], vals[1], 400, vals[2], vals[3], 1.0)
    entries = [b.dphi_B, b.dphi_P, b.dphi_S, b.dphi_N]
    assert all(e >= 0 for e in entries)
    assert b.total**2 == pytest.approx(sum(e**2 for e in entries), rel=1e-12, abs=1e-300)
    for perm in itertools.permutations(entries):
        assert NoiseBudget(*perm, observed=1.0).total == pytest.approx(b.total, rel=1e-14, abs=1e-300)


def test_budget_dict(icfg, phase_ctx, sensitivities):
    n = icfg.noise
    b = combine(sensitivities["B"].value, sensitivities["P"].value, n.dB, n.dP, icfg.dynamics.N,
                n.dN, n.dphi_dN, n.observed)
    d = b.as_dict()
    assert set(d) == {"dphi_B_pi", "dphi_P_pi", "dphi_S_pi", "dphi_N_pi", "total_pi", "observed_pi",
                      "observed_fraction", "dphi_dB_rad_per_G", "dphi_dP_rad_per_mW"}
    assert d["dphi_S_pi"] == pytest.approx(0.05 / math.pi)
    assert d["observed_pi"] == pytest.approx(0.037 / 0.30)
