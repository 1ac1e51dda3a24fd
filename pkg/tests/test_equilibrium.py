"""Fixed-point location, closed forms, and parameter crossings."""

import math

import numpy as np
import pytest

from redmap import BetaShape, ControlParams, SystemParams, derive_model
from redmap.betafn import cdf_log_deriv, reg_inc_beta
from redmap.equilibrium import (
    NoFixedPoint,
    a1_bifurcation,
    a2_bifurcation,
    critical_point_beta1,
    fixed_point,
    fixed_point_beta1,
    w_bifurcation,
)
from redmap.model import derive_model_at, f_prime, map_f

from conftest import (
    BUFFER,
    desk_control,
    desk_system,
    draw_models,
    model_from_targets,
)


# Frozen equilibrium data for the four benchmark combinations.
FROZEN_EQ = {
    (1.2247, 1.0, 1.0): dict(q_star=743.1141736751857,
                             z_star=0.24311417367518573,
                             drop_cdf=0.24311417367518573,
                             m=10.450527100518867,
                             fp=-0.5675790650778301,
                             w_bif=0.19137790666087076,
                             q_c=841.8974454906116),
    (1.2247, 0.5, 0.2): dict(q_star=894.9336034617377,
                             z_star=0.39493360346173767,
                             drop_cdf=0.22781199020452172,
                             m=4.953009638005275,
                             fp=0.2570485542992088,
                             w_bif=0.4037948936447981),
    (1.225, 1.0, 1.0): dict(q_star=743.2218905976155,
                            z_star=0.24322189059761545,
                            drop_cdf=0.24322189059761545,
                            m=10.446563134812395,
                            fp=-0.5669844702218592,
                            w_bif=0.19145052532494142,
                            q_c=841.9532768760275),
    (1.225, 0.5, 0.2): dict(q_star=895.1683774379894,
                            z_star=0.3951683774379895,
                            drop_cdf=0.22790106895746626,
                            m=4.951712637951637,
                            fp=0.2572431043072545,
                            w_bif=0.40390065947512965),
}


@pytest.mark.parametrize("key", sorted(FROZEN_EQ))
def test_frozen_equilibria(key):
    k, alpha, beta = key
    m = derive_model(desk_system(k), desk_control(alpha=alpha, beta=beta))
    eq = fixed_point(m)
    f = FROZEN_EQ[key]
    assert eq.q_star == pytest.approx(f["q_star"], rel=1e-12)
    assert eq.z_star == pytest.approx(f["z_star"], rel=1e-12)
    assert eq.drop_cdf == pytest.approx(f["drop_cdf"], rel=1e-11)
    assert eq.m_slope == pytest.approx(f["m"], rel=1e-10)
    assert eq.f_prime_at_star == pytest.approx(f["fp"], rel=1e-9, abs=1e-12)
    assert eq.locally_stable
    wb = w_bifurcation(m)
    assert wb.value == pytest.approx(f["w_bif"], rel=1e-10)
    assert wb.residual <= 1e-10


@pytest.mark.parametrize("key", [(1.2247, 1.0, 1.0), (1.225, 1.0, 1.0)])
def test_frozen_interior_minimum(key):
    k, alpha, beta = key
    m = derive_model(desk_system(k), desk_control(alpha=alpha, beta=beta))
    q_c = critical_point_beta1(m)
    assert q_c == pytest.approx(FROZEN_EQ[key]["q_c"], rel=1e-12)
    # genuine interior minimum: derivative changes sign across it
    assert f_prime(q_c - 1.0, m) < 0.0 < f_prime(q_c + 1.0, m)


def test_equilibrium_does_not_depend_on_weight(bench_model_skewed):
    m = bench_model_skewed
    base = fixed_point(m).q_star
    for w in np.linspace(0.01, 0.9, 10):
        m2 = derive_model_at(m.system, m.control, w=float(w))
        assert abs(fixed_point(m2).q_star - base) <= 1e-9 * BUFFER


def test_equilibrium_is_a_fixed_point_of_the_map(bench_model, bench_model_skewed):
    for m in (bench_model, bench_model_skewed):
        eq = fixed_point(m)
        assert map_f(eq.q_star, m) == pytest.approx(eq.q_star, abs=1e-7 * BUFFER)


def test_defining_identity_holds_on_random_models():
    for m in draw_models(seed=11, count=40):
        eq = fixed_point(m)
        # q* + a2 = a1 / sqrt(I(z*)) rearranged to avoid the division
        lhs = (eq.q_star + m.a2) * math.sqrt(eq.drop_cdf)
        assert lhs == pytest.approx(m.a1, rel=1e-8)
        assert m.theta_l <= eq.q_star <= m.theta_r
        assert eq.locally_stable == (abs(eq.f_prime_at_star) < 1.0)


def test_slope_factor_alternative_form(bench_model_skewed):
    # m = 1 + (nu/2) (q* + a2) * d log I with the load eliminated
    m = bench_model_skewed
    eq = fixed_point(m)
    alt = 1.0 + 0.5 * m.nu * (eq.q_star + m.a2) * cdf_log_deriv(
        eq.z_star, m.control.shape)
    assert eq.m_slope == pytest.approx(alt, rel=1e-10)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
def test_power_profile_closed_form_agrees(alpha):
    m = derive_model(desk_system(), desk_control(alpha=alpha, beta=1.0))
    general = fixed_point(m)
    closed = fixed_point_beta1(m)
    assert closed.q_star == pytest.approx(general.q_star, rel=1e-9)
    assert closed.z_star == pytest.approx(general.z_star, rel=1e-9)


def test_power_profile_closed_form_rejects_other_profiles(bench_model_skewed):
    with pytest.raises(ValueError):
        fixed_point_beta1(bench_model_skewed)


def test_no_fixed_point_raised_at_and_above_boundary():
    # load exactly at headroom + q_max leaves no interior equilibrium
    m = model_from_targets(a1=14000.0, a2=12000.0, buffer=3000.0,
                           q_min=100.0, q_max=2000.0, w=0.1,
                           alpha=1.0, beta=1.0)
    assert not m.has_fixed_point
    with pytest.raises(NoFixedPoint):
        fixed_point(m)
    m2 = model_from_targets(a1=14500.0, a2=12000.0, buffer=3000.0,
                            q_min=100.0, q_max=2000.0, w=0.1,
                            alpha=1.0, beta=1.0)
    with pytest.raises(NoFixedPoint):
        fixed_point(m2)


def test_equilibrium_approaches_upper_threshold_at_boundary():
    # as the load climbs toward headroom + q_max the equilibrium is pushed
    # into the upper end of the drop band
    m = model_from_targets(a1=13999.0, a2=12000.0, buffer=3000.0,
                           q_min=100.0, q_max=2000.0, w=0.1,
                           alpha=1.0, beta=1.0)
    eq = fixed_point(m)
    assert eq.q_star > 0.97 * m.control.q_max
    assert eq.z_star > 0.97


def test_interior_minimum_outside_core_returns_none(bench_model):
    m = derive_model_at(bench_model.system, bench_model.control, w=1e-4)
    assert critical_point_beta1(m) is None


def test_weight_threshold_splits_local_stability(bench_model):
    m = bench_model
    wb = w_bifurcation(m).value
    below = derive_model_at(m.system, m.control, w=0.95 * wb)
    above = derive_model_at(m.system, m.control, w=1.05 * wb)
    assert fixed_point(below).locally_stable
    assert not fixed_point(above).locally_stable


def test_weight_threshold_is_slope_reciprocal(bench_model_skewed):
    eq = fixed_point(bench_model_skewed)
    wb = w_bifurcation(bench_model_skewed)
    assert wb.value == pytest.approx(2.0 / eq.m_slope, rel=1e-13)
    # at the threshold the map slope at equilibrium sits at -1
    m2 = derive_model_at(bench_model_skewed.system, bench_model_skewed.control,
                         w=wb.value)
    eq2 = fixed_point(m2)
    assert eq2.f_prime_at_star == pytest.approx(-1.0, abs=1e-8)


# Session-frozen crossing locations for the two desk benchmarks (K = 1.2247).
FROZEN_CROSSINGS = {
    ("a1", 1.0, 1.0): 1945.0830712385032,
    ("a1", 0.5, 0.2): 1413.4670006140218,
    ("a2", 1.0, 1.0): 4317.973587379016,
    ("a2", 0.5, 0.2): 5774.003225430672,
}


@pytest.mark.parametrize("axis,alpha,beta", sorted(FROZEN_CROSSINGS))
def test_parameter_crossings_match_frozen_values(axis, alpha, beta):
    m = derive_model(desk_system(), desk_control(alpha=alpha, beta=beta))
    solver = a1_bifurcation if axis == "a1" else a2_bifurcation
    bp = solver(m)
    assert bp.parameter == axis
    assert bp.value == pytest.approx(FROZEN_CROSSINGS[(axis, alpha, beta)],
                                     rel=1e-9)
    assert bp.iterations > 0
    assert bp.strategy in ("loop", "loop+bisect", "scan+bisect")
    # rebuilt model at the crossing has slope -1 at its equilibrium
    m2 = derive_model_at(m.system, m.control, **{axis: bp.value})
    eq2 = fixed_point(m2)
    assert eq2.f_prime_at_star == pytest.approx(-1.0, abs=1e-6)
    assert bp.residual <= 1e-6


def test_crossings_bracket_local_stability(bench_model):
    m = bench_model
    bp = a1_bifurcation(m)
    lo = derive_model_at(m.system, m.control, a1=0.98 * bp.value)
    hi = derive_model_at(m.system, m.control, a1=1.02 * bp.value)
    # shrinking load pushes the equilibrium into the steep low-probability
    # tail, so the unstable side is below the crossing
    assert not fixed_point(lo).locally_stable
    assert fixed_point(hi).locally_stable
    bp2 = a2_bifurcation(m)
    lo2 = derive_model_at(m.system, m.control, a2=0.98 * bp2.value)
    hi2 = derive_model_at(m.system, m.control, a2=1.02 * bp2.value)
    # growing headroom does the same, so the unstable side is above
    assert fixed_point(lo2).locally_stable
    assert not fixed_point(hi2).locally_stable


def test_solver_survives_extreme_profiles():
    # heavy-tailed profiles push the threshold solve into float saturation;
    # the equilibrium must still satisfy its defining identity
    for alpha, beta in ((0.05, 0.05), (0.05, 3.0), (3.0, 0.05)):
        m = derive_model(desk_system(), desk_control(alpha=alpha, beta=beta))
        eq = fixed_point(m)
        lhs = (eq.q_star + m.a2) * math.sqrt(eq.drop_cdf)
        assert lhs == pytest.approx(m.a1, rel=1e-7)
