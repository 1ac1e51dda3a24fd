"""Orbit simulation, attractor summaries, sweep tables, and serialization."""

import json
import math

import numpy as np
import pytest

from redmap import derive_model
from redmap.equilibrium import fixed_point, w_bifurcation
from redmap.model import derive_model_at, map_f
from redmap.sweep import (
    PRESETS,
    PSTAR_BIN,
    WBIF_BIN,
    Orbit,
    bifurcation_diagram,
    get_preset,
    robustness_map,
    run_preset,
    simulate_orbit,
    summarize_attractor,
    table_to_csv_text,
    write_csv,
    write_jsonl,
    _step_array,
)

from conftest import BUFFER, desk_control, desk_system, draw_models


def test_vectorized_step_matches_scalar_map_bitwise():
    # the diagram engine must agree with the reference map to the last bit,
    # or diagrams and pointwise analysis would drift apart
    for m in draw_models(seed=21, count=15):
        qs = np.linspace(0.0, m.b, 257)
        vec = _step_array(qs, m.control.w, m.a1, m.a2, m.nu, m.control.q_min,
                          m.theta_l, m.theta_r, m.b,
                          m.control.shape.alpha, m.control.shape.beta)
        for q, v in zip(qs, vec):
            assert map_f(float(q), m) == v


def test_orbit_bookkeeping(bench_model):
    orbit = simulate_orbit(bench_model, q0=1000.0, total=120, transient=40)
    assert orbit.total_steps == 120
    assert orbit.transient == 40
    assert orbit.q0 == 1000.0
    assert len(orbit.samples) == 80
    assert np.all((orbit.samples >= 0.0) & (orbit.samples <= BUFFER))
    # first retained sample is the image of step 41 from the start
    q = 1000.0
    for _ in range(41):
        q = map_f(q, bench_model)
    assert orbit.samples[0] == q


def test_orbit_argument_validation(bench_model):
    with pytest.raises(ValueError):
        simulate_orbit(bench_model, q0=-5.0, total=100, transient=10)
    with pytest.raises(ValueError):
        simulate_orbit(bench_model, q0=100.0, total=50, transient=50)


def test_orbit_converges_below_threshold():
    m = derive_model(desk_system(), desk_control(w=0.1))
    eq = fixed_point(m)
    orbit = simulate_orbit(m, q0=1900.0, total=600, transient=500)
    summary = summarize_attractor(orbit, tol=1e-6 * BUFFER)
    assert summary.kind == "fixed_point"
    assert summary.period == 1
    assert summary.points[0] == pytest.approx(eq.q_star, abs=1e-6 * BUFFER)


def test_orbit_two_cycle_above_threshold():
    m0 = derive_model(desk_system(), desk_control())
    wb = w_bifurcation(m0).value
    m = derive_model_at(m0.system, m0.control, w=1.02 * wb)
    orbit = simulate_orbit(m, q0=1000.0, total=4100, transient=4000)
    summary = summarize_attractor(orbit, tol=1e-6 * BUFFER)
    assert summary.kind == "cycle"
    assert summary.period == 2
    lo, hi = summary.points
    q_star = fixed_point(m).q_star
    assert lo < q_star < hi
    assert hi < m.theta_r


def test_orbit_loses_periodicity_at_threshold_collision():
    # a little further up the cycle's upper point collides with the exit
    # threshold and strict periodicity dissolves
    m0 = derive_model(desk_system(), desk_control())
    wb = w_bifurcation(m0).value
    m = derive_model_at(m0.system, m0.control, w=1.05 * wb)
    orbit = simulate_orbit(m, q0=1000.0, total=4100, transient=4000)
    summary = summarize_attractor(orbit, tol=1e-6 * BUFFER)
    assert summary.kind == "aperiodic"
    assert np.max(orbit.samples) > m.theta_r - 1.0


def test_summary_of_synthetic_orbits():
    const = Orbit(samples=np.full(60, 7.25), q0=0.0, total_steps=60, transient=0)
    s = summarize_attractor(const, tol=1e-9)
    assert (s.kind, s.period) == ("fixed_point", 1)
    assert s.spread == 0.0

    alt = Orbit(samples=np.array([2.0, 5.0] * 30), q0=0.0, total_steps=60,
                transient=0)
    s = summarize_attractor(alt, tol=1e-9)
    assert (s.kind, s.period) == ("cycle", 2)
    assert s.points == (2.0, 5.0)

    rng = np.random.default_rng(0)
    noise = Orbit(samples=rng.uniform(0.0, 1.0, 200), q0=0.0,
                  total_steps=200, transient=0)
    s = summarize_attractor(noise, tol=1e-9)
    assert s.kind == "aperiodic"
    assert s.period == 0


def test_summary_demands_enough_samples():
    short = Orbit(samples=np.zeros(10), q0=0.0, total_steps=10, transient=0)
    with pytest.raises(ValueError):
        summarize_attractor(short, tol=1e-9)


def test_non_periodic_visit_order_is_not_a_cycle():
    # three clusters visited in a scrambled order: clustered but not periodic
    pattern = [1.0, 5.0, 9.0, 1.0, 9.0, 5.0] * 10
    orbit = Orbit(samples=np.array(pattern), q0=0.0, total_steps=60, transient=0)
    s = summarize_attractor(orbit, tol=1e-9)
    assert s.kind == "aperiodic"


def test_diagram_smoke_rows_and_invalid_edges():
    pre = get_preset("fig5")
    table = bifurcation_diagram(pre.system, pre.control, "w", (0.0, 1.0),
                                grid=10, total=60, transient=50)
    assert table.axis_names == ("w", "q", "valid")
    assert len(table.rows) <= 10 * 10
    by_w = {}
    for w, q, valid in table.rows:
        by_w.setdefault(w, []).append((q, valid))
    # the endpoints w = 0 and w = 1 are outside the open unit interval
    assert by_w[0.0] == [(None, 0)]
    assert by_w[1.0] == [(None, 0)]
    for w, cells in by_w.items():
        if w not in (0.0, 1.0):
            assert all(v == 1 for _, v in cells)
            assert all(0.0 <= q <= BUFFER for q, _ in cells)


def test_diagram_default_start_matches_half_buffer():
    pre = get_preset("fig5")
    auto = bifurcation_diagram(pre.system, pre.control, "w", (0.05, 0.5),
                               grid=7, total=80, transient=60)
    explicit = bifurcation_diagram(pre.system, pre.control, "w", (0.05, 0.5),
                                   grid=7, total=80, transient=60,
                                   q0=BUFFER / 2.0)
    assert table_to_csv_text(auto) == table_to_csv_text(explicit)


def test_map_table_bins_and_columns():
    pre = get_preset("fig6", observable="pstar")
    tab = robustness_map(pre.system, pre.control, alpha_range=(0.5, 1.5),
                         beta_range=(0.5, 1.5), grid=4, observable="pstar",
                         jobs=1, endpoint=True)
    assert tab.axis_names == ("alpha", "beta", "pstar", "bin")
    assert len(tab.rows) == 16
    for alpha, beta, pstar, bin_ in tab.rows:
        assert pstar is not None
        assert 0.0 < pstar < 1.0
        assert bin_ == math.floor(pstar / PSTAR_BIN)

    tab2 = robustness_map(pre.system, pre.control, alpha_range=(0.5, 1.5),
                          beta_range=(0.5, 1.5), grid=4, observable="wbif",
                          jobs=1, endpoint=True)
    assert tab2.axis_names == ("alpha", "beta", "wbif", "bin", "no_bifurcation")
    for alpha, beta, wb, bin_, flag in tab2.rows:
        assert wb is not None
        assert bin_ == math.floor(wb / WBIF_BIN)
        assert flag == (1 if wb >= 1.0 else 0)


def test_map_table_parallel_equals_serial():
    pre = get_preset("fig6", observable="pstar")
    one = robustness_map(pre.system, pre.control, alpha_range=(0.3, 1.2),
                         beta_range=(0.3, 1.2), grid=5, observable="pstar",
                         jobs=1)
    two = robustness_map(pre.system, pre.control, alpha_range=(0.3, 1.2),
                         beta_range=(0.3, 1.2), grid=5, observable="pstar",
                         jobs=2)
    assert table_to_csv_text(one) == table_to_csv_text(two)


def test_sweep_runs_are_deterministic():
    pre = get_preset("fig5")
    a = run_preset(pre, grid=12, total=80, transient=60)
    b = run_preset(pre, grid=12, total=80, transient=60)
    assert table_to_csv_text(a) == table_to_csv_text(b)


def test_csv_and_jsonl_serialization(tmp_path):
    pre = get_preset("fig5")
    table = run_preset(pre, grid=5, total=70, transient=60)
    path = tmp_path / "sweep.csv"
    write_csv(table, path)
    text = path.read_text()
    lines = text.split("\n")
    assert lines[0] == "w,q,valid"
    assert lines[-1] == ""            # trailing newline, unix line ends
    assert len(lines) == len(table.rows) + 2
    # invalid cells serialize as empty fields
    assert any(line.endswith(",0") and ",," in line + "," or
               line.split(",")[1] == "" for line in lines[1:-1])

    jpath = tmp_path / "sweep.jsonl"
    write_jsonl(table, jpath)
    docs = [json.loads(line) for line in jpath.read_text().splitlines()]
    assert len(docs) == len(table.rows)
    assert set(docs[0]) == {"w", "q", "valid"}
    assert any(d["q"] is None for d in docs)


def test_preset_catalog():
    assert PRESETS == ("fig3", "fig4", "fig5", "fig6")
    fig3 = get_preset("fig3")
    assert (fig3.kind, fig3.axis, fig3.value_range) == ("diagram", "a1",
                                                        (0.0, 2500.0))
    assert fig3.system.tcp_constant == 1.2247
    fig4 = get_preset("fig4")
    assert (fig4.kind, fig4.axis, fig4.value_range) == ("diagram", "a2",
                                                        (4000.0, 7000.0))
    fig5 = get_preset("fig5")
    assert (fig5.kind, fig5.axis, fig5.value_range) == ("diagram", "w",
                                                        (0.0, 1.0))
    assert fig5.system.tcp_constant == 1.225
    fig6 = get_preset("fig6")
    assert (fig6.kind, fig6.grid) == ("map", 400)
    assert fig6.alpha_range == (0.002, 1.5)
    assert fig6.beta_range == (0.002, 1.5)
    assert fig6.observable == "pstar"
    assert get_preset("fig6", observable="wbif").observable == "wbif"
    with pytest.raises(ValueError):
        get_preset("fig9")


def test_diagram_rejects_unknown_axis():
    pre = get_preset("fig5")
    with pytest.raises(ValueError):
        bifurcation_diagram(pre.system, pre.control, "delay", (0.0, 1.0),
                            grid=5, total=60, transient=50)
