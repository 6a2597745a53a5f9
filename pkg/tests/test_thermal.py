import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from co2sizing.hydraulics import LaminarFlowError, compute_flows
from co2sizing.network import Network, Node, NodeKind, Pipe, Pump, segment
from co2sizing.thermal import (
    SoilEnvironment, _solve_outlet, heat_transmission_rate, log_mean_difference, mixing_temperature,
    outlet_temperature, prandtl, propagate_temperatures, zeta,
)
from conftest import affine_table

SOIL = SoilEnvironment(283.15, 1.0)


def run_outlet(table, t_in, p_in=100.0, p_out=100.0, length=500.0, q=30.0, d=0.3, soil=SOIL):
    return outlet_temperature(length=length, full_length=max(length, 1000.0), d=d, d_outer=d + 0.04,
                              burial_depth=1.0, wall_conductivity=30.0, q=q, t_in=t_in, p_in=p_in,
                              p_out=p_out, soil=soil, tables=table)


def test_mixing_examples():
    assert mixing_temperature([(2500.0, 3.0, 301.7)]) == 301.7
    assert mixing_temperature([(1.0, 2.0, 300.0), (1.0, 1.0, 330.0)]) == pytest.approx(310.0, rel=1e-15)
    assert mixing_temperature([(2000.0, 1.0, 300.0), (4000.0, 1.0, 330.0)]) == pytest.approx(320.0, rel=1e-15)
    with pytest.raises(ValueError):
        mixing_temperature([])
    with pytest.raises(ValueError):
        mixing_temperature([(2000.0, 0.0, 300.0)])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.floats(500.0, 5000.0), st.floats(0.01, 100.0), st.floats(250.0, 380.0)),
                min_size=1, max_size=6))
def test_mixing_is_convex(streams):
    t = mixing_temperature(streams)
    assert min(s[2] for s in streams) <= t <= max(s[2] for s in streams)


def test_prandtl_and_zeta():
    assert prandtl(2500.0, 8e-5, 0.1) == pytest.approx(2.0, rel=1e-15)
    ref = (1.8 * math.log10(3e6) - 1.5) ** -2
    assert zeta(3e6) == ref
    assert zeta(3e6) == pytest.approx(9.69e-3, abs=5e-6)


def test_transmission_rate_fluid_limit():
    limit = 2 * math.pi / (math.log(0.54 / 0.5) / 30.0 + math.log(4 * 0.25 / 0.5) / 1.0)
    ks = [heat_transmission_rate(0.5, 0.54, 150_000.0, 0.25, 30.0, 1.0, re, 2500.0, 8e-5, 0.1).k
          for re in (1e5, 3e6, 1e8, 1e10)]
    assert all(a < b < limit for a, b in zip(ks, ks[1:]))
    assert ks[-1] == pytest.approx(limit, rel=1e-5)
    with pytest.raises(LaminarFlowError):
        heat_transmission_rate(0.5, 0.54, 1.0, 0.25, 30.0, 1.0, 3000.0, 2500.0, 8e-5, 0.1)
    with pytest.raises(ValueError):
        heat_transmission_rate(0.5, 0.54, 1.0, 0.25, 30.0, 0.0, 1e6, 2500.0, 8e-5, 0.1)


def test_entrance_correction_uses_full_length():
    short = heat_transmission_rate(0.5, 0.54, 500.0, 1.0, 30.0, 1.0, 1e6, 2500.0, 8e-5, 0.1)
    full = heat_transmission_rate(0.5, 0.54, 150_000.0, 1.0, 30.0, 1.0, 1e6, 2500.0, 8e-5, 0.1)
    assert short.nusselt / full.nusselt == pytest.approx(
        (1 + (0.5 / 500.0) ** (2 / 3)) / (1 + (0.5 / 150_000.0) ** (2 / 3)), rel=1e-12)


def test_no_driving_force():
    tab = affine_table(jt=0.25)
    assert run_outlet(tab, SOIL.temperature).t_out == SOIL.temperature


def test_insulated_without_jt_keeps_temperature():
    tab = affine_table(jt=0.0)
    assert _solve_outlet(35.0, 0.0, 0.0) == 35.0
    res = run_outlet(tab, 330.0, soil=SoilEnvironment(283.15, 1e-12))
    assert res.t_out == pytest.approx(330.0, abs=1e-6)


@settings(max_examples=300, deadline=None)
@given(t_in=st.floats(250.0, 360.0), length=st.floats(1.0, 5000.0), q=st.floats(1.0, 120.0),
       d=st.sampled_from((0.08, 0.15, 0.3, 0.5)))
def test_relaxation_toward_soil(t_in, length, q, d):
    assume(abs(t_in - SOIL.temperature) > 1e-3)
    res = run_outlet(affine_table(0.0), t_in, length=length, q=q, d=d)
    lo, hi = sorted((t_in, SOIL.temperature))
    assert lo < res.t_out < hi


@settings(max_examples=200, deadline=None)
@given(t_in=st.floats(284.0, 360.0), dp=st.floats(0.01, 5.0), length=st.floats(1.0, 5000.0))
def test_heat_loss_and_expansion_both_cool(t_in, dp, length):
    res = run_outlet(affine_table(0.3), t_in, p_in=100.0, p_out=100.0 - dp, length=length)
    assert res.t_out < t_in


@settings(max_examples=500, deadline=None)
@given(a=st.floats(-80.0, 80.0), jt=st.floats(-5.0, 5.0), r=st.floats(0.0, 20.0))
def test_outlet_equation_is_solved(a, jt, r):
    # below the crossing cap (1e-6 K) the capped log mean is not the equation being solved
    assume(abs(a) > 1e-4)
    b = _solve_outlet(a, jt, r)
    resid = b - a - jt + r * log_mean_difference(a, b)
    assert abs(resid) <= 1e-9 * (1 + abs(a) + abs(jt))


@settings(max_examples=300, deadline=None)
@given(a=st.floats(0.5, 80.0), sign=st.sampled_from((-1.0, 1.0)), h=st.floats(1e-12, 1e-2))
def test_log_mean_continuous(a, sign, h):
    a *= sign
    assert log_mean_difference(a, a) == a
    b = a - sign * h
    # second-order agreement with the arithmetic mean near the diagonal, plus rounding
    assert abs(log_mean_difference(a, b) - 0.5 * (a + b)) <= h * h / abs(a) + 4 * math.ulp(a)
    # no jump where the series expansion hands over to the closed form
    lo = log_mean_difference(a, a - sign * 0.999e-6)
    hi = log_mean_difference(a, a - sign * 1.001e-6)
    assert abs(lo - hi) <= 0.5 * 0.002e-6 * 1.01 + 1e-14 * abs(a)


def test_log_mean_cap_on_crossing():
    assert log_mean_difference(5.0, -1.0) == log_mean_difference(5.0, 1e-6)
    assert log_mean_difference(0.0, 3.0) == 0.0


def _chain_network(length=3000.0, t_in=330.0):
    nodes = {"a": Node("a", NodeKind.ENTRY, supply=20.0, temperature=t_in, p_max=120.0),
             "b": Node("b", NodeKind.EXIT, supply=-20.0, p_max=120.0)}
    return segment(Network(nodes, {"p": Pipe("p", "a", "b", length, (0.2,), (0.0,))}), 500.0)


def test_single_path_is_sequential(tables):
    net = _chain_network()
    flows = compute_flows(net)
    order = sorted(net.pipes)
    pressures = {v: 100.0 - 0.1 * i for i, v in enumerate(["a"] + [net.pipes[a].head for a in order])}
    state = propagate_temperatures(net, flows, pressures, {a: 0.2 for a in net.pipes}, tables, SOIL)
    t = 330.0
    for a in order:
        pipe = net.pipes[a]
        t = outlet_temperature(length=pipe.length, full_length=3000.0, d=0.2, d_outer=0.24,
                               burial_depth=pipe.burial_depth, wall_conductivity=30.0, q=20.0, t_in=t,
                               p_in=pressures[pipe.tail], p_out=pressures[pipe.head], soil=SOIL,
                               tables=tables).t_out
        assert state.arc_t_out[a] == t
    assert state.node_t["b"] == t


def _branch_network(temps=(330.0, 330.0), pump=True):
    nodes = {"e1": Node("e1", NodeKind.ENTRY, supply=10.0, temperature=temps[0]),
             "e2": Node("e2", NodeKind.ENTRY, supply=10.0, temperature=temps[1]),
             "j": Node("j"), "jh": Node("jh"), "w": Node("w", NodeKind.EXIT, supply=-20.0)}
    pipes = {"1": Pipe("1", "e1", "j", 800.0, (0.2,), (0.0,)), "2": Pipe("2", "e2", "j", 800.0, (0.2,), (0.0,)),
             "3": Pipe("3", "jh", "w", 800.0, (0.3,), (0.0,))}
    return Network(nodes, pipes, {"u": Pump("u", "j", "jh")})


def test_symmetric_branches_and_pump(tables):
    net = _branch_network()
    pressures = {"e1": 100.0, "e2": 100.0, "j": 99.0, "jh": 105.0, "w": 104.0}
    state = propagate_temperatures(net, compute_flows(net), pressures, {"1": 0.2, "2": 0.2, "3": 0.3},
                                   tables, SOIL)
    assert state.arc_t_out["1"] == state.arc_t_out["2"] == state.node_t["j"]
    assert state.arc_t_in["u"] == state.arc_t_out["u"] == state.node_t["jh"] == state.node_t["j"]
    assert state.below_saturation == []


def test_junction_is_convex_combination(tables):
    net = _branch_network((300.0, 350.0))
    pressures = {"e1": 100.0, "e2": 100.0, "j": 99.0, "jh": 105.0, "w": 104.0}
    state = propagate_temperatures(net, compute_flows(net), pressures, {"1": 0.2, "2": 0.2, "3": 0.3},
                                   tables, SOIL)
    lo, hi = sorted((state.arc_t_out["1"], state.arc_t_out["2"]))
    assert lo < state.node_t["j"] < hi


def test_below_saturation_is_reported(tables, caplog):
    net = _chain_network(500.0, t_in=280.0)
    pressures = {"a": 40.0, "b": 39.0}
    state = propagate_temperatures(net, compute_flows(net), pressures, {"p": 0.2}, tables,
                                   SoilEnvironment(275.0, 1.0))
    assert "b" in state.below_saturation
    assert "below the saturation curve" in caplog.text


def test_validation_corpus_contracts(tables, caplog):
    # iterate displacement should not grow after the third step on the validation-like states
    rng = np.random.default_rng(8)
    for _ in range(50):
        res = run_outlet(tables, float(rng.uniform(290.0, 330.0)), p_in=97.0, p_out=96.96, q=117.0, d=0.5)
        assert res.iterations < 20
    assert "not contracting" not in caplog.text
