import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from co2sizing.hydraulics import (
    LaminarFlowError, UnbalancedNetworkError, colebrook_lambda, colebrook_lambda_array, colebrook_residual,
    compute_flows, elevation_term, friction_loss_coeff, pipe_drop_table,
)
from co2sizing.network import Network, Node, NodeKind, Pipe, segment
from conftest import star_network
from oracles import flows_by_linear_solve, random_tree

CATALOG = (0.03, 0.04, 0.05, 0.08, 0.12, 0.15, 0.2, 0.25, 0.3, 0.35, 0.42, 0.5)


def bisect_lambda(d, eps, re):
    """Oracle: bisection on the Colebrook residual over (1e-4, 0.1)."""
    f = lambda lam: 1 / math.sqrt(lam) + 2 * math.log10(eps / (3.7 * d) + 2.51 / (re * math.sqrt(lam)))  # noqa: E731
    lo, hi = 1e-4, 0.1
    assert f(lo) > 0 > f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_star_flows():
    flows = compute_flows(star_network((16.0, 8.0, 8.0, 8.0)))
    assert flows["p9"] == 40.0 and flows["u1"] == 40.0
    assert flows["p1"] == 16.0


def test_single_path_carries_full_flow():
    nodes = {"a": Node("a", NodeKind.ENTRY, supply=117.0, temperature=313.15),
             "b": Node("b", NodeKind.EXIT, supply=-117.0)}
    net = segment(Network(nodes, {"p": Pipe("p", "a", "b", 150_000.0, (0.5,), (0.0,))}), 500.0)
    assert set(compute_flows(net).values()) == {117.0}


def test_unbalanced_is_rejected():
    with pytest.raises(UnbalancedNetworkError):
        compute_flows(star_network(exit_supply=-39.0))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 50))
def test_flows_match_linear_solve(seed, n):
    net = random_tree(np.random.default_rng(seed), n, pump_prob=0.2)
    q = compute_flows(net)
    ref = flows_by_linear_solve(net)
    assert max(abs(q[a] - ref[a]) for a in ref) < 1e-9
    assert all(v >= 0 for v in q.values())
    for v in net.nodes:
        out = sum(q[a] for a in net.outgoing[v])
        inc = sum(q[a] for a in net.incoming[v])
        assert out - inc == pytest.approx(net.nodes[v].supply, abs=1e-9)


def test_colebrook_matches_bisection():
    lam = colebrook_lambda(0.5, 5e-4, 3e6)
    assert lam == pytest.approx(bisect_lambda(0.5, 5e-4, 3e6), abs=1e-8)
    assert 0 < lam < 0.1


def test_colebrook_residual_grid():
    rng = np.random.default_rng(11)
    d = rng.uniform(0.03, 0.5, 1000)
    eps = rng.uniform(1e-5, 1e-3, 1000)
    re = 10 ** rng.uniform(4, 8, 1000)
    scalar = np.array([colebrook_lambda(a, b, c) for a, b, c in zip(d, eps, re)])
    vector = colebrook_lambda_array(d, eps, re)
    assert np.abs(colebrook_residual(scalar, d, eps, re)).max() < 1e-8
    assert np.abs(colebrook_residual(vector, d, eps, re)).max() < 1e-8
    assert ((scalar > 0) & (scalar < 0.1)).all()


def test_smooth_pipe_asymptote():
    res = [colebrook_lambda(0.5, 0.0, re) for re in (1e5, 1e7, 1e9, 1e12)]
    assert all(b < a for a, b in zip(res, res[1:]))
    assert abs(colebrook_residual(res[-1], 0.5, 0.0, 1e12)) < 1e-8


@settings(max_examples=200, deadline=None)
@given(d=st.floats(0.03, 0.5), eps=st.floats(1e-6, 5e-4), re=st.floats(1e4, 1e8))
def test_roughness_monotone(d, eps, re):
    assert colebrook_lambda(d, 2 * eps, re) > colebrook_lambda(d, eps, re)


def test_laminar_regime_rejected():
    with pytest.raises(LaminarFlowError):
        colebrook_lambda(0.5, 1e-4, 3000.0)


def test_friction_coefficient_properties(tables):
    pipe = Pipe("p", "a", "b", 150_000.0, (0.5,), (0.0,), roughness=5e-4)
    rho, mu = tables.eval("density", 91.25, 290.0), tables.eval("viscosity", 91.25, 290.0)
    phi = friction_loss_coeff(pipe, 0.5, 117.0, rho, mu)
    # the whole reference pipeline at a representative mean state
    assert phi * 117.0 ** 2 == pytest.approx(12.5, abs=2.0)
    half = Pipe("p", "a", "b", 75_000.0, (0.5,), (0.0,), roughness=5e-4)
    assert friction_loss_coeff(half, 0.5, 117.0, rho, mu) == pytest.approx(phi / 2, rel=1e-15)
    assert friction_loss_coeff(pipe, 0.5, 0.0, rho, mu) == 0.0


@pytest.mark.parametrize("q", [5.0, 15.0, 30.0, 40.0])
def test_phi_decreasing_in_diameter(tables, q):
    pipe = Pipe("p", "a", "b", 10_000.0, CATALOG, tuple(range(12)))
    for p, t in [(85.0, 283.15), (100.0, 320.0), (110.0, 353.0)]:
        rho, mu = tables.eval("density", p, t), tables.eval("viscosity", p, t)
        phi = [friction_loss_coeff(pipe, d, q, rho, mu) for d in CATALOG]
        assert all(b < a for a, b in zip(phi, phi[1:]))


@settings(max_examples=200, deadline=None)
@given(q1=st.floats(1.0, 100.0), q2=st.floats(1.0, 100.0))
def test_drop_monotone_in_flow(q1, q2):
    pipe = Pipe("p", "a", "b", 5_000.0, (0.3,), (0.0,))
    lo, hi = sorted((q1, q2))
    drop = lambda q: friction_loss_coeff(pipe, 0.3, q, 850.0, 7e-5) * q * abs(q)  # noqa: E731
    assert drop(lo) <= drop(hi)


def test_elevation_term():
    assert elevation_term(50.0, 50.0, 900.0) == 0.0
    assert elevation_term(100.0, 0.0, 900.0) == pytest.approx(900 * 9.80665 * 100 / 1e5, rel=1e-15)
    assert elevation_term(100.0, 0.0, 900.0) == pytest.approx(8.83, abs=0.005)
    assert elevation_term(100.0, 0.0, 1800.0) == pytest.approx(2 * elevation_term(100.0, 0.0, 900.0))


def test_drop_table_matches_scalar(tables):
    net = star_network()
    flows = compute_flows(net)
    flows["p2"] = 0.0
    rho = {a: 850.0 for a in net.pipes}
    mu = {a: 7e-5 for a in net.pipes}
    state = pipe_drop_table(net, flows, rho, mu)
    for a, pipe in net.pipes.items():
        for k, d in enumerate(pipe.catalog):
            ref = friction_loss_coeff(pipe, d, flows[a], 850.0, 7e-5) * flows[a] ** 2
            # both paths solve Colebrook to the same residual, not the same iterate
            assert state.drops[a][k] == pytest.approx(ref, rel=1e-9, abs=0.0)
    assert (state.drops["p2"] == 0).all()
