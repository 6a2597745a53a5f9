"""Tree flows, Colebrook-White friction factors and per-diameter pressure drops.

Pressures are in bar throughout; ``PA_PER_BAR`` converts the SI friction and
elevation terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import BALANCE_TOL, Network, Pipe, leaf_order

G = 9.80665
PA_PER_BAR = 1e5
RE_TURBULENT = 4000.0
EPS_LAMBDA = 1e-6
COLEBROOK_RESIDUAL = 1e-10
MAX_FIXED_POINT = 100


class LaminarFlowError(ValueError):
    """Reynolds number at or below the turbulent threshold."""


class UnbalancedNetworkError(ValueError):
    pass


def compute_flows(network: Network) -> dict[str, float]:
    """Unique arc mass flows (kg/s) of a balanced in-tree, by leaf stripping."""
    total = sum(n.supply for n in network.nodes.values())
    if abs(total) > BALANCE_TOL:
        raise UnbalancedNetworkError(f"sum of boundary values is {total:g} kg/s")
    acc = {v: n.supply for v, n in network.nodes.items()}
    flows = {}
    for aid in leaf_order(network):
        arc = network.arc(aid)
        flows[aid] = acc[arc.tail]
        acc[arc.head] += flows[aid]
    return flows


def reynolds(d: float, q: float, viscosity: float) -> float:
    """Re = d q / (A nu) with A = pi d^2 / 4 and q the mass flow."""
    return 4.0 * q / (math.pi * d * viscosity)


def swamee_jain(d, eps, re):
    return 0.25 / np.log10(eps / (3.7 * d) + 5.74 / np.power(re, 0.9)) ** 2


def colebrook_residual(lam, d, eps, re):
    return 1.0 / np.sqrt(lam) + 2.0 * np.log10(eps / (3.7 * d) + 2.51 / (re * np.sqrt(lam)))


def _colebrook_bisect(d: float, eps: float, re: float) -> float:
    lo, hi = 1e-5, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        # residual is decreasing in lambda
        if colebrook_residual(mid, d, eps, re) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


def colebrook_lambda(d: float, eps: float, re: float, tol: float = EPS_LAMBDA) -> float:
    """Darcy friction factor from the Colebrook-White equation.

    Fixed-point iteration on ``1/sqrt(lambda)`` started from Swamee-Jain; it
    stops once the update is below ``tol`` and the equation residual is below
    1e-10, with bisection as a fallback.
    """
    if not re > RE_TURBULENT:
        raise LaminarFlowError(f"Re = {re:g}: laminar/transitional regime unsupported")
    if not d > 0 or eps < 0:
        raise ValueError("diameter must be positive and roughness nonnegative")
    rel = eps / (3.7 * d)
    lam = float(swamee_jain(d, eps, re))
    for _ in range(MAX_FIXED_POINT):
        new = (-2.0 * math.log10(rel + 2.51 / (re * math.sqrt(lam)))) ** -2
        done = abs(new - lam) < tol
        lam = new
        if done and abs(colebrook_residual(lam, d, eps, re)) < COLEBROOK_RESIDUAL:
            return lam
    return _colebrook_bisect(d, eps, re)


def colebrook_lambda_array(d, eps, re, tol: float = EPS_LAMBDA) -> np.ndarray:
    """Vectorised :func:`colebrook_lambda` over broadcastable arrays."""
    d, eps, re = np.broadcast_arrays(np.asarray(d, float), np.asarray(eps, float), np.asarray(re, float))
    if np.any(re <= RE_TURBULENT):
        raise LaminarFlowError(f"Re = {re.min():g}: laminar/transitional regime unsupported")
    rel = eps / (3.7 * d)
    lam = swamee_jain(d, eps, re)
    for _ in range(MAX_FIXED_POINT):
        new = (-2.0 * np.log10(rel + 2.51 / (re * np.sqrt(lam)))) ** -2
        step = np.abs(new - lam)
        lam = new
        if step.max() < tol and np.abs(colebrook_residual(lam, d, eps, re)).max() < COLEBROOK_RESIDUAL:
            return lam
    bad = np.abs(colebrook_residual(lam, d, eps, re)) >= COLEBROOK_RESIDUAL
    for idx in zip(*np.nonzero(bad)):
        lam[idx] = _colebrook_bisect(d[idx], eps[idx], re[idx])
    return lam


def friction_loss_coeff(pipe: Pipe, d: float, q: float, density: float, viscosity: float) -> float:
    """Friction loss coefficient phi in bar s^2/kg^2, so that phi*q*|q| is a drop in bar."""
    if q == 0:
        return 0.0
    re = reynolds(d, abs(q), viscosity)
    lam = colebrook_lambda(d, pipe.roughness, re)
    return 8.0 * pipe.length * lam / (math.pi ** 2 * density * d ** 5) / PA_PER_BAR


def elevation_term(h_tail: float, h_head: float, density: float) -> float:
    """(H_tail - H_head) rho g in bar: the pressure gained at the head of a downhill pipe."""
    return (h_tail - h_head) * density * G / PA_PER_BAR


@dataclass
class HydraulicState:
    """Flows and per-(pipe, diameter) pressure drops for one outer iteration.

    ``drops[pid][k]`` is the friction drop ``phi q|q|`` in bar of pipe ``pid``
    with its ``k``-th catalog diameter; ``elevation[pid]`` is the elevation
    gain in bar.  The pipe constraint then reads
    ``p_tail - p_head = drops[pid][k] - elevation[pid]``.
    """

    flows: dict[str, float]
    drops: dict[str, np.ndarray]
    elevation: dict[str, float]
    reynolds: dict[str, np.ndarray] | None = None
    friction: dict[str, np.ndarray] | None = None

    def net_drop(self, pid: str, k: int) -> float:
        return float(self.drops[pid][k]) - self.elevation[pid]


def pipe_drop_table(network: Network, flows: dict[str, float], density: dict[str, float],
                    viscosity: dict[str, float]) -> HydraulicState:
    """Evaluate every (pipe, catalog diameter) pair in one vectorised pass.

    ``density`` and ``viscosity`` hold the fluid state of each pipe (the mean
    of its endpoint states in the outer loop).
    """
    pids = list(network.pipes)
    width = max(len(network.pipes[p].catalog) for p in pids)
    n = len(pids)
    dia = np.full((n, width), np.nan)
    for i, pid in enumerate(pids):
        cat = network.pipes[pid].catalog
        dia[i, :len(cat)] = cat
    mask = ~np.isnan(dia)
    q = np.array([abs(flows[p]) for p in pids])
    rho = np.array([density[p] for p in pids])
    mu = np.array([viscosity[p] for p in pids])
    length = np.array([network.pipes[p].length for p in pids])
    eps = np.array([network.pipes[p].roughness for p in pids])
    flowing = (q > 0)[:, None] & mask
    d_safe = np.where(mask, dia, 1.0)
    re = np.where(flowing, 4.0 * q[:, None] / (math.pi * d_safe * mu[:, None]), 0.0)
    lam = np.zeros_like(re)
    if flowing.any():
        lam[flowing] = colebrook_lambda_array(d_safe[flowing], np.broadcast_to(eps[:, None], re.shape)[flowing],
                                              re[flowing])
    phi = 8.0 * length[:, None] * lam / (math.pi ** 2 * rho[:, None] * d_safe ** 5) / PA_PER_BAR
    drop = phi * (q ** 2)[:, None]
    nodes = network.nodes
    drops, elev, res, fr = {}, {}, {}, {}
    for i, pid in enumerate(pids):
        k = int(mask[i].sum())
        drops[pid] = drop[i, :k].copy()
        res[pid] = re[i, :k].copy()
        fr[pid] = lam[i, :k].copy()
        p = network.pipes[pid]
        elev[pid] = elevation_term(nodes[p.tail].elevation, nodes[p.head].elevation, rho[i])
    return HydraulicState(flows=dict(flows), drops=drops, elevation=elev, reynolds=res, friction=fr)
