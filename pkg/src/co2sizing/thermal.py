"""Temperature propagation: junction mixing, buried-pipe heat loss, Joule-Thomson cooling."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .hydraulics import RE_TURBULENT, LaminarFlowError, reynolds
from .network import Network, Pipe, leaf_order
from .properties import PropertyTable

log = logging.getLogger(__name__)

EPS_T = 0.1
MAX_ITER = 200
CROSS_CAP = 1e-6
LOG_MEAN_SERIES = 1e-6


class ThermalConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SoilEnvironment:
    temperature: float = 283.15
    conductivity: float = 1.0

    def __post_init__(self):
        if not self.conductivity > 0:
            raise ValueError("soil conductivity must be positive")


class HeatTransfer(NamedTuple):
    k: float
    reynolds: float
    prandtl: float
    nusselt: float
    alpha: float


class OutletResult(NamedTuple):
    t_out: float
    iterations: int
    k: float
    reynolds: float
    nusselt: float
    prandtl: float
    alpha: float
    log_mean: float


def mixing_temperature(incoming) -> float:
    """Energy-weighted mean ``sum(cp q T) / sum(cp q)`` of (cp, q, T) triples."""
    incoming = list(incoming)
    if not incoming:
        raise ValueError("mixing needs at least one incoming stream")
    num = den = 0.0
    for cp, q, t in incoming:
        num += cp * q * t
        den += cp * q
    if den <= 0:
        raise ValueError("mixing with zero total heat-capacity flow")
    # clamp into the hull of the inputs against rounding
    lo = min(t for _, q, t in incoming if q > 0)
    hi = max(t for _, q, t in incoming if q > 0)
    return min(max(num / den, lo), hi)


def zeta(re: float) -> float:
    return (1.8 * math.log10(re) - 1.5) ** -2


def prandtl(cp: float, viscosity: float, conductivity: float) -> float:
    return cp * viscosity / conductivity


def heat_transmission_rate(d: float, d_outer: float, length: float, burial_depth: float,
                           wall_conductivity: float, soil_conductivity: float,
                           re: float, cp: float, viscosity: float, fluid_conductivity: float) -> HeatTransfer:
    """Heat transmission rate per unit length, W/(m K), of a buried pipe.

    ``length`` is the full (unsegmented) pipe length used in the entrance
    correction of the Nusselt correlation.
    """
    if not (wall_conductivity > 0 and soil_conductivity > 0 and fluid_conductivity > 0):
        raise ValueError("thermal conductivities must be positive")
    if not re > RE_TURBULENT:
        raise LaminarFlowError(f"Re = {re:g}: heat-transfer correlation needs turbulent flow")
    pr = prandtl(cp, viscosity, fluid_conductivity)
    z8 = zeta(re) / 8.0
    nu = z8 * re * pr / (1.0 + 12.7 * math.sqrt(z8) * (pr ** (2.0 / 3.0) - 1.0))
    nu *= 1.0 + (d / length) ** (2.0 / 3.0)
    alpha = nu * fluid_conductivity / d
    resist = 2.0 / (alpha * d) + math.log(d_outer / d) / wall_conductivity \
        + math.log(4.0 * burial_depth / d) / soil_conductivity
    return HeatTransfer(2.0 * math.pi / resist, re, pr, nu, alpha)


def log_mean_difference(a: float, b: float) -> float:
    """Logarithmic mean of the soil-relative temperatures ``a`` (inlet) and ``b`` (outlet).

    An outlet on the far side of the soil temperature is capped just short of it.
    """
    if a == 0.0:
        return 0.0
    if a * b <= 0.0:
        b = math.copysign(CROSS_CAP, a)
    diff = a - b
    if abs(diff) < LOG_MEAN_SERIES:
        m = 0.5 * (a + b)
        x = diff / (a + b)
        return m * (1.0 - x * x / 3.0)
    # log1p keeps full precision when a and b are close
    return diff / math.log1p(diff / b)


def _log_mean_slope(a: float, b: float) -> float:
    """Derivative of :func:`log_mean_difference` with respect to ``b``."""
    if a * b <= 0.0:
        return 0.0
    diff = a - b
    if abs(diff) < LOG_MEAN_SERIES * (1.0 + abs(a)):
        return 0.5 + diff / (6.0 * a)
    u = math.log1p(diff / b)
    return (diff / b - u) / (u * u)


def _solve_outlet(a: float, jt: float, r: float) -> float:
    """Root ``b`` of ``b = a + jt - r * logmean(a, b)`` (soil-relative temperatures)."""
    if r == 0.0 or a == 0.0:
        return a + jt
    if jt == 0.0:
        return a * math.exp(-r)

    # the residual is strictly increasing with slope >= 1: safeguarded Newton
    b = a * math.exp(-r) + jt
    lo, hi = -math.inf, math.inf
    for _ in range(200):
        fb = b - a - jt + r * log_mean_difference(a, b)
        if fb == 0.0:
            return b
        if fb < 0:
            lo = b
        else:
            hi = b
        nb = b - fb / (1.0 + r * _log_mean_slope(a, b))
        if not lo < nb < hi:
            nb = 0.5 * (lo + hi) if math.isfinite(lo) and math.isfinite(hi) else b - fb
        if abs(nb - b) <= 1e-13 * (1.0 + abs(b)):
            return nb
        b = nb
    return b


def outlet_temperature(*, length: float, full_length: float, d: float, d_outer: float, burial_depth: float,
                       wall_conductivity: float, q: float, t_in: float, p_in: float, p_out: float,
                       soil: SoilEnvironment, tables: PropertyTable, eps_t: float = EPS_T,
                       max_iter: int = MAX_ITER) -> OutletResult:
    """Scalar core of :func:`pipe_outlet_temperature` working on plain numbers."""
    if not q > 0:
        raise ValueError("outlet temperature needs positive flow")
    ts = soil.temperature
    a = t_in - ts
    p_m = 0.5 * (p_in + p_out)
    dp = p_out - p_in
    prev = t_in
    steps: list[float] = []
    for it in range(1, max_iter + 1):
        t_m = 0.5 * (t_in + prev)
        _, cp, mu, kf, mjt = tables.eval_all(p_m, t_m)
        re = reynolds(d, q, mu)
        ht = heat_transmission_rate(d, d_outer, full_length, burial_depth, wall_conductivity,
                                    soil.conductivity, re, cp, mu, kf)
        r = ht.k * length / (q * cp)
        new = ts + _solve_outlet(a, mjt * dp, r)
        step = new - prev
        if len(steps) >= 2 and steps[-1] * step < 0 and steps[-2] * steps[-1] < 0:
            # update sign flipped twice: damp by averaging the last two iterates
            new = 0.5 * (new + prev)
            step = new - prev
        if len(steps) >= 3 and abs(step) > abs(steps[-1]) + 1e-12:
            log.debug("outlet temperature iteration not contracting at step %d", it)
        steps.append(step)
        if abs(step) < eps_t:
            return OutletResult(new, it, ht.k, re, ht.nusselt, ht.prandtl, ht.alpha,
                                log_mean_difference(a, new - ts))
        prev = new
    raise ThermalConvergenceError(f"outlet temperature did not converge in {max_iter} iterations")


def pipe_outlet_temperature(pipe: Pipe, d: float, q: float, t_in: float, p_in: float, p_out: float,
                            soil: SoilEnvironment, tables: PropertyTable, eps_t: float = EPS_T) -> OutletResult:
    """Outlet temperature of one pipe with diameter ``d`` carrying ``q`` kg/s."""
    return outlet_temperature(
        length=pipe.length, full_length=pipe.full_length, d=d, d_outer=pipe.outer_diameter(d),
        burial_depth=pipe.burial_depth, wall_conductivity=pipe.wall_conductivity, q=q, t_in=t_in,
        p_in=p_in, p_out=p_out, soil=soil, tables=tables, eps_t=eps_t)


@dataclass
class ThermalState:
    node_t: dict[str, float]
    arc_t_in: dict[str, float]
    arc_t_out: dict[str, float]
    diagnostics: dict[str, OutletResult] = field(default_factory=dict)
    below_saturation: list[str] = field(default_factory=list)


def propagate_temperatures(network: Network, flows: dict[str, float], pressures: dict[str, float],
                           diameters: dict[str, float], tables: PropertyTable, soil: SoilEnvironment,
                           eps_t: float = EPS_T, order: list[str] | None = None) -> ThermalState:
    """Push temperatures from the entries to the exit along the leaf-stripping order.

    Pumps pass temperature through unchanged; junctions mix incoming streams.
    ``diameters`` maps pipe ids to the diameter in use.
    """
    order = order if order is not None else leaf_order(network)
    nodes = network.nodes
    node_t: dict[str, float] = {v: n.temperature for v, n in nodes.items() if n.temperature is not None
                                and not network.incoming[v]}
    t_in: dict[str, float] = {}
    t_out: dict[str, float] = {}
    diag: dict[str, OutletResult] = {}
    cp_out: dict[str, float] = {}
    pipes = network.pipes

    def settle(v: str) -> float:
        if v in node_t:
            return node_t[v]
        inc = network.incoming[v]
        if len(inc) == 1:
            node_t[v] = t_out[inc[0]]
        else:
            streams = [(cp_out[a], abs(flows[a]), t_out[a]) for a in inc if flows[a] != 0]
            node_t[v] = mixing_temperature(streams) if streams else soil.temperature
        return node_t[v]

    for aid in order:
        arc = network.arc(aid)
        tin = settle(arc.tail)
        t_in[aid] = tin
        q = abs(flows[aid])
        p_head = pressures[arc.head]
        if aid in pipes and q > 0:
            pipe = pipes[aid]
            d = diameters[aid]
            try:
                res = outlet_temperature(
                    length=pipe.length, full_length=pipe.full_length, d=d, d_outer=d + 2.0 * pipe.wall_thickness,
                    burial_depth=pipe.burial_depth, wall_conductivity=pipe.wall_conductivity, q=q, t_in=tin,
                    p_in=pressures[arc.tail], p_out=p_head, soil=soil, tables=tables, eps_t=eps_t)
            except (ThermalConvergenceError, ValueError) as exc:
                raise type(exc)(f"arc {aid}: {exc}") from exc
            diag[aid] = res
            t_out[aid] = res.t_out
        else:
            t_out[aid] = tin
        if len(network.incoming[arc.head]) > 1:
            cp_out[aid] = tables.eval_all(p_head, t_out[aid])[1]
    settle(network.exit)

    below = [v for v in nodes if v in node_t and tables.below_saturation(pressures[v], node_t[v])]
    if below:
        log.warning("%d node state(s) below the saturation curve, e.g. %s", len(below), below[0])
    return ThermalState(node_t, t_in, t_out, diag, below)
