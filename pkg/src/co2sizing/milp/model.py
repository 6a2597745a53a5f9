"""Discrete diameter selection for fixed flows and friction constants.

Segments of one original pipe, and pipes joined through intermediate nodes,
share one selection vector (a *pipe group*).  Each group is a chain from a
tail node to a head node; only chain endpoints and pump/junction nodes carry
pressure columns.  Interior chain pressures are affine in the head pressure
for a chosen diameter, so their bounds collapse into two rows per group:

    p_head >= sum_d x_d * max_w(lb_w - R_w(d))
    p_head <= sum_d x_d * min_w(ub_w - R_w(d))

where ``R_w(d)`` is the net drop from interior node ``w`` to the head.  Both
rows are exact for binary ``x``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..hydraulics import HydraulicState
from ..network import Network, leaf_order, natural_key
from .bnb import branch_and_bound
from .simplex import BoundedSimplex, LPProblem, LPStatus

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
PRESOLVE_TOL = 1e-9


class Mode(str, Enum):
    MIN_COST = "MinCost"
    MIN_ENTRY_PRESSURE = "MinEntryPressure"


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


class ModelError(ValueError):
    """The network and hydraulic state cannot form a sizing model."""


@dataclass
class PipeGroup:
    name: str
    pipes: tuple[str, ...]
    arcs: tuple[str, ...]  # tail to head
    tail: str
    head: str
    diameters: tuple[float, ...]
    costs: tuple[float, ...]
    drop: np.ndarray  # p_tail - p_head per candidate
    head_lower: np.ndarray
    head_upper: np.ndarray
    to_head: np.ndarray  # (len(arcs), n_cand): drop from each arc's tail to the group head
    removed: tuple[float, ...] = ()
    columns: list[int] = field(default_factory=list)

    @property
    def free(self) -> bool:
        return len(self.diameters) > 1


@dataclass
class SizingModel:
    network: Network
    mode: Mode
    groups: list[PipeGroup]
    lower: dict[str, float]
    upper: dict[str, float]
    key_nodes: list[str]
    node_col: dict[str, int]
    problem: LPProblem | None
    binary: np.ndarray
    cost_scale: float
    row_names: list[str]
    col_names: list[str]
    infeasible_hint: str | None = None

    @property
    def n_binaries(self) -> int:
        return int(self.binary.size)


@dataclass
class SizingSolution:
    status: SolveStatus
    group_diameters: dict[str, float]
    pipe_diameters: dict[str, float]  # original pipe ids
    arc_diameters: dict[str, float]  # segment ids
    pressures: dict[str, float]
    objective: float
    cost: float
    nodes_explored: int = 0
    simplex_iterations: int = 0
    hint: str | None = None

    def diameter_vector(self) -> tuple[float, ...]:
        return tuple(self.pipe_diameters[p] for p in sorted(self.pipe_diameters, key=natural_key))


# -- building --------------------------------------------------------------

def node_bounds(network: Network, lower: dict[str, float] | None = None) -> tuple[dict, dict]:
    """Node pressure intervals after applying dynamic lower bounds and pump ranges."""
    lower = lower or {}
    lo = {v: max(n.p_min, lower.get(v, -math.inf)) for v, n in network.nodes.items()}
    hi = {v: n.p_max for v, n in network.nodes.items()}
    for pump in network.pumps.values():
        for v in (pump.tail, pump.head):
            lo[v] = max(lo[v], pump.p_min)
            hi[v] = min(hi[v], pump.p_max)
    return lo, hi


def _group_members(network: Network) -> dict[str, list[str]]:
    parent = {p: p for p in network.original_pipes()}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for v in network.intermediate_nodes():
        a = find(network.pipes[network.incoming[v][0]].group)
        b = find(network.pipes[network.outgoing[v][0]].group)
        if a != b:
            a, b = sorted((a, b), key=natural_key)
            parent[b] = a
    members: dict[str, list[str]] = {}
    for p in parent:
        members.setdefault(find(p), []).append(p)
    return {min(m, key=natural_key): sorted(m, key=natural_key) for m in members.values()}


def _chain(network: Network, arcs: set[str]) -> list[str]:
    tails = {network.pipes[a].tail for a in arcs}
    ends = [a for a in arcs if network.pipes[a].head not in tails]
    if len(ends) != 1:
        raise ModelError(f"pipe group {sorted(arcs, key=natural_key)[0]} is not a simple chain")
    chain = [ends[0]]
    while True:
        inc = network.incoming[network.pipes[chain[-1]].tail]
        if len(inc) == 1 and inc[0] in arcs:
            chain.append(inc[0])
        else:
            break
    if len(chain) != len(arcs):
        raise ModelError(f"pipe group {sorted(arcs, key=natural_key)[0]} is not a simple chain")
    return chain[::-1]


def build_model(network: Network, hydraulic: HydraulicState, lower: dict[str, float] | None = None,
                mode: Mode = Mode.MIN_COST, pinned: dict[str, float] | None = None) -> SizingModel:
    """Assemble the sizing MILP for fixed flows and friction constants.

    Parameters
    ----------
    lower
        Dynamic per-node pressure lower bounds (bar), typically saturation
        pressure plus margin; combined with the static node bounds.
    pinned
        Original pipe id -> diameter.  MinEntryPressure mode requires every
        pipe with a choice to be pinned.
    """
    pinned = dict(pinned or {})
    lo, hi = node_bounds(network, lower)
    by_origin: dict[str, list[str]] = {}
    for aid, p in network.pipes.items():
        by_origin.setdefault(p.group, []).append(aid)

    groups: list[PipeGroup] = []
    hint = None
    for name, members in sorted(_group_members(network).items(), key=lambda kv: natural_key(kv[0])):
        arcs = {a for m in members for a in by_origin[m]}
        chain = _chain(network, arcs)
        first = {m: network.pipes[by_origin[m][0]] for m in members}
        cands = None
        for p in first.values():
            if not p.catalog:
                raise ModelError(f"pipe {p.group}: empty diameter catalog")
            cands = set(p.catalog) if cands is None else cands & set(p.catalog)
        if not cands:
            raise ModelError(f"pipe group {name}: no diameter common to {', '.join(members)}")
        pins = {pinned[m] for m in members if m in pinned}
        if len(pins) > 1:
            raise ModelError(f"pipe group {name}: conflicting pinned diameters {sorted(pins)}")
        if pins:
            d = pins.pop()
            if d not in cands:
                raise ModelError(f"pipe group {name}: pinned diameter {d} not in catalog")
            cands = {d}
        elif mode is Mode.MIN_ENTRY_PRESSURE and len(cands) > 1:
            raise ModelError(f"pipe group {name}: MinEntryPressure mode needs pinned diameters")
        cands = sorted(cands)
        costs = tuple(math.fsum(p.cost_of(d) for p in first.values()) for d in cands)
        net = np.empty((len(chain), len(cands)))
        cols: dict[str, list[int]] = {}
        for i, aid in enumerate(chain):
            pipe = network.pipes[aid]
            if aid not in hydraulic.drops or aid not in hydraulic.elevation:
                raise ModelError(f"missing friction constant for pipe {aid}")
            row = hydraulic.drops[aid]
            if len(row) != len(pipe.catalog):
                raise ModelError(f"missing friction constant for pipe {aid}")
            c = cols.get(pipe.group)
            if c is None:
                c = cols[pipe.group] = [pipe.catalog.index(d) for d in cands]
            net[i] = [row[j] for j in c]
            net[i] -= hydraulic.elevation[aid]
        to_head = np.cumsum(net[::-1], axis=0)[::-1]
        interior = [network.pipes[a].tail for a in chain[1:]]
        if interior:
            ilo = np.array([lo[w] for w in interior])[:, None]
            ihi = np.array([hi[w] for w in interior])[:, None]
            head_lower = (ilo - to_head[1:]).max(axis=0)
            head_upper = (ihi - to_head[1:]).min(axis=0)
        else:
            head_lower = np.full(len(cands), -np.inf)
            head_upper = np.full(len(cands), np.inf)
        tail, head = network.pipes[chain[0]].tail, network.pipes[chain[-1]].head
        drop = to_head[0]
        # presolve: drop diameters that cannot fit their own chain's bounds
        h_lo = np.maximum.reduce([np.full(len(cands), lo[head]), head_lower, lo[tail] - drop])
        h_hi = np.minimum.reduce([np.full(len(cands), hi[head]), head_upper, hi[tail] - drop])
        keep = h_lo <= h_hi + PRESOLVE_TOL
        removed = tuple(d for d, k in zip(cands, keep) if not k)
        if not keep.any():
            hint = hint or f"pipe group {name}: no diameter keeps nodes {tail}..{head} within bounds"
            keep[:] = True
        idx = np.flatnonzero(keep)
        groups.append(PipeGroup(
            name=name, pipes=tuple(members), arcs=tuple(chain), tail=tail, head=head,
            diameters=tuple(cands[i] for i in idx), costs=tuple(costs[i] for i in idx),
            drop=drop[idx], head_lower=head_lower[idx], head_upper=head_upper[idx],
            to_head=to_head[:, idx], removed=removed))

    interior_nodes = {network.pipes[a].tail for g in groups for a in g.arcs[1:]}
    key_nodes = sorted((v for v in network.nodes if v not in interior_nodes), key=natural_key)
    col_names: list[str] = []
    for g in groups:
        if g.free:
            g.columns = list(range(len(col_names), len(col_names) + len(g.diameters)))
            col_names += [f"x_{g.name}_{round(d * 1000)}mm" for d in g.diameters]
    n_bin = len(col_names)
    node_col = {v: n_bin + i for i, v in enumerate(key_nodes)}
    col_names += [f"p_{v}" for v in key_nodes]
    n = len(col_names)
    lb = np.zeros(n)
    ub = np.ones(n)
    for v in key_nodes:
        lb[node_col[v]], ub[node_col[v]] = lo[v], hi[v]

    rows: list[np.ndarray] = []
    senses: list[str] = []
    rhs: list[float] = []
    row_names: list[str] = []

    def add(coefs: dict[int, float], sense: str, b: float, name: str):
        r = np.zeros(n)
        for j, a in coefs.items():
            r[j] += a
        rows.append(r)
        senses.append(sense)
        rhs.append(b)
        row_names.append(name)

    for g in groups:
        t, h = node_col[g.tail], node_col[g.head]
        if g.free:
            add({j: 1.0 for j in g.columns}, "E", 1.0, f"select_{g.name}")
            add({t: 1.0, h: -1.0, **{j: -c for j, c in zip(g.columns, g.drop)}}, "E", 0.0, f"drop_{g.name}")
            if np.isfinite(g.head_lower).all() and g.head_lower.max() > lb[h] + PRESOLVE_TOL:
                add({h: 1.0, **{j: -c for j, c in zip(g.columns, g.head_lower)}}, "G", 0.0, f"inner_lo_{g.name}")
            if np.isfinite(g.head_upper).all() and g.head_upper.min() < ub[h] - PRESOLVE_TOL:
                add({h: 1.0, **{j: -c for j, c in zip(g.columns, g.head_upper)}}, "L", 0.0, f"inner_hi_{g.name}")
        else:
            add({t: 1.0, h: -1.0}, "E", float(g.drop[0]), f"drop_{g.name}")
            lb[h] = max(lb[h], float(g.head_lower[0]))
            ub[h] = min(ub[h], float(g.head_upper[0]))
    for pid in sorted(network.pumps, key=natural_key):
        pump = network.pumps[pid]
        add({node_col[pump.head]: 1.0, node_col[pump.tail]: -1.0}, "G", 0.0, f"pump_{pid}")

    if hint is None:
        for v in key_nodes:
            if lb[node_col[v]] > ub[node_col[v]] + PRESOLVE_TOL:
                hint = f"node {v}: pressure interval [{lb[node_col[v]]:.6g}, {ub[node_col[v]]:.6g}] bar is empty"
                break

    c = np.zeros(n)
    scale = 1.0
    if mode is Mode.MIN_COST:
        all_costs = [c_ for g in groups if g.free for c_ in g.costs]
        scale = max(all_costs, default=1.0) or 1.0
        for g in groups:
            for j, cost in zip(g.columns, g.costs):
                c[j] = cost / scale
    else:
        for v in network.entries:
            c[node_col[v]] = 1.0
    problem = None
    if hint is None:
        A = np.array(rows) if rows else np.zeros((0, n))
        ub_fin = np.where(lb > ub, lb, ub)  # empty intervals only occur with a hint set
        problem = LPProblem(c, A, "".join(senses), np.array(rhs), lb, ub_fin)
    binary = np.arange(n_bin)
    return SizingModel(network, mode, groups, lo, hi, key_nodes, node_col, problem, binary, scale,
                       row_names, col_names, hint)


# -- solving ---------------------------------------------------------------

@dataclass
class MilpConfig:
    max_nodes: int = 200000


def _chosen(g: PipeGroup, x: np.ndarray) -> int:
    if not g.free:
        return 0
    return int(np.argmax(x[g.columns]))


def solve(model: SizingModel, config: MilpConfig | None = None) -> SizingSolution:
    """Exact optimum by best-first branch-and-bound, then canonical pressures.

    The reported pressures are the component-wise least feasible pressures
    for the chosen diameters, which makes them unique.
    """
    config = config or MilpConfig()
    if model.infeasible_hint is not None:
        return _failure(model, SolveStatus.INFEASIBLE, model.infeasible_hint)
    free = [g for g in model.groups if g.free]
    pipe_order = sorted((p for g in free for p in g.pipes), key=natural_key)
    group_of = {p: g for g in free for p in g.pipes}
    entry_cols = [model.node_col[v] for v in model.network.entries]

    if model.mode is Mode.MIN_COST:
        def exact(x):
            return math.fsum(g.costs[_chosen(g, x)] for g in model.groups)
    else:
        def exact(x):
            return math.fsum(x[entry_cols])

    def tie_key(x):
        return tuple(group_of[p].diameters[_chosen(group_of[p], x)] for p in pipe_order)

    res = branch_and_bound(model.problem, model.binary, exact_objective=exact, tie_key=tie_key,
                           objective_scale=1.0 / model.cost_scale if model.mode is Mode.MIN_COST else 1.0,
                           tie_groups=[list(g.columns) for g in free], max_nodes=config.max_nodes)
    if res.status is LPStatus.INFEASIBLE:
        return _failure(model, SolveStatus.INFEASIBLE, diagnose_infeasibility(model), res.stats)
    if res.status is not LPStatus.OPTIMAL:
        return _failure(model, SolveStatus.ITERATION_LIMIT, "branch-and-bound node limit reached", res.stats)

    # canonical pressures: least element of the pressure polytope for the chosen x
    p = model.problem
    lo, up = p.lower.copy(), p.upper.copy()
    lo[model.binary] = up[model.binary] = res.x[model.binary]
    c = np.zeros_like(p.c)
    c[model.binary.size:] = 1.0
    polish = BoundedSimplex(LPProblem(c, p.A, p.senses, p.b, p.lower, p.upper)).solve(lo, up)
    if polish.status is not LPStatus.OPTIMAL:
        return _failure(model, SolveStatus.INFEASIBLE, "fixed-diameter pressure LP infeasible", res.stats)
    x = polish.x
    x[model.binary] = res.x[model.binary]
    sol = _assemble(model, x, SolveStatus.OPTIMAL, res.stats)
    if model.mode is Mode.MIN_COST:
        sol.objective = sol.cost
    else:
        sol.objective = math.fsum(sol.pressures[v] for v in model.network.entries)
    return sol


def _assemble(model: SizingModel, x: np.ndarray, status: SolveStatus, stats=None) -> SizingSolution:
    net = model.network
    pressures: dict[str, float] = {v: float(x[model.node_col[v]]) for v in model.key_nodes}
    group_d, pipe_d, arc_d = {}, {}, {}
    costs = []
    for g in model.groups:
        k = _chosen(g, x)
        d = g.diameters[k]
        group_d[g.name] = d
        for m in g.pipes:
            pipe_d[m] = d
        costs.append(g.costs[k])
        p_head = pressures[g.head]
        for i, aid in enumerate(g.arcs):
            arc_d[aid] = d
            if i > 0:
                pressures[net.pipes[aid].tail] = p_head + float(g.to_head[i, k])
    return SizingSolution(
        status=status, group_diameters=group_d, pipe_diameters=pipe_d, arc_diameters=arc_d,
        pressures={v: pressures[v] for v in sorted(pressures, key=natural_key)},
        objective=math.nan, cost=math.fsum(costs),
        nodes_explored=stats.nodes if stats else 0, simplex_iterations=stats.lp_iterations if stats else 0)


def _failure(model: SizingModel, status: SolveStatus, hint: str, stats=None) -> SizingSolution:
    log.info("sizing model %s: %s", status.value, hint)
    return SizingSolution(status, {}, {}, {}, {}, math.inf, math.inf,
                          nodes_explored=stats.nodes if stats else 0,
                          simplex_iterations=stats.lp_iterations if stats else 0, hint=hint)


def diagnose_infeasibility(model: SizingModel, sweeps: int = 20) -> str:
    """Name the first node (in leaf order) whose propagated pressure interval is empty.

    Intervals are tightened by bound propagation over every arc using the
    smallest and largest candidate drop, which relaxes the diameter choice.
    """
    net = model.network
    lo, hi = dict(model.lower), dict(model.upper)
    span = {}
    for g in model.groups:
        for i, aid in enumerate(g.arcs):
            seg = g.to_head[i] - (g.to_head[i + 1] if i + 1 < len(g.arcs) else 0.0)
            span[aid] = (float(seg.min()), float(seg.max()))
    order = leaf_order(net)
    node_order = [net.arc(a).tail for a in order] + [net.exit]

    def empty():
        return next((v for v in node_order if lo[v] > hi[v] + PRESOLVE_TOL), None)

    for _ in range(sweeps):
        before = (dict(lo), dict(hi))
        for seq in (order, order[::-1]):
            for aid in seq:
                arc = net.arc(aid)
                t, h = arc.tail, arc.head
                if aid in span:
                    dmin, dmax = span[aid]
                    lo[t] = max(lo[t], lo[h] + dmin)
                    hi[t] = min(hi[t], hi[h] + dmax)
                    lo[h] = max(lo[h], lo[t] - dmax)
                    hi[h] = min(hi[h], hi[t] - dmin)
                else:
                    lo[h] = max(lo[h], lo[t])
                    hi[t] = min(hi[t], hi[h])
        v = empty()
        if v is not None:
            return f"node {v}: required pressure {lo[v]:.6g} bar exceeds attainable {hi[v]:.6g} bar"
        if before == (lo, hi):
            break
    return "infeasible: no single node interval is empty; conflict spans several pipe groups"


# -- verification ----------------------------------------------------------

@dataclass
class FeasibilityReport:
    max_violation: dict[str, float]
    worst_subject: dict[str, str]
    tolerance: float

    @property
    def ok(self) -> bool:
        return all(v <= self.tolerance for v in self.max_violation.values())

    def __str__(self) -> str:
        parts = [f"{k}={v:.3g}" + (f" ({self.worst_subject[k]})" if k in self.worst_subject else "")
                 for k, v in self.max_violation.items()]
        return ("feasible: " if self.ok else "INFEASIBLE: ") + ", ".join(parts)


FAMILIES = ("node_bounds", "pipe_drop", "pump_increase", "pump_range", "selection", "linking", "fixed_diameter")


def check_feasible(network: Network, diameters: dict[str, float], pressures: dict[str, float],
                   hydraulic: HydraulicState, lower: dict[str, float] | None = None,
                   tolerance: float = FEAS_TOL) -> FeasibilityReport:
    """Re-evaluate every sizing constraint for a full assignment.

    ``diameters`` maps pipe segment ids to diameters.  Violations are in bar
    for pressure families, in meters for ``linking`` and ``fixed_diameter``,
    and a count for ``selection``.
    """
    worst = {f: 0.0 for f in FAMILIES}
    who: dict[str, str] = {}

    def note(family, value, subject):
        if value > worst[family]:
            worst[family] = value
            who[family] = subject

    lower = lower or {}
    for v, node in network.nodes.items():
        p = pressures[v]
        lb = max(node.p_min, lower.get(v, -math.inf))
        note("node_bounds", max(lb - p, p - node.p_max, 0.0), v)
    bad_sel = 0
    for aid, pipe in network.pipes.items():
        d = diameters.get(aid)
        if d is None or d not in pipe.catalog:
            bad_sel += 1
            who.setdefault("selection", aid)
            continue
        k = pipe.catalog.index(d)
        net = float(hydraulic.drops[aid][k]) - hydraulic.elevation[aid]
        note("pipe_drop", abs(pressures[pipe.tail] - pressures[pipe.head] - net), aid)
        if pipe.fixed_diameter is not None:
            note("fixed_diameter", abs(d - pipe.fixed_diameter), aid)
    worst["selection"] = float(bad_sel)
    for pid, pump in network.pumps.items():
        note("pump_increase", max(pressures[pump.tail] - pressures[pump.head], 0.0), pid)
        for v in (pump.tail, pump.head):
            p = pressures[v]
            note("pump_range", max(pump.p_min - p, p - pump.p_max, 0.0), pid)
    linked = [(network.incoming[v][0], network.outgoing[v][0]) for v in network.intermediate_nodes()]
    by_origin: dict[str, list[str]] = {}
    for aid, pipe in network.pipes.items():
        by_origin.setdefault(pipe.group, []).append(aid)
    for segs in by_origin.values():
        linked += list(zip(segs, segs[1:]))
    for a, b in linked:
        if a in diameters and b in diameters:
            note("linking", abs(diameters[a] - diameters[b]), f"{a}/{b}")
    return FeasibilityReport(worst, who, tolerance)


# -- LP text dump ----------------------------------------------------------

_BAD = re.compile(r"[^A-Za-z0-9_.]")


def _lp_name(s: str) -> str:
    s = _BAD.sub("_", s)
    return s if not s[0].isdigit() and s[0] != "." else "_" + s


def _lp_terms(coefs: np.ndarray, names: list[str]) -> str:
    out = []
    for j in np.flatnonzero(coefs):
        a = float(coefs[j])
        out.append(f"{'-' if a < 0 else '+'} {abs(a)!r} {names[j]}")
    s = " ".join(out) or "0 " + names[0]
    return s[2:] if s.startswith("+ ") else s


def to_lp_format(model: SizingModel) -> str:
    """Model in CPLEX LP text format (objective in internal scaled units)."""
    if model.problem is None:
        raise ModelError(f"model has no LP: {model.infeasible_hint}")
    p = model.problem
    names = [_lp_name(s) for s in model.col_names]
    lines = [f"\\ sizing model, mode {model.mode.value}, cost scale {model.cost_scale!r}",
             "Minimize", f" obj: {_lp_terms(p.c, names)}", "Subject To"]
    ops = {"E": "=", "L": "<=", "G": ">="}
    for i, row in enumerate(p.A):
        lines.append(f" {_lp_name(model.row_names[i])}: {_lp_terms(row, names)} {ops[p.senses[i]]} {float(p.b[i])!r}")
    lines.append("Bounds")
    for j, nm in enumerate(names):
        if j in set(model.binary.tolist()):
            continue
        up = "+inf" if not np.isfinite(p.upper[j]) else repr(float(p.upper[j]))
        lines.append(f" {float(p.lower[j])!r} <= {nm} <= {up}")
    if model.binary.size:
        lines.append("Binaries")
        lines.extend(f" {names[j]}" for j in model.binary)
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: SizingModel, path: str | Path) -> None:
    Path(path).write_text(to_lp_format(model))
