"""Outer fixed-point loop coupling diameter selection, temperatures and fluid properties.

Each iteration refreshes the saturation-based pressure lower bounds from the
previous temperatures, solves the sizing model with friction constants from
the previous (p, T) state, propagates temperatures for the new pressures and
diameters, and re-evaluates the friction constants.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import hydraulics
from .hydraulics import HydraulicState, compute_flows, pipe_drop_table
from .milp import MilpConfig, Mode, SizingSolution, SolveStatus, build_model, solve
from .milp.model import node_bounds
from .network import Network, Node, NodeKind, Pipe, leaf_order, natural_key, segment
from .properties import PropertyTable, load_tables, p_lower_bound
from .thermal import EPS_T, SoilEnvironment, ThermalState, propagate_temperatures

log = logging.getLogger(__name__)


class Termination(str, Enum):
    CONVERGED = "Converged"
    EXIT_STRATEGY_CONVERGED = "ExitStrategyConverged"
    CYCLING = "Cycling"
    ITERATION_LIMIT = "IterationLimit"
    INFEASIBLE = "Infeasible"

    @property
    def converged(self) -> bool:
        return self in (Termination.CONVERGED, Termination.EXIT_STRATEGY_CONVERGED)


@dataclass
class SolverConfig:
    eps_lambda: float = hydraulics.EPS_LAMBDA
    eps_t: float = EPS_T
    eps_p: float = 0.1
    max_iter: int = 50
    exit_window: int = 5
    sat_margin: float = 5.0
    seg_len: float = 500.0
    strict_clamp: bool = False
    exit_strategy: bool = True
    cycle_window: int = 10
    max_nodes: int = 200000

    def __post_init__(self):
        for name in ("eps_lambda", "eps_t", "eps_p", "seg_len"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sat_margin < 0:
            raise ValueError("sat_margin must be nonnegative")
        if self.max_iter < 1 or self.exit_window < 1 or self.cycle_window < 2:
            raise ValueError("iteration limits must be positive")


@dataclass
class IterationSnapshot:
    iteration: int
    mode: str
    status: str
    diameter_hash: str
    diameters: list[float]
    max_dp: float | None
    objective: float | None
    cost: float | None
    bb_nodes: int
    simplex_iterations: int
    clamped_lookups: int
    below_saturation: int
    timing: dict[str, float] = field(default_factory=dict)


@dataclass
class RunRecord:
    eps_p: float
    pipes: list[str]
    iterations: list[IterationSnapshot] = field(default_factory=list)
    termination: Termination | None = None
    detail: str = ""
    exit_strategy_iteration: int | None = None
    cycle: list[list[float]] = field(default_factory=list)

    def lines(self, timing: bool = False) -> list[str]:
        """One JSON document per iteration plus a closing summary line.

        Timings are excluded unless requested so the log is reproducible
        byte for byte.
        """
        out = [json.dumps({"kind": "header", "eps_p": self.eps_p, "pipes": self.pipes}, sort_keys=True)]
        for snap in self.iterations:
            d = asdict(snap)
            d.pop("timing")
            d["kind"] = "iteration"
            if timing:
                d = {"kind": "timing", "iteration": snap.iteration, **snap.timing}
            out.append(json.dumps(d, sort_keys=True))
        if not timing:
            out.append(json.dumps({"kind": "summary", "termination": self.termination.value if self.termination
                                   else None, "detail": self.detail, "iterations": len(self.iterations),
                                   "exit_strategy_iteration": self.exit_strategy_iteration,
                                   "cycle": self.cycle}, sort_keys=True))
        return out

    def write(self, path: str | Path, timing_path: str | Path | None = None) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n")
        if timing_path is not None:
            Path(timing_path).write_text("\n".join(self.lines(timing=True)[1:]) + "\n")


def read_run_record(path: str | Path) -> RunRecord:
    rec = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            kind = doc.pop("kind")
            if kind == "header":
                rec = RunRecord(eps_p=doc["eps_p"], pipes=doc["pipes"])
            elif kind == "iteration":
                rec.iterations.append(IterationSnapshot(**doc))
            elif kind == "summary":
                rec.termination = Termination(doc["termination"]) if doc["termination"] else None
                rec.detail = doc["detail"]
                rec.exit_strategy_iteration = doc["exit_strategy_iteration"]
                rec.cycle = doc["cycle"]
    if rec is None:
        raise ValueError(f"{path}: no run record header")
    return rec


def criterion_holds(record: RunRecord) -> bool:
    """Re-check the stopping rule from the logged snapshots alone."""
    its = record.iterations
    if len(its) < 2 or its[-1].max_dp is None:
        return False
    return its[-1].diameters == its[-2].diameters and its[-1].max_dp < record.eps_p


@dataclass
class RunResult:
    network: Network
    solution: SizingSolution
    thermal: ThermalState
    record: RunRecord
    hydraulic: HydraulicState
    lower: dict[str, float]
    flows: dict[str, float]


def _hash(vec: tuple[float, ...]) -> str:
    return hashlib.sha256(repr(vec).encode()).hexdigest()[:16]


def lower_bounds(network: Network, temperatures: dict[str, float], tables: PropertyTable,
                 margin: float) -> dict[str, float]:
    """Saturation pressure plus ``margin`` at every node's temperature."""
    if tables.saturation is None:
        return {}
    curve = tables.saturation
    return {v: p_lower_bound(curve, temperatures[v], margin) for v in network.nodes}


def refresh_friction(network: Network, flows: dict[str, float], pressures: dict[str, float],
                     temperatures: dict[str, float], tables: PropertyTable) -> HydraulicState:
    """Friction constants with density and viscosity at each segment's mean endpoint state."""
    pids = list(network.pipes)
    p = np.array([0.5 * (pressures[network.pipes[a].tail] + pressures[network.pipes[a].head]) for a in pids])
    t = np.array([0.5 * (temperatures[network.pipes[a].tail] + temperatures[network.pipes[a].head]) for a in pids])
    rho = tables.eval_array("density", p, t)
    mu = tables.eval_array("viscosity", p, t)
    return pipe_drop_table(network, flows, dict(zip(pids, rho.tolist())), dict(zip(pids, mu.tolist())))


def _vector(network: Network, sol: SizingSolution) -> tuple[float, ...]:
    return tuple(sol.pipe_diameters[p] for p in sorted(sol.pipe_diameters, key=natural_key))


def _pipe_cost(network: Network, origins: list[str], vec: tuple[float, ...]) -> float:
    first = {}
    for p in network.pipes.values():
        first.setdefault(p.group, p)
    return math.fsum(first[o].cost_of(d) for o, d in zip(origins, vec))


class _OuterLoop:
    """Mutable state of one outer-loop run, advanced one iteration at a time.

    Keeping the state in an object lets a run with the exit strategy be forked
    from a run without it at the iteration where the strategy would engage.
    """

    def __init__(self, network: Network, tables: PropertyTable, soil: SoilEnvironment, config: SolverConfig,
                 mode: Mode, pinned: dict[str, float] | None):
        self.network, self.tables, self.soil, self.config, self.mode = network, tables, soil, config, mode
        self.milp_cfg = MilpConfig(max_nodes=config.max_nodes)
        self.flows = compute_flows(network)
        self.order = leaf_order(network)
        self.origins = sorted({p.group for p in network.pipes.values()}, key=natural_key)
        self.record = RunRecord(eps_p=config.eps_p, pipes=self.origins)

        # initial state: largest diameters, upper-bound pressures, soil temperature off the entries
        _, upper = node_bounds(network)
        self.pressures = dict(upper)
        self.temps = {v: (n.temperature if n.kind is NodeKind.ENTRY and n.temperature is not None
                          else soil.temperature) for v, n in network.nodes.items()}
        self.prev_vec = tuple(max(network.pipes[_first_segment(network, o)].catalog) for o in self.origins)
        self.hydraulic = refresh_friction(network, self.flows, self.pressures, self.temps, tables)
        self.used_hydraulic = self.hydraulic
        self.lower: dict[str, float] = {}
        self.pinned = dict(pinned or {})
        self.exit_pinned = False
        self.stable = 0
        self.history: deque[tuple[str, tuple[float, ...]]] = deque(maxlen=config.cycle_window)
        self.thermal: ThermalState | None = None
        self.sol: SizingSolution | None = None
        # vector the exit strategy would pin after the latest iteration (None if it would not engage)
        self.engage: tuple[tuple[float, ...], str] | None = None

    @property
    def done(self) -> bool:
        return self.record.termination is not None

    def fork(self, config: SolverConfig) -> "_OuterLoop":
        shared = {id(self.network): self.network, id(self.tables): self.tables, id(self.soil): self.soil}
        twin = copy.deepcopy(self, memo=shared)
        twin.config = config
        return twin

    def pin(self, vec: tuple[float, ...], detail: str) -> None:
        self.pinned = dict(zip(self.origins, vec))
        self.exit_pinned = True
        self.record.termination = None
        self.record.exit_strategy_iteration = len(self.record.iterations)
        self.record.detail = detail
        log.info("exit strategy engaged at iteration %d", self.record.exit_strategy_iteration)

    def step(self) -> None:
        config, network, tables = self.config, self.network, self.tables
        it = len(self.record.iterations) + 1
        self.engage = None
        timing = {}
        tables.strict = config.strict_clamp
        tables.clamps.reset()
        t0 = time.perf_counter()
        self.lower = lower_bounds(network, self.temps, tables, config.sat_margin)
        self.used_hydraulic = self.hydraulic
        cur_mode = Mode.MIN_ENTRY_PRESSURE if self.exit_pinned else self.mode
        model = build_model(network, self.hydraulic, self.lower, cur_mode, self.pinned)
        t1 = time.perf_counter()
        sol = self.sol = solve(model, self.milp_cfg)
        t2 = time.perf_counter()
        timing.update(bounds_and_model=t1 - t0, milp=t2 - t1)
        if sol.status is not SolveStatus.OPTIMAL:
            self.record.iterations.append(IterationSnapshot(
                it, cur_mode.value, sol.status.value, "", [], None, None, None, sol.nodes_explored,
                sol.simplex_iterations, tables.clamps.count, 0, timing))
            self.record.termination = (Termination.INFEASIBLE if sol.status is SolveStatus.INFEASIBLE
                                       else Termination.ITERATION_LIMIT)
            self.record.detail = sol.hint or ""
            return
        vec = _vector(network, sol)
        self.thermal = propagate_temperatures(network, self.flows, sol.pressures, sol.arc_diameters, tables,
                                              self.soil, eps_t=config.eps_t, order=self.order)
        t3 = time.perf_counter()
        max_dp = max(abs(sol.pressures[v] - self.pressures[v]) for v in network.nodes)
        same = vec == self.prev_vec
        self.pressures, self.temps = sol.pressures, self.thermal.node_t
        self.hydraulic = refresh_friction(network, self.flows, self.pressures, self.temps, tables)
        t4 = time.perf_counter()
        timing.update(thermal=t3 - t2, friction=t4 - t3)
        h = _hash(vec)
        self.record.iterations.append(IterationSnapshot(
            it, cur_mode.value, sol.status.value, h, list(vec), max_dp, sol.objective, sol.cost,
            sol.nodes_explored, sol.simplex_iterations, tables.clamps.count, len(self.thermal.below_saturation),
            timing))
        log.info("iteration %d: %s max|dp| = %.4g bar, cost = %.6g", it, h, max_dp, sol.cost)

        if same and max_dp < config.eps_p:
            self.record.termination = (Termination.EXIT_STRATEGY_CONVERGED if self.exit_pinned
                                       else Termination.CONVERGED)
            return
        self.stable = self.stable + 1 if same else 0
        self.prev_vec = vec
        if self.exit_pinned or self.mode is Mode.MIN_ENTRY_PRESSURE:
            self._check_limit(it)
            return

        earlier = [k for k, (hh, _) in enumerate(self.history) if hh == h]
        if earlier and earlier[-1] != len(self.history) - 1:
            members = list(dict.fromkeys(v for _, v in list(self.history)[earlier[-1]:]))
            self.record.cycle = [list(v) for v in members]
            # resolve by pinning the most expensive vector of the cycle
            target = max(members, key=lambda v: (_pipe_cost(network, self.origins, v), v))
            self.engage = (target, "cycle resolved by pinning its most expensive diameter vector")
            if not config.exit_strategy:
                self.record.termination = Termination.CYCLING
                self.record.detail = f"diameter vectors repeat with period {len(self.history) - earlier[-1]}"
        elif self.stable >= config.exit_window:
            self.engage = (vec, f"diameters unchanged for {self.stable} iterations; minimising entry pressures")
        self.history.append((h, vec))
        if self.engage is not None and config.exit_strategy:
            self.pin(*self.engage)
        self._check_limit(it)

    def _check_limit(self, it: int) -> None:
        if not self.done and it >= self.config.max_iter:
            self.record.termination = Termination.ITERATION_LIMIT
            self.record.detail = f"no convergence within {self.config.max_iter} iterations"

    def result(self) -> RunResult:
        thermal = self.thermal if self.thermal is not None else ThermalState(dict(self.temps), {}, {})
        return RunResult(self.network, self.sol, thermal, self.record, self.used_hydraulic, self.lower, self.flows)


def run(network: Network, tables: PropertyTable, soil: SoilEnvironment, config: SolverConfig | None = None,
        *, mode: Mode = Mode.MIN_COST, pinned: dict[str, float] | None = None) -> RunResult:
    """Iterate sizing, temperature propagation and property refresh to a fixed point.

    ``network`` must already be segmented.  With ``mode`` MinEntryPressure
    every choosable pipe must be listed in ``pinned`` (original pipe ids).
    """
    loop = _OuterLoop(network, tables, soil, config or SolverConfig(), mode, pinned)
    while not loop.done:
        loop.step()
    return loop.result()


def run_both(network: Network, tables: PropertyTable, soil: SoilEnvironment,
             config: SolverConfig | None = None) -> tuple[RunResult, RunResult]:
    """Runs without and with the exit strategy, sharing their common prefix.

    Both results equal those of two separate :func:`run` calls; the second
    run is forked from the first at the iteration where the strategy engages.
    """
    config = config or SolverConfig()
    off_cfg, on_cfg = replace(config, exit_strategy=False), replace(config, exit_strategy=True)
    loop = _OuterLoop(network, tables, soil, off_cfg, Mode.MIN_COST, None)
    twin = None
    while not loop.done:
        loop.step()
        if twin is None and loop.engage is not None:
            twin = loop.fork(on_cfg)
            twin.pin(*loop.engage)
            twin._check_limit(len(twin.record.iterations))
    off = loop.result()
    if twin is None:
        return off, copy.deepcopy(off, memo={id(network): network})
    while not twin.done:
        twin.step()
    return off, twin.result()


def _first_segment(network: Network, origin: str) -> str:
    for aid, p in network.pipes.items():
        if p.group == origin:
            return aid
    raise KeyError(origin)


def exit_strategy(result: RunResult, tables: PropertyTable, soil: SoilEnvironment,
                  config: SolverConfig | None = None) -> RunResult:
    """Pin the last diameters of ``result`` and re-run minimising the entry pressures."""
    if result.solution is None or result.solution.status is not SolveStatus.OPTIMAL:
        raise ValueError("exit strategy needs a feasible diameter vector")
    return run(result.network, tables, soil, config, mode=Mode.MIN_ENTRY_PRESSURE,
               pinned=dict(result.solution.pipe_diameters))


# -- single-pipeline validation -------------------------------------------

@dataclass
class PipelineCase:
    """Single horizontal pipeline with fixed diameter; defaults reproduce the reference case."""

    length: float = 150_000.0
    diameter: float = 0.5
    roughness: float = 0.0005
    wall_conductivity: float = 30.0
    burial_depth: float = 0.25
    wall_thickness: float = 0.02
    mass_flow: float = 117.0
    inlet_temperature: float = 313.15
    inlet_p_max: float = 150.0
    outlet_p_min: float = 85.0
    soil_temperature: float = 283.15
    soil_conductivity: float = 1.0

    def network(self) -> Network:
        nodes = {
            "in": Node("in", NodeKind.ENTRY, supply=self.mass_flow, p_max=self.inlet_p_max,
                       temperature=self.inlet_temperature, x=0.0, y=0.0),
            "out": Node("out", NodeKind.EXIT, supply=-self.mass_flow, p_min=self.outlet_p_min,
                        p_max=self.inlet_p_max, x=self.length, y=0.0),
        }
        pipe = Pipe("pipe", "in", "out", self.length, (self.diameter,), (0.0,), roughness=self.roughness,
                    wall_conductivity=self.wall_conductivity, burial_depth=self.burial_depth,
                    wall_thickness=self.wall_thickness, fixed_diameter=self.diameter)
        return Network(nodes, {"pipe": pipe}, {}, {"name": "single pipeline validation"})

    def soil(self) -> SoilEnvironment:
        return SoilEnvironment(self.soil_temperature, self.soil_conductivity)


@dataclass
class ProfilePoint:
    x: float
    p: float
    T: float
    density: float


@dataclass
class PipelineProfile:
    points: list[ProfilePoint]
    result: RunResult

    @property
    def inlet(self) -> ProfilePoint:
        return self.points[0]

    @property
    def outlet(self) -> ProfilePoint:
        return self.points[-1]


def validate_single_pipe(case: PipelineCase | None = None, tables: PropertyTable | None = None,
                         config: SolverConfig | None = None) -> PipelineProfile:
    """Run the outer loop minimising the inlet pressure of one fixed-diameter pipe."""
    case = case or PipelineCase()
    tables = tables or load_tables()
    config = config or SolverConfig()
    if case.length == 0:
        rho = tables.eval("density", case.outlet_p_min, case.inlet_temperature)
        pt = ProfilePoint(0.0, case.outlet_p_min, case.inlet_temperature, rho)
        return PipelineProfile([pt, pt], None)
    net = segment(case.network(), config.seg_len)
    res = run(net, tables, case.soil(), config, mode=Mode.MIN_ENTRY_PRESSURE, pinned={"pipe": case.diameter})
    if res.solution.status is not SolveStatus.OPTIMAL:
        raise RuntimeError(f"validation run failed: {res.record.termination} {res.record.detail}")
    nodes = ["in"] + [net.arc(a).head for a in net.path_to_exit("in")]
    points = []
    x = 0.0
    for k, v in enumerate(nodes):
        if k:
            x += net.pipes[net.incoming[v][0]].length
        p, t = res.solution.pressures[v], res.thermal.node_t[v]
        points.append(ProfilePoint(x, p, t, tables.eval("density", p, t)))
    return PipelineProfile(points, res)
