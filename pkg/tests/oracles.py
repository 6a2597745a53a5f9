"""Independent reference implementations used by the tests.

None of these call into the package's solvers: flows come from a dense
incidence-matrix solve, MILP optima from brute-force enumeration with a
Bellman-Ford feasibility test on the difference-constraint system.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from co2sizing.hydraulics import HydraulicState
from co2sizing.network import Network, Node, NodeKind, Pipe, Pump, natural_key


def random_tree(rng: np.random.Generator, n_nodes: int, pump_prob: float = 0.0,
                catalog=(0.2, 0.3, 0.4), seg_lengths=(1000.0, 3000.0)) -> Network:
    """Random in-tree rooted at ``v0`` with positive supplies at the leaves."""
    heads = {}
    for i in range(1, n_nodes):
        heads[f"v{i}"] = f"v{int(rng.integers(0, i))}"
    has_child = set(heads.values())
    nodes = {}
    total = 0.0
    for i in range(1, n_nodes):
        v = f"v{i}"
        if v not in has_child:
            b = float(rng.uniform(1.0, 30.0))
            total += b
            nodes[v] = Node(v, NodeKind.ENTRY, supply=b, temperature=300.0)
        else:
            nodes[v] = Node(v, NodeKind.INNER)
    nodes["v0"] = Node("v0", NodeKind.EXIT, supply=-total)
    pipes, pumps = {}, {}
    for k, (t, h) in enumerate(sorted(heads.items(), key=lambda kv: int(kv[0][1:]))):
        aid = f"a{k + 1}"
        if nodes[t].kind is not NodeKind.ENTRY and rng.random() < pump_prob:
            pumps[aid] = Pump(aid, t, h)
        else:
            length = float(rng.uniform(*seg_lengths))
            pipes[aid] = Pipe(aid, t, h, length, tuple(catalog),
                              tuple(length * (1 + i) for i in range(len(catalog))))
    return Network(nodes, pipes, pumps)


def flows_by_linear_solve(network: Network) -> dict[str, float]:
    """Solve the node balance ``A q = -b`` with the exit row dropped."""
    arcs = sorted(network.pipes) + sorted(network.pumps)
    arc_ix = {a: i for i, a in enumerate(arcs)}
    nodes = [v for v in sorted(network.nodes) if v != network.exit]
    A = np.zeros((len(nodes), len(arcs)))
    b = np.zeros(len(nodes))
    for i, v in enumerate(nodes):
        for a in network.outgoing[v]:
            A[i, arc_ix[a]] += 1.0
        for a in network.incoming[v]:
            A[i, arc_ix[a]] -= 1.0
        b[i] = network.nodes[v].supply
    q = np.linalg.solve(A, b)
    return {a: float(q[arc_ix[a]]) for a in arcs}


def difference_feasible(n: int, edges: list[tuple[int, int, np.ndarray]], lb: np.ndarray,
                        ub: np.ndarray) -> np.ndarray:
    """Batch feasibility of ``p_j - p_i <= w`` systems with box bounds.

    ``edges`` holds (i, j, w) where ``w`` has one weight per scenario.
    Returns a boolean array over scenarios (Bellman-Ford from a virtual source).
    """
    m = edges[0][2].shape[0] if edges else 1
    src = n
    all_edges = list(edges)
    for v in range(n):
        all_edges.append((src, v, np.full(m, ub[v])))
        all_edges.append((v, src, np.full(m, -lb[v])))
    dist = np.full((n + 1, m), np.inf)
    dist[src] = 0.0
    for _ in range(n + 1):
        changed = False
        for i, j, w in all_edges:
            cand = dist[i] + w
            better = cand < dist[j] - 1e-9
            if better.any():
                dist[j] = np.where(better, cand, dist[j])
                changed = True
        if not changed:
            break
    ok = np.ones(m, bool)
    for i, j, w in all_edges:
        ok &= ~(dist[i] + w < dist[j] - 1e-7)
    return ok & np.isfinite(dist).all(axis=0)


def enumerate_optimum(network: Network, hydraulic: HydraulicState, lower: dict[str, float] | None = None):
    """Brute-force cheapest diameter assignment over original pipes.

    Every pipe (and its segments) takes one diameter; pipes meeting at an
    intermediate node must agree.  Returns ``(cost, vector)`` with ``vector``
    ordered by pipe id, or ``(inf, None)``.
    """
    lower = lower or {}
    origins = sorted({p.group for p in network.pipes.values()}, key=natural_key)
    segs = {o: [a for a, p in network.pipes.items() if p.group == o] for o in origins}
    cats = {o: network.pipes[segs[o][0]].catalog for o in origins}
    combos = list(itertools.product(*[range(len(cats[o])) for o in origins]))
    combos = [c for c in combos if _linked_ok(network, origins, cats, c)]
    if not combos:
        return math.inf, None
    choice = np.array(combos)  # (m, n_origins)
    nodes = sorted(network.nodes)
    ix = {v: i for i, v in enumerate(nodes)}
    lb = np.array([max(network.nodes[v].p_min, lower.get(v, -math.inf)) for v in nodes])
    ub = np.array([network.nodes[v].p_max for v in nodes])
    for pump in network.pumps.values():
        for v in (pump.tail, pump.head):
            lb[ix[v]] = max(lb[ix[v]], pump.p_min)
            ub[ix[v]] = min(ub[ix[v]], pump.p_max)
    edges = []
    for k, o in enumerate(origins):
        for a in segs[o]:
            p = network.pipes[a]
            drops = np.asarray(hydraulic.drops[a])[choice[:, k]] - hydraulic.elevation[a]
            # p_tail - p_head = drop  ->  p_tail - p_head <= drop and p_head - p_tail <= -drop
            edges.append((ix[p.head], ix[p.tail], drops))
            edges.append((ix[p.tail], ix[p.head], -drops))
    m = choice.shape[0]
    for pump in network.pumps.values():
        edges.append((ix[pump.head], ix[pump.tail], np.zeros(m)))  # p_tail - p_head <= 0
    feas = difference_feasible(len(nodes), edges, lb, ub)
    if not feas.any():
        return math.inf, None
    costs = np.array([math.fsum(network.pipes[segs[o][0]].cost_of(cats[o][c[k]]) for k, o in enumerate(origins))
                      for c in combos])
    best = costs[feas].min()
    tied = [tuple(cats[o][c[k]] for k, o in enumerate(origins))
            for c, f, cost in zip(combos, feas, costs) if f and cost <= best + 1e-9]
    return float(best), min(tied)


def _linked_ok(network: Network, origins, cats, combo) -> bool:
    pos = {o: k for k, o in enumerate(origins)}
    for v in network.intermediate_nodes():
        a = network.pipes[network.incoming[v][0]].group
        b = network.pipes[network.outgoing[v][0]].group
        if a != b and cats[a][combo[pos[a]]] != cats[b][combo[pos[b]]]:
            return False
    return True


def random_sizing_case(rng: np.random.Generator, max_groups: int = 8, catalog=(0.2, 0.3, 0.4)):
    """Random sizing instance: tree, drop constants and dynamic lower bounds.

    Costs are whole numbers so optimal objectives compare exactly, and unit
    costs repeat often enough to produce equal-cost ties.
    """
    from co2sizing.network import segment

    n_nodes = int(rng.integers(2, max_groups + 2))
    base = random_tree(rng, n_nodes, pump_prob=0.3, catalog=catalog)
    nodes = {}
    for v, n in base.nodes.items():
        if n.kind is NodeKind.EXIT:
            nodes[v] = Node(v, n.kind, supply=n.supply, p_min=float(rng.uniform(60.0, 85.0)), p_max=100.0)
        else:
            nodes[v] = Node(v, n.kind, supply=n.supply, temperature=n.temperature, p_max=100.0,
                            elevation=float(rng.uniform(-20.0, 20.0)))
    pipes = {}
    for a, p in base.pipes.items():
        length = float(round(p.length))
        unit = np.sort(rng.integers(1, 4, len(catalog)))
        pipes[a] = Pipe(a, p.tail, p.head, length, tuple(catalog), tuple(float(u * length) for u in unit))
    pumps = {a: Pump(a, u.tail, u.head, 50.0, 100.0) for a, u in base.pumps.items()}
    net = Network(nodes, pipes, pumps)
    if rng.random() < 0.5:
        net = segment(net, 1000.0)
    scale = {a: float(rng.uniform(0.5, 12.0)) for a in base.pipes}
    drops, elev = {}, {}
    for a, p in net.pipes.items():
        share = p.length / base.pipes[p.group].length
        drops[a] = np.array([scale[p.group] * share * (0.2 / d) ** 5 for d in p.catalog])
        elev[a] = (net.nodes[p.tail].elevation - net.nodes[p.head].elevation) * 0.08
    flows = {a.id: 1.0 for a in net.arcs()}
    lower = {v: float(rng.uniform(40.0, 75.0)) for v in net.nodes if rng.random() < 0.3}
    return net, HydraulicState(flows=flows, drops=drops, elevation=elev), lower
