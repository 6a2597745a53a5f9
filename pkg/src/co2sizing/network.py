"""Tree-shaped network model: nodes, pipes, pumps, validation and segmentation.

A network is a directed in-tree: every arc points towards the single exit,
entries are the leaves.  Pipe segments produced by :func:`segment` remember
the original pipe they were cut from (``Pipe.origin``) so that all segments of
one pipe can share a single diameter decision.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

BALANCE_TOL = 1e-9


class NodeKind(str, Enum):
    ENTRY = "entry"
    INNER = "inner"
    EXIT = "exit"


class NetworkFormatError(ValueError):
    """Raised when a network file does not match the documented schema."""


def natural_key(s: str):
    """Sort key treating digit runs numerically (``p2`` < ``p10``)."""
    return [(0, int(t), "") if t.isdigit() else (1, 0, t) for t in re.split(r"(\d+)", s) if t]


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind = NodeKind.INNER
    elevation: float = 0.0
    supply: float = 0.0
    p_min: float = 0.0
    p_max: float = 200.0
    temperature: float | None = None
    x: float | None = None
    y: float | None = None


@dataclass(frozen=True)
class Pipe:
    id: str
    tail: str
    head: str
    length: float
    diameters: tuple[float, ...]
    costs: tuple[float, ...]
    roughness: float = 4.5e-5
    wall_conductivity: float = 30.0
    burial_depth: float = 1.0
    wall_thickness: float = 0.02
    fixed_diameter: float | None = None
    # set on segments only
    origin: str | None = None
    origin_length: float | None = None
    offset: float = 0.0

    @property
    def catalog(self) -> tuple[float, ...]:
        """Choosable diameters (the fixed one alone for pinned pipes)."""
        if self.fixed_diameter is not None:
            return (self.fixed_diameter,)
        return self.diameters

    @property
    def catalog_costs(self) -> tuple[float, ...]:
        if self.fixed_diameter is not None:
            return (self.cost_of(self.fixed_diameter),)
        return self.costs

    @property
    def group(self) -> str:
        return self.origin or self.id

    @property
    def full_length(self) -> float:
        return self.origin_length if self.origin_length is not None else self.length

    def cost_of(self, d: float) -> float:
        for dd, c in zip(self.diameters, self.costs):
            if dd == d:
                return c
        if self.fixed_diameter == d:
            return 0.0
        raise KeyError(f"diameter {d} not in catalog of pipe {self.id}")

    def outer_diameter(self, d: float) -> float:
        return d + 2.0 * self.wall_thickness


@dataclass(frozen=True)
class Pump:
    id: str
    tail: str
    head: str
    p_min: float = 0.0
    p_max: float = 200.0


@dataclass(frozen=True)
class StructuralViolation:
    subject: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.rule} ({self.message})"


@dataclass
class Network:
    nodes: dict[str, Node]
    pipes: dict[str, Pipe]
    pumps: dict[str, Pump] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.incoming: dict[str, list[str]] = {v: [] for v in self.nodes}
        self.outgoing: dict[str, list[str]] = {v: [] for v in self.nodes}
        for arc in self.arcs():
            if arc.tail in self.outgoing:
                self.outgoing[arc.tail].append(arc.id)
            if arc.head in self.incoming:
                self.incoming[arc.head].append(arc.id)
        for lst in (*self.incoming.values(), *self.outgoing.values()):
            lst.sort(key=natural_key)
        self.node_index = {v: i for i, v in enumerate(self.nodes)}

    def arcs(self) -> Iterable[Pipe | Pump]:
        yield from self.pipes.values()
        yield from self.pumps.values()

    def arc(self, aid: str) -> Pipe | Pump:
        return self.pipes[aid] if aid in self.pipes else self.pumps[aid]

    @property
    def exit(self) -> str:
        exits = [v for v, n in self.nodes.items() if n.kind is NodeKind.EXIT]
        if len(exits) != 1:
            raise ValueError(f"network has {len(exits)} exits, expected 1")
        return exits[0]

    @property
    def entries(self) -> list[str]:
        return sorted((v for v, n in self.nodes.items() if n.kind is NodeKind.ENTRY), key=natural_key)

    def intermediate_nodes(self) -> set[str]:
        """Degree-2 nodes whose incident pipes both have >1 choosable diameter."""
        out = set()
        for v in self.nodes:
            inc, outg = self.incoming[v], self.outgoing[v]
            if len(inc) != 1 or len(outg) != 1:
                continue
            a, b = inc[0], outg[0]
            if a in self.pipes and b in self.pipes:
                if len(self.pipes[a].catalog) > 1 and len(self.pipes[b].catalog) > 1:
                    out.add(v)
        return out

    def path_to_exit(self, v: str) -> list[str]:
        """Arc ids along the unique directed path from ``v`` to the exit."""
        path, seen = [], set()
        while self.outgoing[v]:
            aid = self.outgoing[v][0]
            if aid in seen:
                raise ValueError("cycle on path to exit")
            seen.add(aid)
            path.append(aid)
            v = self.arc(aid).head
        return path

    def original_pipes(self) -> list[str]:
        """Original (pre-segmentation) pipe ids in natural order."""
        return sorted({p.group for p in self.pipes.values()}, key=natural_key)


def validate(network: Network) -> list[StructuralViolation]:
    """Check the structural assumptions; an empty list means the network is usable."""
    out: list[StructuralViolation] = []
    add = lambda s, r, m: out.append(StructuralViolation(s, r, m))  # noqa: E731
    nodes = network.nodes

    for arc in network.arcs():
        for end in (arc.tail, arc.head):
            if end not in nodes:
                add(arc.id, "unknown node", f"endpoint {end!r} does not exist")
        if arc.tail == arc.head:
            add(arc.id, "self loop", "tail equals head")
    if out:
        return out

    exits = [v for v, n in nodes.items() if n.kind is NodeKind.EXIT]
    if len(exits) != 1:
        add("network", "exactly one exit", f"found {len(exits)}")

    total = 0.0
    for v, n in nodes.items():
        inc, outg = network.incoming[v], network.outgoing[v]
        if n.p_min > n.p_max:
            add(v, "pressure bounds", f"p_min {n.p_min} > p_max {n.p_max}")
        if n.kind is NodeKind.ENTRY:
            if n.supply < 0:
                add(v, "entry supply", f"b = {n.supply} < 0")
            if inc:
                add(v, "entry has incoming arcs", ", ".join(inc))
            if len(outg) != 1:
                add(v, "entry out-degree", f"{len(outg)} outgoing arcs")
            if n.temperature is None:
                add(v, "entry temperature", "missing inlet temperature")
        elif n.kind is NodeKind.EXIT:
            if n.supply > 0:
                add(v, "exit supply", f"b = {n.supply} > 0")
            if outg:
                add(v, "exit has outgoing arcs", ", ".join(outg))
            if not inc:
                add(v, "exit in-degree", "no incoming arcs")
        else:
            if n.supply != 0:
                add(v, "inner supply", f"b = {n.supply} != 0")
            if len(outg) != 1:
                add(v, "inner out-degree", f"{len(outg)} outgoing arcs")
        total += n.supply
    if abs(total) > BALANCE_TOL:
        add("network", "unbalanced network", f"sum of boundary values = {total:g}")

    n_arcs = len(network.pipes) + len(network.pumps)
    if n_arcs != len(nodes) - 1:
        add("network", "not an in-tree", f"|A| = {n_arcs} but |V| - 1 = {len(nodes) - 1}")
    elif len(exits) == 1:
        # with |A| = |V| - 1, reaching every node backwards from the exit proves an in-tree
        seen, stack = {exits[0]}, [exits[0]]
        while stack:
            v = stack.pop()
            for aid in network.incoming[v]:
                t = network.arc(aid).tail
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        bad = sorted(set(nodes) - seen, key=natural_key)
        if bad:
            add(bad[0], "not an in-tree", f"{len(bad)} node(s) cannot reach the exit")

    for p in network.pipes.values():
        if not p.length > 0:
            add(p.id, "pipe length", f"L = {p.length} must be > 0")
        if not p.roughness > 0:
            add(p.id, "pipe roughness", f"eps = {p.roughness} must be > 0")
        if len(p.diameters) < 1 and p.fixed_diameter is None:
            add(p.id, "diameter catalog", "empty")
        if any(b <= a for a, b in zip(p.diameters, p.diameters[1:])):
            add(p.id, "diameter catalog", "not strictly increasing")
        if len(p.costs) != len(p.diameters):
            add(p.id, "diameter costs", "costs and diameters differ in length")
        if any(c < 0 for c in p.costs):
            add(p.id, "diameter costs", "negative cost")
        if any(b < a for a, b in zip(p.costs, p.costs[1:])):
            warnings.warn(f"pipe {p.id}: costs are not nondecreasing in diameter", stacklevel=2)
        if p.fixed_diameter is not None and not p.fixed_diameter > 0:
            add(p.id, "fixed diameter", "must be > 0")
    for pu in network.pumps.values():
        if pu.p_min > pu.p_max:
            add(pu.id, "pump range", f"p_min {pu.p_min} > p_max {pu.p_max}")
    return out


def leaf_order(network: Network) -> list[str]:
    """Arc processing order obtained by repeatedly stripping leaves.

    Each round takes every current leaf (a non-exit node with one remaining
    neighbour), emits its outgoing arc and removes it; arcs within a round are
    sorted by natural id order.  Every arc upstream of an arc's tail is emitted
    before the arc itself.
    """
    remaining_in = {v: len(network.incoming[v]) for v in network.nodes}
    exit_ = network.exit
    leaves = sorted((v for v, k in remaining_in.items() if k == 0 and v != exit_), key=natural_key)
    order: list[str] = []
    while leaves:
        arcs = sorted((network.outgoing[v][0] for v in leaves if network.outgoing[v]), key=natural_key)
        if len(arcs) != len(leaves):
            raise ValueError("leaf without outgoing arc; network is not an in-tree")
        order.extend(arcs)
        nxt = []
        for aid in arcs:
            h = network.arc(aid).head
            remaining_in[h] -= 1
            if remaining_in[h] == 0 and h != exit_:
                nxt.append(h)
        leaves = sorted(nxt, key=natural_key)
    if len(order) != len(network.pipes) + len(network.pumps):
        raise ValueError("not all arcs reachable by leaf stripping; network contains a cycle")
    return order


def segment(network: Network, seg_len: float) -> Network:
    """Split every pipe into ``ceil(L / seg_len)`` serial segments.

    Inserted nodes get linearly interpolated elevation and the union of the
    endpoint pressure ranges; segments keep the original id in ``origin``.
    """
    if not seg_len > 0:
        raise ValueError(f"segment length must be positive, got {seg_len}")
    nodes = dict(network.nodes)
    pipes: dict[str, Pipe] = {}
    for p in network.pipes.values():
        k = max(1, math.ceil(p.length / seg_len - 1e-9))
        origin = p.group
        full = p.full_length
        if k == 1:
            pipes[p.id] = replace(p, origin=origin, origin_length=full)
            continue
        tail, head = nodes[p.tail], nodes[p.head]
        width = len(str(k))
        names = [p.tail] + [f"{p.id}.n{i:0{width}d}" for i in range(1, k)] + [p.head]
        for i in range(1, k):
            frac = i * seg_len / p.length
            nodes[names[i]] = Node(
                id=names[i],
                kind=NodeKind.INNER,
                elevation=tail.elevation + frac * (head.elevation - tail.elevation),
                p_min=min(tail.p_min, head.p_min),
                p_max=max(tail.p_max, head.p_max),
                x=None if tail.x is None or head.x is None else tail.x + frac * (head.x - tail.x),
                y=None if tail.y is None or head.y is None else tail.y + frac * (head.y - tail.y),
            )
        for i in range(k):
            length = seg_len if i < k - 1 else p.length - (k - 1) * seg_len
            sid = f"{p.id}.s{i + 1:0{width}d}"
            pipes[sid] = replace(
                p, id=sid, tail=names[i], head=names[i + 1], length=length,
                origin=origin, origin_length=full, offset=p.offset + i * seg_len,
            )
    meta = dict(network.metadata)
    meta["segment_length"] = seg_len
    return Network(nodes=nodes, pipes=pipes, pumps=dict(network.pumps), metadata=meta)


# --- file format -----------------------------------------------------------

_NODE_FIELDS = {"id", "kind", "elevation", "supply", "p_min", "p_max", "temperature", "x", "y"}
_PIPE_FIELDS = {
    "id", "tail", "head", "length", "diameters", "costs", "roughness", "wall_conductivity",
    "burial_depth", "wall_thickness", "fixed_diameter",
}
_PUMP_FIELDS = {"id", "tail", "head", "p_min", "p_max"}
_TOP_FIELDS = {"nodes", "pipes", "pumps", "metadata"}


def _check_fields(obj: dict, allowed: set[str], where: str, required: set[str]) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise NetworkFormatError(f"{where}: unknown fields {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise NetworkFormatError(f"{where}: missing fields {', '.join(missing)}")


def network_from_dict(doc: dict) -> Network:
    _check_fields(doc, _TOP_FIELDS, "network", {"nodes", "pipes"})
    nodes = {}
    for i, nd in enumerate(doc["nodes"]):
        _check_fields(nd, _NODE_FIELDS, f"nodes[{i}]", {"id", "kind"})
        nd = dict(nd)
        nd["kind"] = NodeKind(nd["kind"])
        if nd["id"] in nodes:
            raise NetworkFormatError(f"duplicate node id {nd['id']!r}")
        nodes[nd["id"]] = Node(**nd)
    pipes = {}
    for i, pd in enumerate(doc["pipes"]):
        _check_fields(pd, _PIPE_FIELDS, f"pipes[{i}]", {"id", "tail", "head", "length", "diameters", "costs"})
        pd = dict(pd)
        pd["diameters"] = tuple(float(d) for d in pd["diameters"])
        pd["costs"] = tuple(float(c) for c in pd["costs"])
        if pd["id"] in pipes:
            raise NetworkFormatError(f"duplicate pipe id {pd['id']!r}")
        pipes[pd["id"]] = Pipe(**pd)
    pumps = {}
    for i, pu in enumerate(doc.get("pumps", [])):
        _check_fields(pu, _PUMP_FIELDS, f"pumps[{i}]", {"id", "tail", "head"})
        if pu["id"] in pumps or pu["id"] in pipes:
            raise NetworkFormatError(f"duplicate arc id {pu['id']!r}")
        pumps[pu["id"]] = Pump(**pu)
    return Network(nodes=nodes, pipes=pipes, pumps=pumps, metadata=dict(doc.get("metadata", {})))


def network_to_dict(network: Network) -> dict:
    def node(n: Node):
        d = {"id": n.id, "kind": n.kind.value, "elevation": n.elevation, "supply": n.supply,
             "p_min": n.p_min, "p_max": n.p_max}
        for k in ("temperature", "x", "y"):
            if getattr(n, k) is not None:
                d[k] = getattr(n, k)
        return d

    def pipe(p: Pipe):
        d = {"id": p.id, "tail": p.tail, "head": p.head, "length": p.length,
             "diameters": list(p.diameters), "costs": list(p.costs), "roughness": p.roughness,
             "wall_conductivity": p.wall_conductivity, "burial_depth": p.burial_depth,
             "wall_thickness": p.wall_thickness}
        if p.fixed_diameter is not None:
            d["fixed_diameter"] = p.fixed_diameter
        return d

    doc = {
        "nodes": [node(n) for n in network.nodes.values()],
        "pipes": [pipe(p) for p in network.pipes.values()],
        "pumps": [{"id": u.id, "tail": u.tail, "head": u.head, "p_min": u.p_min, "p_max": u.p_max}
                  for u in network.pumps.values()],
    }
    if network.metadata:
        doc["metadata"] = network.metadata
    return doc


def load_network(path: str | Path) -> Network:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(f"{path}: invalid JSON ({exc})") from exc
    return network_from_dict(doc)


def save_network(network: Network, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(network), fh, indent=1)
        fh.write("\n")
