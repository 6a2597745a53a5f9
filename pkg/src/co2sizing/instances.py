"""Artificial tree networks for robustness studies.

Cities are sampled from a point set, connected by an approximate Steiner
tree (minimum spanning tree of the metric closure), rooted at one leaf as the
exit, and every other leaf becomes an entry with a random inflow pattern.
Every junction gets a pump spliced in front of its outgoing pipe.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import networkx as nx
import numpy as np

from .network import Network, Node, NodeKind, Pipe, Pump, natural_key, save_network, validate

CATALOG = (0.03, 0.04, 0.05, 0.08, 0.12, 0.15, 0.2, 0.25, 0.3, 0.35, 0.42, 0.5)
# currency per meter of pipe, one entry per catalog diameter
UNIT_COST = (310.0, 330.0, 360.0, 420.0, 520.0, 600.0, 740.0, 900.0, 1060.0, 1230.0, 1470.0, 1760.0)

DEFAULT_INFLOW = (("low", 5.0, 0.3), ("medium", 15.0, 0.5), ("high", 30.0, 0.2))
DEFAULT_TEMPERATURE = (("low", 293.15, 0.2), ("medium", 323.15, 0.5), ("high", 353.15, 0.3))
HEURISTIC = "metric-closure minimum spanning tree (2-approximate Steiner tree)"

KM_PER_DEG_LAT = 111.2
_KEYWORD = re.compile(r"[A-Z][A-Z0-9_]*")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class PointSet:
    """Named points with a symmetric distance matrix in km.

    Non-finite or negative off-diagonal distances mean "no direct link".
    """

    name: str
    distances: np.ndarray
    coords: np.ndarray | None = None

    def __len__(self) -> int:
        return self.distances.shape[0]

    @cached_property
    def closure(self) -> tuple[np.ndarray, np.ndarray]:
        """All-pairs shortest distances and next-hop matrix (Floyd-Warshall)."""
        n = len(self)
        dist = np.where(np.isfinite(self.distances) & (self.distances >= 0), self.distances, np.inf)
        np.fill_diagonal(dist, 0.0)
        nxt = np.where(np.isfinite(dist), np.arange(n)[None, :], -1)
        for k in range(n):
            via = dist[:, k:k + 1] + dist[k:k + 1, :]
            better = via < dist
            dist = np.where(better, via, dist)
            nxt = np.where(better, nxt[:, k:k + 1], nxt)
        return dist, nxt

    def path(self, i: int, j: int) -> list[int]:
        _, nxt = self.closure
        out = [i]
        while i != j:
            i = int(nxt[i, j])
            out.append(i)
        return out


def metric_closure_tree(points: PointSet, terminals: list[int]) -> nx.Graph:
    """Approximate Steiner tree: MST of the terminals' metric closure, expanded and pruned."""
    dist, _ = points.closure
    if not np.isfinite(dist[np.ix_(terminals, terminals)]).all():
        raise GeneratorError("sampled cities are not connected in the point set")
    closure = nx.Graph()
    for a, i in enumerate(terminals):
        for j in terminals[a + 1:]:
            closure.add_edge(i, j, weight=float(dist[i, j]))
    expanded = nx.Graph()
    for i, j in sorted(nx.minimum_spanning_edges(closure, data=False)):
        hops = points.path(i, j)
        for u, v in zip(hops, hops[1:]):
            expanded.add_edge(u, v, weight=float(points.distances[u, v]))
    tree = nx.minimum_spanning_tree(expanded)
    keep = set(terminals)
    leaves = [v for v in tree if tree.degree(v) == 1 and v not in keep]
    while leaves:
        tree.remove_nodes_from(leaves)
        leaves = [v for v in tree if tree.degree(v) == 1 and v not in keep]
    return tree


def _geo_degrees(x: float) -> float:
    # TSPLIB GEO stores DDD.MM
    deg = math.trunc(x)
    return deg + 5.0 * (x - deg) / 3.0


def _geo_distance(a, b) -> float:
    rrr = 6378.388
    lat1, lon1 = (math.pi * _geo_degrees(v) / 180.0 for v in a)
    lat2, lon2 = (math.pi * _geo_degrees(v) / 180.0 for v in b)
    q1 = math.cos(lon1 - lon2)
    q2 = math.cos(lat1 - lat2)
    q3 = math.cos(lat1 + lat2)
    return float(int(rrr * math.acos(0.5 * ((1.0 + q1) * q2 - (1.0 - q1) * q3)) + 1.0))


def _explicit_matrix(values: list[float], n: int, fmt: str) -> np.ndarray:
    d = np.zeros((n, n))
    it = iter(values)
    try:
        if fmt == "FULL_MATRIX":
            for i in range(n):
                for j in range(n):
                    d[i, j] = next(it)
            return d
        for i in range(n):
            if fmt == "LOWER_DIAG_ROW":
                cols = range(i + 1)
            elif fmt == "LOWER_ROW":
                cols = range(i)
            elif fmt == "UPPER_DIAG_ROW":
                cols = range(i, n)
            elif fmt == "UPPER_ROW":
                cols = range(i + 1, n)
            else:
                raise GeneratorError(f"unsupported EDGE_WEIGHT_FORMAT {fmt}")
            for j in cols:
                d[i, j] = d[j, i] = next(it)
    except StopIteration:
        raise GeneratorError("EDGE_WEIGHT_SECTION is shorter than DIMENSION requires") from None
    return d


def read_tsplib(path: str | Path) -> PointSet:
    """Read a symmetric TSPLIB instance (EXPLICIT, EUC_2D or GEO weights)."""
    text = Path(path).read_text()
    header: dict[str, str] = {}
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line == "EOF":
            continue
        key = line.split(":", 1)[0].strip()
        if key.endswith("_SECTION") and _KEYWORD.fullmatch(key):
            current = key
            sections[current] = []
        elif ":" in line and _KEYWORD.fullmatch(key):
            header[key] = line.split(":", 1)[1].strip()
            current = None
        elif current is not None:
            sections[current].append(line)
        else:
            raise GeneratorError(f"{path}: unexpected line {line!r}")
    try:
        n = int(header["DIMENSION"])
    except (KeyError, ValueError):
        raise GeneratorError(f"{path}: missing or bad DIMENSION") from None
    kind = header.get("EDGE_WEIGHT_TYPE", "")
    coords = None
    if "NODE_COORD_SECTION" in sections:
        coords = np.array([[float(t) for t in row.split()[1:3]] for row in sections["NODE_COORD_SECTION"]])
    elif "DISPLAY_DATA_SECTION" in sections:
        coords = np.array([[float(t) for t in row.split()[1:3]] for row in sections["DISPLAY_DATA_SECTION"]])
    if coords is not None and coords.shape != (n, 2):
        raise GeneratorError(f"{path}: coordinate section does not have {n} rows")
    if kind == "EXPLICIT":
        values = [float(t) for row in sections.get("EDGE_WEIGHT_SECTION", []) for t in row.split()]
        dist = _explicit_matrix(values, n, header.get("EDGE_WEIGHT_FORMAT", "FULL_MATRIX"))
    elif kind == "EUC_2D":
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.floor(np.sqrt((diff ** 2).sum(-1)) + 0.5)
    elif kind == "GEO":
        dist = np.array([[0.0 if i == j else _geo_distance(coords[i], coords[j]) for j in range(n)]
                         for i in range(n)])
    else:
        raise GeneratorError(f"{path}: unsupported EDGE_WEIGHT_TYPE {kind!r}")
    if not np.allclose(dist, dist.T):
        raise GeneratorError(f"{path}: distance matrix is not symmetric")
    return PointSet(header.get("NAME", Path(path).stem), dist, coords)


def default_point_set() -> PointSet:
    with resources.as_file(resources.files("co2sizing") / "data" / "de120.tsp") as p:
        return read_tsplib(p)


def _check_table(table, what: str) -> None:
    if not table:
        raise GeneratorError(f"{what} table is empty")
    probs = [p for _, _, p in table]
    if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-9:
        raise GeneratorError(f"{what} probabilities must be nonnegative and sum to 1")


def pattern_sample(rng: np.random.Generator, inflow=DEFAULT_INFLOW,
                   temperature=DEFAULT_TEMPERATURE) -> tuple[float, float]:
    """Draw one (inflow kg/s, temperature K) pair from independent categorical tables.

    Tables are sequences of ``(label, value, probability)``.
    """
    i = rng.choice(len(inflow), p=[p for _, _, p in inflow])
    j = rng.choice(len(temperature), p=[p for _, _, p in temperature])
    return float(inflow[i][1]), float(temperature[j][1])


@dataclass
class GeneratorSpec:
    cities: int = 15
    seed: int = 0
    points: str = "de120"
    inflow: tuple = DEFAULT_INFLOW
    temperature: tuple = DEFAULT_TEMPERATURE
    entry_p_max: float = 110.0
    inner_p_max: float = 110.0
    exit_p_min: float = 80.0
    pump_p_min: float = 50.0
    pump_p_max: float = 110.0
    roughness: float = 4.5e-5
    catalog: tuple = CATALOG
    unit_cost: tuple = UNIT_COST
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inflow = tuple(tuple(r) for r in self.inflow)
        self.temperature = tuple(tuple(r) for r in self.temperature)
        self.catalog = tuple(self.catalog)
        self.unit_cost = tuple(self.unit_cost)
        _check_table(self.inflow, "inflow")
        _check_table(self.temperature, "temperature")
        if len(self.catalog) != len(self.unit_cost):
            raise GeneratorError("catalog and unit_cost differ in length")
        if self.cities < 2:
            raise GeneratorError("need at least two cities")

    def point_set(self) -> PointSet:
        return default_point_set() if self.points == "de120" else read_tsplib(self.points)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("extra")
        d["inflow"] = [list(r) for r in self.inflow]
        d["temperature"] = [list(r) for r in self.temperature]
        d["catalog"] = list(self.catalog)
        d["unit_cost"] = list(self.unit_cost)
        return d


def _splice_pumps(nodes: dict[str, Node], pipes: dict[str, Pipe], spec: GeneratorSpec) -> dict[str, Pump]:
    """Put a pump between every junction and its outgoing pipe."""
    incoming: dict[str, int] = {v: 0 for v in nodes}
    outgoing: dict[str, str] = {}
    for p in pipes.values():
        incoming[p.head] += 1
        outgoing[p.tail] = p.id
    pumps = {}
    for v in sorted(nodes, key=natural_key):
        if incoming[v] > 1 and v in outgoing:
            aid = outgoing[v]
            vp = f"{v}p"
            nodes[vp] = replace(nodes[v], id=vp)
            pipes[aid] = replace(pipes[aid], tail=vp)
            pumps[f"pump_{v}"] = Pump(f"pump_{v}", v, vp, spec.pump_p_min, spec.pump_p_max)
    return pumps


def generate(spec: GeneratorSpec, points: PointSet | None = None) -> Network:
    points = points if points is not None else spec.point_set()
    n = len(points)
    if spec.cities > n:
        raise GeneratorError(f"cannot sample {spec.cities} cities from {n} points")
    rng = np.random.default_rng(spec.seed)
    terminals = sorted(rng.choice(n, size=spec.cities, replace=False).tolist())
    tree = metric_closure_tree(points, terminals)
    if tree.number_of_edges() == 0:
        raise GeneratorError("degenerate tree: sampled cities coincide")

    # the exit is a sampled city inside the tree so that every leaf is an entry
    inner = [t for t in terminals if tree.degree(t) > 1]
    root = int(rng.choice(inner or sorted(v for v in tree.nodes if tree.degree(v) == 1)))
    name = {v: f"c{v + 1}" for v in tree.nodes}

    def xy(v):
        if points.coords is None:
            return None, None
        lon, lat = points.coords[v]
        # equirectangular projection to meters, adequate for plotting
        return (float(lon * KM_PER_DEG_LAT * math.cos(math.radians(51.0)) * 1000.0),
                float(lat * KM_PER_DEG_LAT * 1000.0))

    nodes: dict[str, Node] = {}
    pipes: dict[str, Pipe] = {}
    total = 0.0
    edges = sorted(nx.bfs_edges(tree, root), key=lambda e: natural_key(name[e[1]]))
    for k, (head, tail) in enumerate(edges, start=1):
        length = float(tree[head][tail]["weight"]) * 1000.0
        pid = f"p{k}"
        pipes[pid] = Pipe(pid, name[tail], name[head], length, spec.catalog,
                          tuple(round(length * c, 2) for c in spec.unit_cost), roughness=spec.roughness)
    for v in sorted(tree.nodes, key=lambda v: natural_key(name[v])):
        x, y = xy(v)
        if v == root:
            continue
        if tree.degree(v) == 1:
            q, t = pattern_sample(rng, spec.inflow, spec.temperature)
            total += q
            nodes[name[v]] = Node(name[v], NodeKind.ENTRY, supply=q, p_max=spec.entry_p_max, temperature=t,
                                  x=x, y=y)
        else:
            nodes[name[v]] = Node(name[v], NodeKind.INNER, p_max=spec.inner_p_max, x=x, y=y)
    x, y = xy(root)
    nodes[name[root]] = Node(name[root], NodeKind.EXIT, supply=-total, p_min=spec.exit_p_min,
                             p_max=spec.inner_p_max, x=x, y=y)
    pumps = _splice_pumps(nodes, pipes, spec)
    meta = {"generator": HEURISTIC, "exact_steiner": False, "seed": spec.seed, "cities": spec.cities,
            "point_set": points.name, "terminals": sorted((name[t] for t in terminals), key=natural_key),
            "exit": name[root]}
    net = Network(nodes, pipes, pumps, meta)
    bad = validate(net)
    if bad:
        raise GeneratorError(f"generated network is invalid: {bad[0]}")
    return net


def expand_batch(doc: dict) -> list[GeneratorSpec]:
    """Instance specs from a batch document.

    ``cities`` may be a number or a list; ``instances`` seeds per city count
    start at ``seed`` (default 0) and are offset by the city count times 1000.
    """
    doc = dict(doc)
    cities = doc.pop("cities", 15)
    cities = [cities] if isinstance(cities, int) else list(cities)
    count = int(doc.pop("instances", 1))
    base = int(doc.pop("seed", 0))
    known = set(GeneratorSpec.__dataclass_fields__) - {"cities", "seed", "extra"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise GeneratorError(f"unknown generator fields: {', '.join(unknown)}")
    return [GeneratorSpec(cities=c, seed=base + 1000 * c + k, **doc) for c in cities for k in range(count)]


def instance_name(spec: GeneratorSpec) -> str:
    return f"n{spec.cities:02d}_s{spec.seed:06d}"


def write_instance(spec: GeneratorSpec, net: Network, out_dir: str | Path) -> Path:
    """Write the network file plus a metadata sidecar; returns the network path."""
    out_dir = Path(out_dir)
    path = out_dir / f"{instance_name(spec)}.json"
    save_network(net, path)
    sidecar = {"spec": spec.to_dict(), "heuristic": HEURISTIC, "exact_steiner": False,
               "entries": len(net.entries), "pumps": len(net.pumps),
               "total_length_km": round(sum(p.length for p in net.pipes.values()) / 1000.0, 3)}
    (out_dir / f"{instance_name(spec)}.meta.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return path
