"""CSV tables and SVG figures for solved networks and run records.

Floats are written with ``repr`` so that re-reading a CSV gives bit-equal
values.  SVG output is made reproducible by fixing matplotlib's hash salt
and dropping the creation date.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

from .network import Network, natural_key  # noqa: E402
from .orchestrator import RunRecord, RunResult, criterion_holds  # noqa: E402
from .properties import PropertyTable  # noqa: E402

KELVIN_OFFSET = 273.15
PROFILE_COLUMNS = ("x", "p", "T", "H", "q", "rho", "d")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(path: str | Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


TEXT_COLUMNS = frozenset({"pipe", "node", "instance"})


def read_csv(path: str | Path) -> tuple[list[str], list[list]]:
    """Read a CSV written by :func:`write_csv`.

    Identifier columns stay text; other cells come back as int or float when
    they parse, so writing the rows again reproduces the file byte for byte.
    """
    def cell(s: str):
        for kind in (int, float):
            try:
                return kind(s)
            except ValueError:
                pass
        return s

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    text = [h in TEXT_COLUMNS for h in rows[0]]
    return rows[0], [[c if t else cell(c) for c, t in zip(r, text)] for r in rows[1:]]


# -- tables ----------------------------------------------------------------

def solution_rows(result: RunResult) -> list[tuple]:
    """(pipe, diameter mm, length m, cost) per original pipe."""
    net = result.network
    length: dict[str, float] = {}
    first = {}
    for p in net.pipes.values():
        length[p.group] = length.get(p.group, 0.0) + p.length
        first.setdefault(p.group, p)
    rows = []
    for o in sorted(result.solution.pipe_diameters, key=natural_key):
        d = result.solution.pipe_diameters[o]
        rows.append((o, d * 1000.0, length[o], first[o].cost_of(d)))
    return rows


def node_rows(result: RunResult) -> list[tuple]:
    """(node, pressure bar, temperature K) for every node."""
    p, t = result.solution.pressures, result.thermal.node_t
    return [(v, p[v], t[v]) for v in sorted(result.network.nodes, key=natural_key)]


@dataclass
class PathProfile:
    entry: str
    rows: list[tuple]  # PROFILE_COLUMNS per node along the path


def path_profile(result: RunResult, entry: str, tables: PropertyTable) -> PathProfile:
    """Node states along the path from ``entry`` to the exit.

    ``q`` and ``d`` (mm) describe the arc leaving each node; pumps report
    ``d = 0`` and the exit repeats the values of its incoming arc.
    """
    net = result.network
    sol, temps = result.solution, result.thermal.node_t
    arcs = net.path_to_exit(entry)
    nodes = [entry] + [net.arc(a).head for a in arcs]
    rows = []
    x = 0.0
    for k, v in enumerate(nodes):
        if k:
            prev = arcs[k - 1]
            if prev in net.pipes:
                x += net.pipes[prev].length
        aid = arcs[k] if k < len(arcs) else arcs[-1]
        q = abs(result.flows[aid])
        d = sol.arc_diameters.get(aid, 0.0) * 1000.0
        p, t = sol.pressures[v], temps[v]
        rows.append((x, p, t, net.nodes[v].elevation, q, tables.eval("density", p, t), d))
    return PathProfile(entry, rows)


def safe_name(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", s)


def length_by_diameter(result: RunResult) -> dict[float, float]:
    """Total pipe length (km) per chosen diameter (mm)."""
    out: dict[float, float] = {}
    for _, d_mm, length, _ in solution_rows(result):
        out[d_mm] = out.get(d_mm, 0.0) + length / 1000.0
    return dict(sorted(out.items()))


# -- figures ---------------------------------------------------------------

def _setup() -> None:
    matplotlib.rcParams["svg.hashsalt"] = "co2sizing"
    matplotlib.rcParams["svg.fonttype"] = "none"
    matplotlib.rcParams["path.simplify"] = False


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_profile(profile: PathProfile, path: str | Path) -> None:
    """Six stacked panels (pressure, temperature, height, flow, density, diameter) over distance."""
    _setup()
    x = [r[0] / 1000.0 for r in profile.rows]
    panels = [
        ("pressure [bar]", [r[1] for r in profile.rows]),
        ("temperature [°C]", [r[2] - KELVIN_OFFSET for r in profile.rows]),
        ("height [m]", [r[3] for r in profile.rows]),
        ("flow [kg/s]", [r[4] for r in profile.rows]),
        ("density [kg/m³]", [r[5] for r in profile.rows]),
        ("diameter [mm]", [r[6] for r in profile.rows]),
    ]
    fig, axes = plt.subplots(len(panels), 1, figsize=(7, 11), sharex=True)
    for ax, (label, y) in zip(axes, panels):
        style = "steps-post" if label.startswith(("flow", "diameter")) else "default"
        ax.plot(x, y, drawstyle=style, lw=1.2)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[0].set_title(f"path {profile.entry} to exit")
    axes[-1].set_xlabel("distance [km]")
    fig.tight_layout()
    _save(fig, path)


def _layout(net: Network) -> dict[str, tuple[float, float]]:
    if all(n.x is not None and n.y is not None for n in net.nodes.values()):
        return {v: (n.x / 1000.0, n.y / 1000.0) for v, n in net.nodes.items()}
    # fallback: distance to the exit against leaf rank
    pos: dict[str, tuple[float, float]] = {}
    for rank, e in enumerate(net.entries):
        arcs = net.path_to_exit(e)
        dist = sum(net.pipes[a].length for a in arcs if a in net.pipes) / 1000.0
        v = e
        for a in [None] + arcs:
            if a is not None:
                if a in net.pipes:
                    dist -= net.pipes[a].length / 1000.0
                v = net.arc(a).head
            pos.setdefault(v, (-dist, float(rank)))
    return pos


def plot_topology(result: RunResult, path: str | Path, quantity: str = "p") -> None:
    """Network drawn from node coordinates, pipes colored by mean pressure or temperature."""
    _setup()
    net = result.network
    pos = _layout(net)
    values = result.solution.pressures if quantity == "p" else {
        v: t - KELVIN_OFFSET for v, t in result.thermal.node_t.items()}
    pids = sorted(net.pipes, key=natural_key)
    lines = [(pos[net.pipes[a].tail], pos[net.pipes[a].head]) for a in pids]
    color = [0.5 * (values[net.pipes[a].tail] + values[net.pipes[a].head]) for a in pids]
    width = [1.0 + 6.0 * result.solution.arc_diameters[a] for a in pids]
    fig, ax = plt.subplots(figsize=(7, 7))
    lc = LineCollection(lines, array=color, linewidths=width, cmap="viridis")
    ax.add_collection(lc)
    fig.colorbar(lc, ax=ax, label="pressure [bar]" if quantity == "p" else "temperature [°C]")
    for u in sorted(net.pumps, key=natural_key):
        x, y = pos[net.pumps[u].tail]
        ax.plot([x], [y], marker="s", color="black", ms=5)
    for v in net.entries + [net.exit]:
        x, y = pos[v]
        ax.annotate(v, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.autoscale()
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [km]")
    ax.set_ylabel("y [km]")
    fig.tight_layout()
    _save(fig, path)


def plot_run(record: RunRecord, path: str | Path) -> None:
    """Maximal pressure change and cost per outer iteration."""
    _setup()
    its = [s for s in record.iterations if s.max_dp is not None]
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    a1.semilogy([s.iteration for s in its], [max(s.max_dp, 1e-12) for s in its], marker="o")
    a1.axhline(record.eps_p, color="gray", ls="--", lw=1)
    a1.set_ylabel("max |Δp| [bar]")
    a2.plot([s.iteration for s in its], [s.cost for s in its], marker="o")
    a2.set_ylabel("cost")
    a2.set_xlabel("iteration")
    fig.tight_layout()
    _save(fig, path)


def plot_runtime_scatter(pairs: list[tuple[float, float]], path: str | Path) -> None:
    """Runtime without against with the exit strategy, one point per instance."""
    _setup()
    fig, ax = plt.subplots(figsize=(5, 5))
    if pairs:
        xs, ys = zip(*pairs)
        ax.scatter(xs, ys, s=10)
        top = max(max(xs), max(ys))
        ax.plot([0, top], [0, top], color="gray", lw=1, ls="--")
    ax.set_xlabel("runtime without exit strategy [s]")
    ax.set_ylabel("runtime with exit strategy [s]")
    fig.tight_layout()
    _save(fig, path)


def describe_record(record: RunRecord) -> list[str]:
    """Human-readable iteration table plus the re-checked stopping rule."""
    out = [f"{'it':>3} {'mode':<16} {'status':<10} {'hash':<16} {'max|dp|':>10} {'cost':>16}"]
    for s in record.iterations:
        dp = "-" if s.max_dp is None else f"{s.max_dp:.4g}"
        cost = "-" if s.cost is None else f"{s.cost:.6g}"
        out.append(f"{s.iteration:>3} {s.mode:<16} {s.status:<10} {s.diameter_hash or '-':<16} {dp:>10} {cost:>16}")
    term = record.termination.value if record.termination else "unknown"
    out.append(f"termination: {term}" + (f" ({record.detail})" if record.detail else ""))
    if record.termination is not None and record.termination.converged:
        ok = criterion_holds(record)
        out.append("stopping rule re-checked from log: " + ("confirmed" if ok else "NOT confirmed"))
    return out
