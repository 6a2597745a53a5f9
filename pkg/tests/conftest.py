from __future__ import annotations

import numpy as np
import pytest

from co2sizing.network import Network, Node, NodeKind, Pipe, Pump
from co2sizing.properties import QUANTITIES, PropertyTable, load_tables
from co2sizing.thermal import SoilEnvironment

# criterion number -> verdict line followed by informational notes
ACCEPTANCE: dict[int, list[str]] = {}


@pytest.fixture(scope="session")
def tables() -> PropertyTable:
    return load_tables()


@pytest.fixture
def soil() -> SoilEnvironment:
    return SoilEnvironment(283.15, 1.0)


def affine_table(jt: float = 0.0) -> PropertyTable:
    """Small table with affine quantities; bilinear lookup reproduces it exactly."""
    p = np.linspace(40.0, 160.0, 7)
    t = np.linspace(270.0, 370.0, 6)
    P, T = np.meshgrid(p, t, indexing="ij")
    values = {
        "density": 900.0 + 0.5 * P - 1.5 * (T - 270.0),
        "heat_capacity": 2500.0 + 0.0 * P,
        "viscosity": 8e-5 + 0.0 * P,
        "thermal_conductivity": 0.1 + 0.0 * P,
        "joule_thomson": jt + 0.0 * P,
    }
    assert set(values) == set(QUANTITIES)
    return PropertyTable(p, t, values)


def star_network(supplies=(16.0, 8.0, 8.0, 8.0), exit_supply=None) -> Network:
    """Entries feeding one junction that drains through a pump and a pipe into the exit."""
    cat = (0.2, 0.3, 0.4)
    nodes = {}
    pipes = {}
    for k, b in enumerate(supplies):
        e = f"e{k + 1}"
        nodes[e] = Node(e, NodeKind.ENTRY, supply=b, p_max=110.0, temperature=320.0)
        pipes[f"p{k + 1}"] = Pipe(f"p{k + 1}", e, "j", 10_000.0, cat, (1.0, 2.0, 3.0))
    total = sum(supplies)
    nodes["j"] = Node("j", p_max=110.0)
    nodes["jh"] = Node("jh", p_max=110.0)
    nodes["w"] = Node("w", NodeKind.EXIT, supply=-total if exit_supply is None else exit_supply,
                      p_min=80.0, p_max=110.0)
    pipes["p9"] = Pipe("p9", "jh", "w", 20_000.0, cat, (2.0, 4.0, 6.0))
    return Network(nodes, pipes, {"u1": Pump("u1", "j", "jh", 50.0, 110.0)})


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            for line in ACCEPTANCE[n]:
                terminalreporter.write_line(line)
