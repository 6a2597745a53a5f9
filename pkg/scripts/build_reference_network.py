"""Write the shipped real-world-style network (four entries, three pumps, one exit).

Topology, entry data, exit bound and the diameter catalog follow the
reference case; individual pipe lengths, elevations and costs are not
known and are synthetic here.  Pipe lengths respect the reference total
(831 km) and the per-diameter totals of the reference optimum.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

CATALOG_MM = (30, 40, 50, 80, 120, 150, 200, 250, 300, 350, 420, 500)
# currency per meter, increasing with diameter
UNIT_COST = (310, 330, 360, 420, 520, 600, 740, 900, 1060, 1230, 1470, 1760)

# id, tail, head, length km, fixed diameter mm
PIPES = [
    ("1", "D", "n1", 70.0, 300),
    ("2", "n1", "n2", 25.0, None),
    ("3", "n2", "n3", 20.0, None),
    ("4", "n3", "J1", 25.0, None),
    ("9", "P", "p1", 30.0, None),
    ("10", "p1", "p2", 30.0, None),
    ("11", "p2", "p3", 30.0, None),
    ("12", "p3", "J1", 30.0, None),
    ("5", "J1h", "c1", 45.0, None),
    ("6", "c1", "c2", 40.0, None),
    ("7", "c2", "c3", 40.0, None),
    ("8", "c3", "J2", 45.0, None),
    ("16", "B", "b0", 10.0, None),
    ("21", "b0", "b1", 26.0, None),
    ("22", "b1", "b2", 26.0, None),
    ("23", "b2", "b3", 26.0, None),
    ("24", "b3", "J2", 26.0, None),
    ("13", "J2h", "e1", 34.0, None),
    ("14", "e1", "e2", 33.0, None),
    ("15", "e2", "J3", 33.0, None),
    ("18", "S", "s1", 95.0, None),
    ("17", "s1", "s2", 5.0, 300),
    ("19", "s2", "s3", 35.0, None),
    ("20", "s3", "J3", 30.0, None),
    ("25", "J3h", "f1", 11.0, None),
    ("26", "f1", "W", 11.0, None),
]

PUMPS = [("pump1", "J1", "J1h"), ("pump2", "J2", "J2h"), ("pump3", "J3", "J3h")]

ENTRIES = {  # supply kg/s, temperature K, max pressure bar
    "D": (16.0, 323.15, 95.0),
    "P": (8.0, 333.15, 105.0),
    "S": (8.0, 293.15, 88.0),
    "B": (8.0, 303.15, 88.0),
}

# elevation m, plot coordinates km
GEOMETRY = {
    "D": (120, 300, 40), "n1": (100, 240, 60), "n2": (80, 220, 70), "n3": (60, 205, 80), "J1": (40, 190, 95),
    "P": (200, 300, 170), "p1": (170, 275, 150), "p2": (130, 250, 130), "p3": (90, 220, 110),
    "J1h": (40, 185, 100), "c1": (35, 150, 115), "c2": (30, 120, 125), "c3": (25, 95, 135), "J2": (20, 70, 150),
    "B": (180, 160, 250), "b0": (170, 150, 240), "b1": (140, 130, 220), "b2": (110, 110, 200), "b3": (70, 90, 175),
    "J2h": (20, 65, 155), "e1": (15, 50, 185), "e2": (10, 40, 215), "J3": (5, 30, 240),
    "S": (230, 150, 330), "s1": (220, 90, 320), "s2": (215, 85, 318), "s3": (150, 60, 290),
    "J3h": (5, 25, 245), "f1": (3, 15, 255), "W": (0, 5, 265),
}

INNER_P_MAX = 100.0
EXIT_P_MIN = 80.0
PUMP_RANGE = (55.0, 100.0)


def build() -> dict:
    nodes = []
    for v, (elev, x, y) in GEOMETRY.items():
        node = {"id": v, "elevation": float(elev), "x": x * 1000.0, "y": y * 1000.0}
        if v in ENTRIES:
            b, t, pmax = ENTRIES[v]
            node.update(kind="entry", supply=b, temperature=t, p_max=pmax)
        elif v == "W":
            node.update(kind="exit", supply=-sum(e[0] for e in ENTRIES.values()), p_min=EXIT_P_MIN,
                        p_max=INNER_P_MAX)
        else:
            node.update(kind="inner", p_max=INNER_P_MAX)
        nodes.append(node)
    pipes = []
    for pid, tail, head, km, fixed in PIPES:
        length = km * 1000.0
        pipe = {"id": pid, "tail": tail, "head": head, "length": length,
                "diameters": [mm / 1000.0 for mm in CATALOG_MM],
                "costs": [round(length * c, 2) for c in UNIT_COST]}
        if fixed is not None:
            pipe["fixed_diameter"] = fixed / 1000.0
        pipes.append(pipe)
    pumps = [{"id": a, "tail": t, "head": h, "p_min": PUMP_RANGE[0], "p_max": PUMP_RANGE[1]} for a, t, h in PUMPS]
    return {"metadata": {"name": "real-world-style network", "synthetic_lengths": True},
            "nodes": nodes, "pipes": pipes, "pumps": pumps}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1]
                    / "src" / "co2sizing" / "data" / "reference_network.json")
    args = ap.parse_args(argv)
    doc = build()
    total = sum(p["length"] for p in doc["pipes"])
    assert abs(total - 831_000.0) < 1e-6, total
    args.out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {args.out} ({len(doc['pipes'])} pipes, {total / 1000:.0f} km)")


if __name__ == "__main__":
    main()
