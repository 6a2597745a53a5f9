"""Write the shipped 120-city point set as a TSPLIB file.

Coordinates are approximate city-centre latitude/longitude.  Distances are
rounded great-circle kilometres times a road detour factor, stored as an
explicit lower-diagonal matrix; the coordinates go into the display section.
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

DETOUR = 1.1
EARTH_RADIUS_KM = 6371.0

CITIES = [
    ("Aachen", 50.78, 6.08), ("Augsburg", 48.37, 10.90), ("Bamberg", 49.89, 10.89),
    ("Bayreuth", 49.94, 11.58), ("Berlin", 52.52, 13.40), ("Bielefeld", 52.02, 8.53),
    ("Bochum", 51.48, 7.22), ("Bonn", 50.73, 7.10), ("Brandenburg", 52.41, 12.53),
    ("Braunschweig", 52.27, 10.52), ("Bremen", 53.08, 8.80), ("Bremerhaven", 53.55, 8.58),
    ("Chemnitz", 50.83, 12.92), ("Cottbus", 51.76, 14.33), ("Cuxhaven", 53.86, 8.69),
    ("Darmstadt", 49.87, 8.65), ("Dessau", 51.84, 12.24), ("Dortmund", 51.51, 7.47),
    ("Dresden", 51.05, 13.74), ("Duisburg", 51.43, 6.76), ("Duesseldorf", 51.23, 6.78),
    ("Emden", 53.37, 7.21), ("Erfurt", 50.98, 11.03), ("Essen", 51.46, 7.01),
    ("Flensburg", 54.78, 9.44), ("FrankfurtMain", 50.11, 8.68), ("FrankfurtOder", 52.35, 14.55),
    ("Freiburg", 47.99, 7.85), ("Fulda", 50.55, 9.68), ("Gera", 50.88, 12.08),
    ("Giessen", 50.58, 8.68), ("Goerlitz", 51.15, 14.99), ("Goettingen", 51.54, 9.93),
    ("Greifswald", 54.10, 13.38), ("Hagen", 51.36, 7.47), ("Halle", 51.48, 11.97),
    ("Hamburg", 53.55, 9.99), ("Hameln", 52.10, 9.36), ("Hannover", 52.37, 9.73),
    ("Heidelberg", 49.40, 8.67), ("Heilbronn", 49.14, 9.22), ("Hildesheim", 52.15, 9.95),
    ("Hof", 50.31, 11.92), ("Ingolstadt", 48.76, 11.42), ("Jena", 50.93, 11.59),
    ("Kaiserslautern", 49.44, 7.77), ("Karlsruhe", 49.01, 8.40), ("Kassel", 51.31, 9.48),
    ("Kempten", 47.73, 10.31), ("Kiel", 54.32, 10.14), ("Koblenz", 50.36, 7.59),
    ("Koeln", 50.94, 6.96), ("Konstanz", 47.66, 9.18), ("Krefeld", 51.33, 6.56),
    ("Landshut", 48.54, 12.15), ("Leipzig", 51.34, 12.37), ("Luebeck", 53.87, 10.69),
    ("Ludwigshafen", 49.48, 8.44), ("Lueneburg", 53.25, 10.41), ("Magdeburg", 52.13, 11.63),
    ("Mainz", 50.00, 8.27), ("Mannheim", 49.49, 8.47), ("Marburg", 50.81, 8.77),
    ("Moenchengladbach", 51.19, 6.44), ("Muenchen", 48.14, 11.58), ("Muenster", 51.96, 7.63),
    ("Neubrandenburg", 53.56, 13.26), ("Nuernberg", 49.45, 11.08), ("Oldenburg", 53.14, 8.21),
    ("Osnabrueck", 52.28, 8.05), ("Paderborn", 51.72, 8.75), ("Passau", 48.57, 13.43),
    ("Pforzheim", 48.89, 8.70), ("Potsdam", 52.40, 13.07), ("Regensburg", 49.01, 12.10),
    ("Rostock", 54.09, 12.14), ("Saarbruecken", 49.23, 7.00), ("Salzgitter", 52.15, 10.33),
    ("Schwerin", 53.63, 11.41), ("Siegen", 50.87, 8.02), ("Stralsund", 54.31, 13.09),
    ("Stuttgart", 48.78, 9.18), ("Trier", 49.75, 6.64), ("Ulm", 48.40, 9.99),
    ("Wiesbaden", 50.08, 8.24), ("Wilhelmshaven", 53.53, 8.11), ("Wolfsburg", 52.42, 10.79),
    ("Wuppertal", 51.26, 7.15), ("Wuerzburg", 49.79, 9.95), ("Zwickau", 50.72, 12.50),
    ("Aschaffenburg", 49.97, 9.15), ("BadKreuznach", 49.84, 7.87), ("Celle", 52.62, 10.08),
    ("Coburg", 50.26, 10.96), ("Detmold", 51.94, 8.88), ("Eisenach", 50.98, 10.32),
    ("Erlangen", 49.60, 11.00), ("Guetersloh", 51.91, 8.38), ("Husum", 54.48, 9.05),
    ("Itzehoe", 53.92, 9.52), ("Lingen", 52.52, 7.32), ("Lippstadt", 51.67, 8.35),
    ("Meppen", 52.69, 7.29), ("Neumuenster", 54.07, 9.98), ("Offenburg", 48.47, 7.94),
    ("Plauen", 50.50, 12.14), ("Ravensburg", 47.78, 9.61), ("Rosenheim", 47.86, 12.12),
    ("Schweinfurt", 50.05, 10.23), ("Stade", 53.60, 9.48), ("Stendal", 52.61, 11.86),
    ("Suhl", 50.61, 10.69), ("Uelzen", 52.97, 10.56), ("Weiden", 49.68, 12.16),
    ("Wittenberge", 53.00, 11.75), ("Garmisch", 47.49, 11.10), ("Lindau", 47.55, 9.68),
    ("Straubing", 48.88, 12.57), ("Neuruppin", 52.93, 12.80), ("Bautzen", 51.18, 14.42),
]


def great_circle(a, b) -> float:
    la1, lo1, la2, lo2 = map(math.radians, (a[1], a[2], b[1], b[2]))
    h = math.sin((la2 - la1) / 2) ** 2 + math.cos(la1) * math.cos(la2) * math.sin((lo2 - lo1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def render() -> str:
    n = len(CITIES)
    lines = ["NAME : de120", "TYPE : TSP",
             "COMMENT : 120 German cities, approximate road distances in km (synthetic)",
             f"DIMENSION : {n}", "EDGE_WEIGHT_TYPE : EXPLICIT", "EDGE_WEIGHT_FORMAT : LOWER_DIAG_ROW",
             "DISPLAY_DATA_TYPE : TWOD_DISPLAY", "EDGE_WEIGHT_SECTION"]
    for i in range(n):
        row = [0 if i == j else round(DETOUR * great_circle(CITIES[i], CITIES[j])) for j in range(i + 1)]
        lines.append(" ".join(str(w) for w in row))
    lines.append("DISPLAY_DATA_SECTION")
    for i, (_, lat, lon) in enumerate(CITIES, start=1):
        lines.append(f"{i} {lon:.2f} {lat:.2f}")
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1]
                    / "src" / "co2sizing" / "data" / "de120.tsp")
    args = ap.parse_args(argv)
    assert len(CITIES) == 120 and len({c[0] for c in CITIES}) == 120
    args.out.write_text(render())
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
