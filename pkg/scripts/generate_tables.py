"""Regenerate the shipped CO2 property tables from CoolProp.

The package itself never imports CoolProp; this script is run offline and its
output (one CSV per quantity plus the saturation curve) is committed under
``src/co2sizing/data/tables``.  CoolProp evaluates the Span-Wagner reference
equation of state for pure CO2.

    pip install CoolProp
    python scripts/generate_tables.py [outdir]
"""

import csv
import sys
from pathlib import Path

import numpy as np
import CoolProp
from CoolProp.CoolProp import PropsSI

PRESSURES_BAR = np.arange(30.0, 160.0 + 0.5, 1.0)
TEMPERATURES_K = np.round(np.arange(260.0, 365.0 + 0.25, 0.5), 2)

QUANTITIES = {
    "density": ("Dmass", 1.0),
    "heat_capacity": ("Cpmass", 1.0),
    "viscosity": ("viscosity", 1.0),
    "thermal_conductivity": ("conductivity", 1.0),
    # K/Pa -> K/bar
    "joule_thomson": ("d(T)/d(P)|Hmass", 1e5),
}


def _props(key, p_pa, t):
    try:
        return PropsSI(key, "P", p_pa, "T", t, "CO2")
    except ValueError:
        # grid point sitting on the phase boundary; nudge into the vapour side
        return PropsSI(key, "P", p_pa * (1 - 1e-7), "T", t, "CO2")


def main(outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    for name, (key, scale) in QUANTITIES.items():
        with open(outdir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p_bar\\T_K"] + [f"{t:.2f}" for t in TEMPERATURES_K])
            for p in PRESSURES_BAR:
                row = [_props(key, p * 1e5, t) * scale for t in TEMPERATURES_K]
                w.writerow([f"{p:.1f}"] + [f"{v:.10g}" for v in row])

    t_crit = PropsSI("Tcrit", "CO2")
    temps = list(np.arange(217.0, t_crit, 0.5)) + [t_crit]
    with open(outdir / "saturation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T_K", "p_sat_bar"])
        for t in temps:
            w.writerow([f"{t:.4f}", f"{PropsSI('P', 'T', t, 'Q', 0, 'CO2') / 1e5:.10g}"])
    print(f"CoolProp {CoolProp.__version__}: wrote tables to {outdir}")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "co2sizing" / "data" / "tables"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
