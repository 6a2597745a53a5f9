"""Gridded CO2 property tables and the saturation curve.

Tables are rectilinear in pressure (bar) and temperature (K) and evaluated by
bilinear interpolation.  Queries outside the grid are clamped to its boundary
and counted on the table's :class:`ClampCounter`; in strict mode they raise.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

QUANTITIES = ("density", "heat_capacity", "viscosity", "thermal_conductivity", "joule_thomson")
POSITIVE = ("density", "heat_capacity", "viscosity", "thermal_conductivity")

T_CRIT = 304.15  # K
P_CRIT = 73.773  # bar

TABLES_ENV = "CO2SIZING_TABLES"


class PropertyTableError(ValueError):
    """Malformed property table file."""


class PropertyRangeError(ValueError):
    """State outside the tabulated range while strict clamping is on."""


class ClampCounter:
    """Thread-safe tally of out-of-grid lookups."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def hit(self) -> None:
        with self._lock:
            self.count += 1

    def reset(self) -> None:
        with self._lock:
            self.count = 0


def default_table_dir() -> Path:
    env = os.environ.get(TABLES_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("co2sizing") / "data" / "tables"))


@dataclass
class SaturationCurve:
    temperatures: np.ndarray
    pressures: np.ndarray
    t_crit: float = T_CRIT
    p_crit: float = P_CRIT

    def __post_init__(self):
        self.temperatures = np.asarray(self.temperatures, dtype=float)
        self.pressures = np.asarray(self.pressures, dtype=float)
        if np.any(np.diff(self.temperatures) <= 0):
            raise PropertyTableError("non-monotone saturation temperature axis")
        if np.any(np.diff(self.pressures) <= 0):
            raise PropertyTableError("saturation pressure must increase strictly with temperature")
        self._t = self.temperatures.tolist()
        self._p = self.pressures.tolist()

    def p_sat(self, T: float) -> float:
        """Saturation pressure in bar; the critical pressure at and above T_c."""
        if T >= self.t_crit or T >= self._t[-1]:
            return self.p_crit
        if T <= self._t[0]:
            return self._p[0]
        i = bisect_right(self._t, T) - 1
        w = (T - self._t[i]) / (self._t[i + 1] - self._t[i])
        return self._p[i] + w * (self._p[i + 1] - self._p[i])

    def p_sat_array(self, T: np.ndarray) -> np.ndarray:
        T = np.asarray(T, dtype=float)
        out = np.interp(T, self.temperatures, self.pressures)
        return np.where((T >= self.t_crit) | (T >= self.temperatures[-1]), self.p_crit, out)


def p_lower_bound(curve: SaturationCurve, T: float, margin: float) -> float:
    """Lowest admissible pressure keeping liquid/supercritical CO2 at temperature ``T``."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return curve.p_sat(T) + margin


@dataclass
class PropertyTable:
    """Bilinear lookup of density, c_p, dynamic viscosity, conductivity and mu_JT.

    Units: density kg/m^3, heat_capacity J/(kg K), viscosity Pa s,
    thermal_conductivity W/(m K), joule_thomson K/bar.
    """

    pressures: np.ndarray
    temperatures: np.ndarray
    values: dict[str, np.ndarray]
    saturation: SaturationCurve | None = None
    strict: bool = False
    clamps: ClampCounter = field(default_factory=ClampCounter)

    def __post_init__(self):
        self.pressures = np.asarray(self.pressures, dtype=float)
        self.temperatures = np.asarray(self.temperatures, dtype=float)
        if np.any(np.diff(self.pressures) <= 0):
            raise PropertyTableError("non-monotone pressure axis")
        if np.any(np.diff(self.temperatures) <= 0):
            raise PropertyTableError("non-monotone temperature axis")
        shape = (len(self.pressures), len(self.temperatures))
        for q in QUANTITIES:
            if q not in self.values:
                raise PropertyTableError(f"missing quantity {q}")
            v = np.asarray(self.values[q], dtype=float)
            if v.shape != shape:
                raise PropertyTableError(f"{q}: shape {v.shape} does not match grid {shape}")
            if np.isnan(v).any():
                i, j = np.argwhere(np.isnan(v))[0]
                raise PropertyTableError(
                    f"{q}: grid hole at ({self.pressures[i]:g} bar, {self.temperatures[j]:g} K)")
            if q in POSITIVE and np.any(v <= 0):
                raise PropertyTableError(f"{q}: non-positive values")
            self.values[q] = v
        self._p = self.pressures.tolist()
        self._t = self.temperatures.tolist()
        # cell-major nested lists make the scalar path cheap
        stacked = np.stack([self.values[q] for q in QUANTITIES], axis=-1)
        self._cells = stacked.tolist()

    def _locate(self, grid: list[float], x: float) -> tuple[int, float, bool]:
        if x <= grid[0]:
            return 0, 0.0, x < grid[0]
        if x >= grid[-1]:
            return len(grid) - 2, 1.0, x > grid[-1]
        i = bisect_right(grid, x) - 1
        return i, (x - grid[i]) / (grid[i + 1] - grid[i]), False

    def eval_all(self, p: float, T: float) -> tuple[float, float, float, float, float]:
        """(density, heat_capacity, viscosity, thermal_conductivity, joule_thomson) at (p, T)."""
        if math.isnan(p) or math.isnan(T):
            raise ValueError("NaN state passed to property lookup")
        i, u, cp_ = self._locate(self._p, p)
        j, w, ct = self._locate(self._t, T)
        if cp_ or ct:
            if self.strict:
                raise PropertyRangeError(f"state ({p:g} bar, {T:g} K) outside property tables")
            self.clamps.hit()
        r0, r1 = self._cells[i], self._cells[i + 1]
        a, b, c, d = r0[j], r0[j + 1], r1[j], r1[j + 1]
        w00, w01, w10, w11 = (1 - u) * (1 - w), (1 - u) * w, u * (1 - w), u * w
        return tuple(w00 * a[k] + w01 * b[k] + w10 * c[k] + w11 * d[k] for k in range(5))

    def eval(self, quantity: str, p: float, T: float) -> float:
        return self.eval_all(p, T)[QUANTITIES.index(quantity)]

    def eval_array(self, quantity: str, p, T) -> np.ndarray:
        """Vectorised bilinear lookup with the same clamping rules."""
        p = np.asarray(p, dtype=float)
        T = np.asarray(T, dtype=float)
        if np.isnan(p).any() or np.isnan(T).any():
            raise ValueError("NaN state passed to property lookup")
        outside = (p < self.pressures[0]) | (p > self.pressures[-1]) | \
                  (T < self.temperatures[0]) | (T > self.temperatures[-1])
        n_out = int(np.count_nonzero(outside))
        if n_out:
            if self.strict:
                raise PropertyRangeError(f"{n_out} state(s) outside property tables")
            for _ in range(n_out):
                self.clamps.hit()
        pc = np.clip(p, self.pressures[0], self.pressures[-1])
        tc = np.clip(T, self.temperatures[0], self.temperatures[-1])
        i = np.clip(np.searchsorted(self.pressures, pc, side="right") - 1, 0, len(self.pressures) - 2)
        j = np.clip(np.searchsorted(self.temperatures, tc, side="right") - 1, 0, len(self.temperatures) - 2)
        u = (pc - self.pressures[i]) / (self.pressures[i + 1] - self.pressures[i])
        w = (tc - self.temperatures[j]) / (self.temperatures[j + 1] - self.temperatures[j])
        v = self.values[quantity]
        return ((1 - u) * (1 - w) * v[i, j] + (1 - u) * w * v[i, j + 1]
                + u * (1 - w) * v[i + 1, j] + u * w * v[i + 1, j + 1])

    def below_saturation(self, p: float, T: float) -> bool:
        return self.saturation is not None and T < self.saturation.t_crit and p < self.saturation.p_sat(T)


def eval(table: PropertyTable, quantity: str, p: float, T: float) -> float:  # noqa: A001
    return table.eval(quantity, p, T)


def _read_grid_csv(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 3:
        raise PropertyTableError(f"{path.name}: too few rows")
    temps = [float(x) for x in rows[0][1:]]
    pres, body = [], []
    for r in rows[1:]:
        pres.append(float(r[0]))
        cells = r[1:] + [""] * (len(temps) - len(r) + 1)
        body.append([float(c) if c.strip() not in ("", "nan", "NaN") else math.nan for c in cells[:len(temps)]])
    return np.array(pres), np.array(temps), np.array(body)


def load_saturation(path: str | Path) -> SaturationCurve:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return SaturationCurve(data[:, 0], data[:, 1])


def load_tables(path: str | Path | None = None, *, strict: bool = False) -> PropertyTable:
    """Load ``<quantity>.csv`` files plus ``saturation.csv`` from a directory."""
    path = Path(path) if path is not None else default_table_dir()
    if not path.is_dir():
        raise FileNotFoundError(f"property table directory not found: {path}")
    grids, values = None, {}
    for q in QUANTITIES:
        f = path / f"{q}.csv"
        if not f.exists():
            raise FileNotFoundError(f"missing property table {f}")
        p, t, v = _read_grid_csv(f)
        if np.any(np.diff(p) <= 0):
            raise PropertyTableError(f"{f.name}: non-monotone pressure axis")
        if np.any(np.diff(t) <= 0):
            raise PropertyTableError(f"{f.name}: non-monotone temperature axis")
        if grids is None:
            grids = (p, t)
        elif not (np.array_equal(grids[0], p) and np.array_equal(grids[1], t)):
            raise PropertyTableError(f"{f.name}: grid differs from other tables")
        values[q] = v
    sat_file = path / "saturation.csv"
    sat = load_saturation(sat_file) if sat_file.exists() else None
    return PropertyTable(grids[0], grids[1], values, saturation=sat, strict=strict)


def save_tables(table: PropertyTable, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for q in QUANTITIES:
        with open(path / f"{q}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p_bar\\T_K"] + [repr(float(t)) for t in table.temperatures])
            for p, row in zip(table.pressures, table.values[q]):
                w.writerow([repr(float(p))] + [repr(float(v)) for v in row])
    if table.saturation is not None:
        with open(path / "saturation.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["T_K", "p_sat_bar"])
            for t, p in zip(table.saturation.temperatures, table.saturation.pressures):
                w.writerow([repr(float(t)), repr(float(p))])
