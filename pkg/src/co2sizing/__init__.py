"""Diameter sizing for tree-shaped CO2 pipeline networks with temperature-dependent properties."""

__version__ = "0.1.0"
