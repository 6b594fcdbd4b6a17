"""Finite element Ritz projections and maximal-function stability probes."""

__version__ = "0.1.0"
