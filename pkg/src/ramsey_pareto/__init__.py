"""Pareto-optimal allocations for a coalition of households sharing a capital constraint."""

__version__ = "0.1.0"
