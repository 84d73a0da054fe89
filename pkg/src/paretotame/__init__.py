"""Existence diagnostics for nonsmooth constrained vector optimization problems."""
from .dsl import VectorObjective, parse
from .feasible import Cell, FeasibleSet, Periodic, normal_cone
from .minnorm import ConeRep, min_norm
from .stationarity import nu, nu_restricted, tangency_member

__all__ = [
    "VectorObjective", "parse", "Cell", "FeasibleSet", "Periodic", "normal_cone", "ConeRep", "min_norm",
    "nu", "nu_restricted", "tangency_member",
]
