"""Qutrit contextuality toolkit: exact predictions, noncontextual bounds and a
linear-optics Monte Carlo of the nine-ray measurement campaign."""

from __future__ import annotations

from .core import RAYS, dichotomous, eigh3, maximally_mixed, projector, pure_state, ray
from .engine import (
    CLASSICAL_BOUND, build_graph, catalog_graph, census, classical_min, efficiency_threshold,
    enumerate_nchv, kcbs_graph, lhs, main_functional, witness,
)
from .harness import default_plan, run_plan

__version__ = "0.1.0"

__all__ = [
    "CLASSICAL_BOUND", "RAYS", "build_graph", "catalog_graph", "census", "classical_min",
    "default_plan", "dichotomous", "efficiency_threshold", "eigh3", "enumerate_nchv",
    "kcbs_graph", "lhs", "main_functional", "maximally_mixed", "projector", "pure_state", "ray",
    "run_plan", "witness",
]
