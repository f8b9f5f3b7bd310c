"""Benchmark problems and their analytic oracles."""

from .fishery import FisheryExact, FisheryParams, fishery_exact, fishery_problem, fishery_switching
from .plant import (
    PLANT_CASES,
    PlantConstants,
    PlantExact,
    PlantParams,
    plant_classify,
    plant_constants,
    plant_exact,
    plant_problem,
    plant_switching,
)
from .sir import SirParams, sir_problem, sir_switching

__all__ = [
    "FisheryExact", "FisheryParams", "fishery_exact", "fishery_problem", "fishery_switching",
    "PLANT_CASES", "PlantConstants", "PlantExact", "PlantParams", "plant_classify",
    "plant_constants", "plant_exact", "plant_problem", "plant_switching",
    "SirParams", "sir_problem", "sir_switching",
    "switching_values",
]


def switching_values(problem, x, lam):
    """Switching functions of any benchmark problem as an ``m x N`` array."""
    import numpy as np

    if problem.name == "fishery":
        return fishery_switching(problem.params, x, lam)[None, :]
    if problem.name == "plant":
        return plant_switching(x, lam)[None, :]
    if problem.name == "sir":
        return np.vstack(sir_switching(problem.params, x, lam))
    raise ValueError(f"no switching function for problem {problem.name!r}")
