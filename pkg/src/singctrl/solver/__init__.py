"""Polyhedral minimizer, its projection subsolver and the prox-TV backend."""

from .nlp import TERMINATION_REASONS, PolyhedralNLP, SolveReport, SolverConfig
from .pasa import solve, stationarity
from .projection import Projector, project
from .proxtv import prox_tv_backend, tv_prox

__all__ = [
    "PolyhedralNLP", "SolverConfig", "SolveReport", "TERMINATION_REASONS",
    "solve", "stationarity", "Projector", "project", "prox_tv_backend", "tv_prox",
]
