"""Problem, configuration and report containers for the polyhedral solver."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError

__all__ = ["PolyhedralNLP", "SolverConfig", "SolveReport", "TERMINATION_REASONS"]

TERMINATION_REASONS = ("converged", "max_iters", "line-search-failure")


@dataclass
class PolyhedralNLP:
    """``min J(z)`` over ``{lo <= z <= hi, B z = 0}``.

    ``value_and_gradient`` is optional; when given it must return the same
    pair as calling ``objective`` and ``gradient`` separately and lets the
    solver share one rollout between them.
    """

    objective: Callable
    gradient: Callable
    lo: np.ndarray
    hi: np.ndarray
    B: Optional[sp.spmatrix] = None
    value_and_gradient: Optional[Callable] = None
    layout: object = None

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float).copy()
        self.hi = np.asarray(self.hi, dtype=float).copy()
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ContractError("lo and hi must be 1-D vectors of equal length")
        if np.any(self.lo > self.hi) or np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)):
            raise ContractError("bounds need lo <= hi componentwise")
        D = self.lo.size
        if self.B is None:
            self.B = sp.csr_matrix((0, D))
        self.B = sp.csr_matrix(self.B, dtype=float)
        if self.B.shape[1] != D:
            raise ContractError(f"equality matrix has {self.B.shape[1]} columns, expected {D}")
        if self.value_and_gradient is None:
            obj, grad = self.objective, self.gradient
            self.value_and_gradient = lambda z: (obj(z), grad(z))

    @property
    def D(self) -> int:
        return self.lo.size


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs for :func:`singctrl.solver.solve`.

    Attributes
    ----------
    tol : float
        Stop once ``||P(z - grad J(z)) - z||_inf <= tol``.
    max_iters : int
        Cap on the total number of accepted iterations over both phases.
    sigma, beta : float
        Armijo sufficient-decrease constant and backtracking factor.
    initial_step : float
        First trial step of the gradient projection phase; later trials
        use the Barzilai-Borwein ratio clamped to ``[step_min, step_max]``.
    stall_ratio : float
        Leave the face phase when its decrease drops below this fraction
        of the latest gradient projection decrease.
    face_memory : int
        Number of curvature pairs kept by the face phase.
    proj_tol : float
        Feasibility tolerance of the projection, ``||B z||_inf``.
    """

    tol: float = 1e-10
    max_iters: int = 50000
    sigma: float = 1e-4
    beta: float = 0.5
    initial_step: float = 1.0
    step_min: float = 1e-10
    step_max: float = 1e10
    stall_ratio: float = 0.1
    face_memory: int = 10
    proj_tol: float = 1e-14
    max_backtracks: int = 60
    debug: bool = False

    def __post_init__(self):
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise ContractError(f"tol must be positive, got {self.tol}")
        if not 0 < self.sigma < 1:
            raise ContractError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not 0 < self.beta < 1:
            raise ContractError(f"beta must lie in (0, 1), got {self.beta}")
        if self.max_iters < 0:
            raise ContractError("max_iters must be nonnegative")
        if not 0 < self.step_min <= self.step_max:
            raise ContractError("need 0 < step_min <= step_max")
        if not self.proj_tol > 0:
            raise ContractError("proj_tol must be positive")
        if self.face_memory < 0:
            raise ContractError("face_memory must be nonnegative")


@dataclass
class SolveReport:
    """Outcome of one solve."""

    z: np.ndarray
    objective: float
    stationarity: float
    reason: str
    iterations: dict = field(default_factory=lambda: {"gradient_projection": 0, "face": 0})
    evaluations: int = 0
    wall_time: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    def summary(self) -> dict:
        return {
            "objective": self.objective,
            "stationarity": self.stationarity,
            "reason": self.reason,
            "iterations_gradient_projection": self.iterations["gradient_projection"],
            "iterations_face": self.iterations["face"],
            "evaluations": self.evaluations,
            "wall_time": self.wall_time,
        }
