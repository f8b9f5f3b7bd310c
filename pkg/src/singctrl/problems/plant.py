"""Annual plant resource allocation model.

``x1`` is vegetative weight, ``x2`` reproductive weight and ``u`` the share
of production routed to vegetative growth::

    min  -int_0^T ln x2 dt
    s.t. x1' = u x1,  x2' = (1 - u) x1,  0 <= u <= 1.

When a singular arc is present it follows ``u = 1 - 1/(T - 1 - t)`` on
``[t1, t2)`` and the control is zero on ``[t2, T]`` with ``T - t2 = y``.
The universal constants ``y`` and ``z = x2(t2)/x1(t2)`` solve
``y = 1 + 1/z`` and ``1/z = ln(y/z + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from ..errors import ContractError, ParameterDomainError
from ..ocp import ControlProblem
from ._roots import bracketed_root

__all__ = [
    "PlantParams",
    "PlantExact",
    "PlantConstants",
    "plant_problem",
    "plant_constants",
    "plant_classify",
    "plant_exact",
    "plant_switching",
    "PLANT_CASES",
]

#: Benchmark parameter sets keyed by case tag.
PLANT_CASES = {
    "2a": (5.0, 4.0, 1.0),
    "2b": (5.0, 1.0, 1e-4),
    "2c": (5.0, 1.0, 2.0),
}

#: Smallest admissible initial reproductive weight; the log cost needs x2 > 0.
MIN_X20 = 1e-8


@dataclass(frozen=True)
class PlantParams:
    T: float = 5.0
    x10: float = 4.0
    x20: float = 1.0

    def __post_init__(self):
        if not self.x10 > 0:
            raise ContractError(f"x10 must be positive, got {self.x10}")
        if not self.x20 >= 0:
            raise ContractError(f"x20 must be nonnegative, got {self.x20}")
        if not self.T > 0:
            raise ContractError(f"T must be positive, got {self.T}")

    @classmethod
    def case(cls, tag: str) -> "PlantParams":
        try:
            return cls(*PLANT_CASES[tag])
        except KeyError:
            raise ContractError(f"unknown plant case {tag!r}; expected one of {sorted(PLANT_CASES)}") from None

    @property
    def ratio(self) -> float:
        return self.x20 / self.x10


@dataclass(frozen=True)
class PlantConstants:
    y: float
    z: float
    terminal_ratio: float


@lru_cache(maxsize=1)
def plant_constants() -> PlantConstants:
    """Solve for ``(y, z, y + z)``.

    With ``w = 1/z`` the pair reduces to ``w = ln(1 + w + w^2)``; the nonzero
    root is bracketed through ``z`` in ``(1e-6, 10)``.
    """
    def F(z):
        w = 1.0 / z
        return w - math.log(1.0 + w + w * w)

    def dF(z):
        w = 1.0 / z
        return (1.0 - (1.0 + 2.0 * w) / (1.0 + w + w * w)) * (-w * w)

    # F(1e-6) > 0 and F(10) < 0; the trivial root w = 0 sits at z = inf
    z = bracketed_root(F, dF, 1e-6, 10.0, tol=1e-14)
    y = 1.0 + 1.0 / z
    return PlantConstants(y, z, y + z)


def plant_problem(params: PlantParams = PlantParams()) -> ControlProblem:
    """Build the plant :class:`ControlProblem` (n = 2, m = 1)."""
    if params.x20 < MIN_X20:
        raise ParameterDomainError(
            f"x20 = {params.x20} makes the log cost undefined; use x20 >= {MIN_X20}")

    def dynamics(x, u):
        a, w = x[0], u[0]
        return [w * a, (1.0 - w) * a]

    def cost(x, u):
        return -np.log(x[1])

    def dyn_dx(x, u):
        w = u[0]
        return [[w, 0.0], [1.0 - w, 0.0]]

    def dyn_du(x, u):
        return [[x[0]], [-x[0]]]

    def cost_dx(x, u):
        return [0.0, -1.0 / x[1]]

    def cost_du(x, u):
        return [0.0]

    def state_ok(x):
        return x[1] > 0

    return ControlProblem(
        name="plant", n=2, m=1, x0=(params.x10, params.x20),
        dynamics=dynamics, cost=cost, dyn_dx=dyn_dx, dyn_du=dyn_du,
        cost_dx=cost_dx, cost_du=cost_du,
        lower=(0.0,), upper=(1.0,), T=params.T, state_ok=state_ok,
        state_names=("x_1", "x_2"), control_names=("u",), params=params,
    )


def plant_switching(x, lam) -> np.ndarray:
    """``x1 (lam1 - lam2)`` on the control nodes (the gradient divided by h)."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    N = lam.shape[1]
    return x[0, :N] * (lam[0] - lam[1])


def _close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b))


def plant_classify(params: PlantParams) -> str:
    """Structure of the optimal allocation.

    Returns one of ``"2a"``, ``"2b"``, ``"2c"`` (singular arc present),
    ``"purely-reproductive"`` or ``"bang-bang"``.  Every admissible parameter
    set maps to exactly one tag; short horizons that are not purely
    reproductive are reported as bang-bang.
    """
    k = plant_constants()
    T, r = params.T, params.ratio
    bound = k.z * math.exp(T - k.y)
    if T <= k.terminal_ratio and (r < k.terminal_ratio - T or _close(r, k.terminal_ratio - T)):
        return "purely-reproductive"
    if T > k.terminal_ratio and r < bound and not _close(r, bound):
        pivot = 1.0 / (T - 1.0)
        if _close(r, pivot):
            return "2a"
        return "2b" if r < pivot else "2c"
    return "bang-bang"


@dataclass(frozen=True)
class PlantExact:
    """Piecewise closed-form optimum for the singular cases."""

    params: PlantParams
    case: str
    t1: float
    t2: float
    x1_t1: float
    x2_t1: float
    x1_t2: float
    x2_t2: float
    x2_T: float
    constants: PlantConstants

    def regions(self, t):
        t = np.asarray(t, dtype=float)
        return t < self.t1, (t >= self.t1) & (t <= self.t2), t > self.t2

    def u(self, t):
        t = np.asarray(t, dtype=float)
        T = self.params.T
        with np.errstate(all="ignore"):
            sing = 1.0 - 1.0 / (T - 1.0 - t)
        before = 1.0 if self.case == "2c" else 0.0
        out = np.where(t < self.t1, before, np.where(t <= self.t2, sing, 0.0))
        return out

    def x2(self, t):
        t = np.asarray(t, dtype=float)
        P = self.params
        if self.case == "2b":
            head = P.x10 * t + P.x20
        else:
            head = np.full_like(t, P.x20)
        mid = self.x2_t1 * np.exp(t - self.t1)
        tail = self.x1_t2 * (t - self.t2) + self.x2_t2
        return np.where(t < self.t1, head, np.where(t <= self.t2, mid, tail))

    def x1(self, t):
        t = np.asarray(t, dtype=float)
        P = self.params
        if self.case == "2c":
            head = P.x10 * np.exp(t)
        else:
            head = np.full_like(t, P.x10)
        mid = (P.T - 1.0 - t) * self.x2(t)
        return np.where(t < self.t1, head, np.where(t <= self.t2, mid, self.x1_t2))

    def lam2(self, t):
        t = np.asarray(t, dtype=float)
        P = self.params
        x2 = self.x2(t)
        with np.errstate(all="ignore"):
            if self.case == "2b":
                head = np.log(x2 / self.x2_t1) / P.x10 - 1.0 / self.x2_t1
            else:
                head = (t - self.t1) / P.x20 - 1.0 / self.x2_t1
            mid = -np.exp(self.t1 - t) / self.x2_t1
            tail = np.log(x2 / self.x2_T) / self.x1_t2
        return np.where(t < self.t1, head, np.where(t <= self.t2, mid, tail))

    def lam1(self, t):
        t = np.asarray(t, dtype=float)
        P = self.params
        x2 = self.x2(t)
        a = self.x2_t1
        with np.errstate(all="ignore"):
            if self.case == "2b":
                head = (x2 * np.log(a / x2) / P.x10 ** 2 + (x2 - a) / P.x10 ** 2
                        + (x2 - a) / (a * P.x10) - 1.0 / a)
            else:
                head = -np.exp(self.t1 - t) / P.x20
            mid = -np.exp(self.t1 - t) / a
            tail = -(x2 * np.log(x2 / self.x2_T) + self.x2_T - x2) / self.x1_t2 ** 2
        return np.where(t < self.t1, head, np.where(t <= self.t2, mid, tail))

    def objective(self) -> float:
        """Continuous cost ``-int_0^T ln x2 dt`` of the exact solution."""
        pts = sorted({self.t1, self.t2})
        val, _ = quad(lambda s: -math.log(float(self.x2(s))), 0.0, self.params.T,
                      points=pts, epsabs=1e-13, epsrel=1e-13, limit=200)
        return val

    def legendre_clebsch(self, t):
        """``x1^2 / x2^2`` along the singular arc (must be positive)."""
        return (self.x1(t) / self.x2(t)) ** 2


def plant_exact(params: PlantParams) -> PlantExact:
    """Closed-form optimum for cases 2a, 2b and 2c."""
    case = plant_classify(params)
    if case not in ("2a", "2b", "2c"):
        raise ParameterDomainError(f"no singular closed form for case {case!r}")
    k = plant_constants()
    T, x10, x20 = params.T, params.x10, params.x20
    r = params.ratio
    t2 = T - k.y
    if case == "2a":
        t1 = 0.0
        x1_t1, x2_t1 = x10, x20
    elif case == "2b":
        # junction condition (t + r)(T - 1 - t) = 1
        disc = (T - 1.0 - r) ** 2 - 4.0 * (1.0 - r * (T - 1.0))
        roots = [0.5 * (T - 1.0 - r + s * math.sqrt(disc)) for s in (-1.0, 1.0)]
        inside = [t for t in roots if 0.0 < t < t2]
        if len(inside) != 1:
            raise ParameterDomainError(f"expected one junction root in (0, t2), got {roots}")
        t1 = inside[0]
        x1_t1, x2_t1 = x10, x10 * t1 + x20
    else:
        def F(t):
            return r * math.exp(-t) * (T - 1.0 - t) - 1.0

        def dF(t):
            return -r * math.exp(-t) * (T - t)

        t1 = bracketed_root(F, dF, 0.0, t2)
        x1_t1, x2_t1 = x10 * math.exp(t1), x20
    x2_t2 = x2_t1 * math.exp(t2 - t1)
    x1_t2 = (T - 1.0 - t2) * x2_t2
    x2_T = x1_t2 * (T - t2) + x2_t2
    return PlantExact(params, case, t1, t2, x1_t1, x2_t1, x1_t2, x2_t2, x2_T, k)
