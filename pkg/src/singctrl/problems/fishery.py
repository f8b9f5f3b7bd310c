"""Bioeconomic fishery harvesting model (minimization form).

State ``x`` is the scaled fish stock, control ``u`` the harvesting effort::

    min  int_0^T (c - p q x) u dt
    s.t. x' = x (1 - x) - q u x,   0 <= u <= M.

Under ``0 < pq - c < 2 p q^2 M`` and ``x0 = (c + pq) / (2pq)`` the optimal
effort is singular on ``[0, t*)`` and equal to ``M`` on ``[t*, T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterDomainError
from ..ocp import ControlProblem

__all__ = ["FisheryParams", "FisheryExact", "fishery_problem", "fishery_exact", "fishery_switching"]


@dataclass(frozen=True)
class FisheryParams:
    """Model constants; defaults are the reference benchmark."""

    T: float = 10.0
    p: float = 2.0
    q: float = 2.0
    c: float = 1.0
    M: float = 1.0
    x0: float = 0.625

    def margin_ok(self) -> bool:
        """``0 < pq - c < 2 p q^2 M``: a singular effort exists inside ``(0, M)``."""
        p, q, c, M = self.p, self.q, self.c, self.M
        return 0 < p * q - c < 2 * p * q * q * M

    def starts_singular(self) -> bool:
        """Whether ``x0`` sits on the singular stock level (to 1e-12)."""
        xs = (self.c + self.p * self.q) / (2 * self.p * self.q)
        return abs(self.x0 - xs) <= 1e-12


def fishery_problem(params: FisheryParams = FisheryParams(), check: bool = False) -> ControlProblem:
    """Build the fishery :class:`ControlProblem` (n = m = 1)."""
    if check and not params.margin_ok():
        raise ParameterDomainError("fishery parameters need 0 < pq - c < 2 p q^2 M")
    p, q, c = params.p, params.q, params.c
    pq = p * q

    def dynamics(x, u):
        s = x[0]
        return [s * (1.0 - s) - q * u[0] * s]

    def cost(x, u):
        return (c - pq * x[0]) * u[0]

    def dyn_dx(x, u):
        return [[1.0 - 2.0 * x[0] - q * u[0]]]

    def dyn_du(x, u):
        return [[-q * x[0]]]

    def cost_dx(x, u):
        return [-pq * u[0]]

    def cost_du(x, u):
        return [c - pq * x[0]]

    return ControlProblem(
        name="fishery", n=1, m=1, x0=(params.x0,),
        dynamics=dynamics, cost=cost, dyn_dx=dyn_dx, dyn_du=dyn_du,
        cost_dx=cost_dx, cost_du=cost_du,
        lower=(0.0,), upper=(params.M,), T=params.T,
        state_names=("x",), control_names=("u",), params=params,
    )


def fishery_switching(params: FisheryParams, x, lam) -> np.ndarray:
    """Switching function ``psi_k = c - pq x_k - q lam_k x_k`` on the control nodes.

    ``x`` may hold ``N + 1`` states; only the first ``len(lam)`` are used.
    """
    lam = np.ravel(np.asarray(lam, dtype=float))
    x = np.ravel(np.asarray(x, dtype=float))[: lam.size]
    return params.c - params.p * params.q * x - params.q * lam * x


@dataclass(frozen=True)
class FisheryExact:
    """Closed-form optimal triple for a singular-start fishery."""

    params: FisheryParams
    u_s: float
    x_s: float
    lam_s: float
    t_switch: float
    alpha: float
    gamma: float
    K: float

    def _sigma(self, t):
        return -1.0 + self.K * np.exp(self.alpha * t)

    def u(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.t_switch, self.u_s, self.params.M)

    def x(self, t):
        t = np.asarray(t, dtype=float)
        a = self.alpha
        with np.errstate(all="ignore"):
            tail = a * self.K * np.exp(a * t) / self._sigma(t)
        return np.where(t <= self.t_switch, self.x_s, tail)

    def lam(self, t):
        t = np.asarray(t, dtype=float)
        P = self.params
        a, ts = self.alpha, self.t_switch
        s_star = self._sigma(ts)
        with np.errstate(all="ignore"):
            s = self._sigma(t)
            tail = (s / s_star) ** 2 * np.exp(a * (ts - t)) * (
                self.lam_s + P.p * P.q * P.M / a * (s_star / s) * (np.exp(a * (t - ts)) - 1.0)
            )
        return np.where(t <= ts, self.lam_s, tail)

    def switching(self, t):
        P = self.params
        x = self.x(t)
        return P.c - P.p * P.q * x - P.q * self.lam(t) * x

    def total_variation(self) -> float:
        return abs(self.params.M - self.u_s)

    def legendre_clebsch(self) -> float:
        """Second-order sign expression along the singular arc; negative is required."""
        P = self.params
        p, q, c = P.p, P.q, P.c
        return (-3 * c * c / (4 * p) - c * q - p * q * q / 4
                - (p * q - c) * (c + p * q) ** 2 / (8 * p * p * q * q))

    def adjoint_residual(self) -> float:
        """Continuous adjoint equation ``pqu - lam + 2 lam x + q lam u`` at the singular triple."""
        P = self.params
        u, x, lam = self.u_s, self.x_s, self.lam_s
        return P.p * P.q * u - lam + 2 * lam * x + P.q * lam * u


def fishery_exact(params: FisheryParams = FisheryParams()) -> FisheryExact:
    """Closed-form solution; requires the margin condition and a singular start."""
    if not params.margin_ok():
        raise ParameterDomainError("closed form needs 0 < pq - c < 2 p q^2 M")
    if not params.starts_singular():
        raise ParameterDomainError("closed form needs x0 = (c + pq) / (2 pq)")
    T, p, q, c, M = params.T, params.p, params.q, params.c, params.M
    pq = p * q
    u_s = (pq - c) / (2 * p * q * q)
    x_s = (c + pq) / (2 * pq)
    lam_s = p * (c - pq) / (c + pq)
    alpha = 1.0 - q * M
    if alpha == 0.0:
        raise ParameterDomainError("closed form needs qM != 1")
    gamma = abs(2 * alpha * pq - c - pq)
    num = -gamma * (pq - c) - 2 * gamma * c * q * M + q * M * (c + pq) ** 2
    den = (c + pq) * ((c - pq) + 2 * pq * q * M - gamma * q * M)
    ratio = num / den
    if not ratio > 0:
        raise ParameterDomainError("switch-time logarithm argument is not positive")
    t_switch = T - math.log(ratio) / alpha
    if not 0.0 <= t_switch <= T:
        raise ParameterDomainError(f"switch time {t_switch} lies outside [0, T]")
    K = (c + pq) * math.exp(-alpha * t_switch) / gamma
    return FisheryExact(params, u_s, x_s, lam_s, t_switch, alpha, gamma, K)
