"""SIR epidemic model with demography, vaccination ``u`` and treatment ``v``.

::

    S' = gamma N - nu S - beta I S / N + rho R - kappa S u
    I' = beta I S / N - (nu + mu + alpha) I - eta I v
    R' = -(nu + rho) R + kappa S u + alpha I + eta I v

with ``N = S + I + R`` and running cost ``a I + b u + c v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..ocp import ControlProblem

__all__ = ["SirParams", "sir_problem", "sir_switching"]


@dataclass(frozen=True)
class SirParams:
    """Rates, cost weights and initial populations; defaults are the benchmark."""

    gamma: float = 0.00683
    nu: float = 0.00188
    beta: float = 0.2426
    mu: float = 0.005
    alpha: float = 0.00002
    rho: float = 0.007
    kappa: float = 0.3
    eta: float = 0.1
    a: float = 5.0
    b: float = 50.0
    c: float = 300.0
    T: float = 50.0
    u_max: float = 1.0
    v_max: float = 1.0
    S0: float = 1000.0
    I0: float = 10.0
    R0: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "nu", "beta", "mu", "alpha", "rho", "kappa", "eta"):
            if getattr(self, name) < 0:
                raise ContractError(f"rate {name} must be nonnegative")
        if not (self.u_max > 0 and self.v_max > 0):
            raise ContractError("u_max and v_max must be positive")
        if not self.S0 + self.I0 + self.R0 > 0:
            raise ContractError("initial population must be positive")


def sir_problem(params: SirParams = SirParams()) -> ControlProblem:
    """Build the SIR :class:`ControlProblem` (n = 3, m = 2)."""
    P = params
    g, nu, be, rho, ka, eta = P.gamma, P.nu, P.beta, P.rho, P.kappa, P.eta
    loss = P.nu + P.mu + P.alpha
    al = P.alpha
    wa, wb, wc = P.a, P.b, P.c

    def dynamics(x, u):
        S, I, R = x[0], x[1], x[2]
        vac, tr = u[0], u[1]
        N = S + I + R
        inc = be * I * S / N
        return [
            g * N - nu * S - inc + rho * R - ka * S * vac,
            inc - loss * I - eta * I * tr,
            -(nu + rho) * R + ka * S * vac + al * I + eta * I * tr,
        ]

    def cost(x, u):
        return wa * x[1] + wb * u[0] + wc * u[1]

    def dyn_dx(x, u):
        S, I, R = x[0], x[1], x[2]
        vac, tr = u[0], u[1]
        N = S + I + R
        sq = be * I * S / (N * N)
        bI, bS = be * I / N, be * S / N
        return [
            [g - nu - bI + sq - ka * vac, g - bS + sq, g + rho + sq],
            [bI - sq, bS - sq - loss - eta * tr, -sq],
            [ka * vac, al + eta * tr, -nu - rho],
        ]

    def dyn_du(x, u):
        S, I = x[0], x[1]
        return [[-ka * S, 0.0], [0.0, -eta * I], [ka * S, eta * I]]

    def cost_dx(x, u):
        return [0.0, wa, 0.0]

    def cost_du(x, u):
        return [wb, wc]

    def state_ok(x):
        return x[0] + x[1] + x[2] > 0

    return ControlProblem(
        name="sir", n=3, m=2, x0=(P.S0, P.I0, P.R0),
        dynamics=dynamics, cost=cost, dyn_dx=dyn_dx, dyn_du=dyn_du,
        cost_dx=cost_dx, cost_du=cost_du,
        lower=(0.0, 0.0), upper=(P.u_max, P.v_max), T=P.T, state_ok=state_ok,
        state_names=("S", "I", "R"), control_names=("u", "v"), params=params,
    )


def sir_switching(params: SirParams, x, lam):
    """Switching functions ``(Phi_u, Phi_v)`` on the control nodes.

    ``Phi_u = b + (lam_R - lam_S) kappa S`` and
    ``Phi_v = c + (lam_R - lam_I) eta I``.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    N = lam.shape[1]
    S, I = x[0, :N], x[1, :N]
    phi_u = params.b + (lam[2] - lam[0]) * params.kappa * S
    phi_v = params.c + (lam[2] - lam[1]) * params.eta * I
    return phi_u, phi_v
