"""Total variation of piecewise-constant controls and the lifted penalized NLP.

Each control channel ``u_j`` (length N) is paired with nonnegative slacks
``zeta_j`` and ``iota_j`` (length N - 1) such that
``u_{j,k+1} - u_{j,k} = zeta_{j,k} - iota_{j,k}``.  The penalty
``rho_j * sum(zeta_j + iota_j)`` then equals ``rho_j * V(u_j)`` at any
complementary point and is linear, so the lifted objective stays smooth.

The stacked decision vector is ``[u_1, zeta_1, iota_1, ..., u_m, zeta_m, iota_m]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ContractError
from .ocp import ControlProblem, Mesh, discrete_cost, gradient_via_lagrangian, solve_trajectory
from .solver.nlp import PolyhedralNLP

__all__ = [
    "TVWeights",
    "total_variation",
    "tv_decompose",
    "difference_matrix",
    "DecomposedLayout",
    "assemble_nlp",
    "penalized_objective",
]


@dataclass(frozen=True)
class TVWeights:
    """Per-channel penalty weights, each in ``[0, 1)``."""

    rho: tuple

    def __post_init__(self):
        rho = tuple(float(r) for r in np.atleast_1d(self.rho))
        for r in rho:
            if not 0.0 <= r < 1.0:
                raise ContractError(f"penalty weight must lie in [0, 1), got {r}")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def uniform(cls, rho, m):
        return cls((rho,) * m)

    def __len__(self):
        return len(self.rho)


def total_variation(u) -> float:
    """Sum of absolute consecutive differences; 0 for fewer than two entries."""
    u = np.asarray(u, dtype=float)
    if u.size < 2:
        return 0.0
    return math.fsum(np.abs(np.diff(u)))


def tv_decompose(u):
    """Complementary split ``(zeta, iota)`` of the consecutive differences.

    A positive difference goes to ``zeta``; a nonpositive one goes (negated)
    to ``iota``.
    """
    d = np.diff(np.asarray(u, dtype=float))
    zeta = np.where(d > 0, d, 0.0)
    iota = np.where(d > 0, 0.0, -d) + 0.0  # no negative zero
    return zeta, iota


def difference_matrix(N: int) -> sp.csr_matrix:
    """``(N-1) x N`` forward difference matrix with rows ``[-1, 1]``."""
    if N < 1:
        raise ContractError("difference matrix needs N >= 1")
    return sp.diags([-np.ones(N - 1), np.ones(N - 1)], [0, 1], shape=(N - 1, N), format="csr")


@dataclass(frozen=True)
class DecomposedLayout:
    """Index bookkeeping for the stacked ``[u_j, zeta_j, iota_j]`` vector."""

    m: int
    N: int

    @property
    def block(self) -> int:
        return 3 * self.N - 2

    @property
    def size(self) -> int:
        return self.m * self.block

    def u_slice(self, j):
        s = j * self.block
        return slice(s, s + self.N)

    def zeta_slice(self, j):
        s = j * self.block + self.N
        return slice(s, s + self.N - 1)

    def iota_slice(self, j):
        s = j * self.block + 2 * self.N - 1
        return slice(s, s + self.N - 1)

    def u_index(self) -> np.ndarray:
        """Positions of all control entries, channel-major."""
        return np.concatenate([np.arange(self.N) + j * self.block for j in range(self.m)])

    def pack(self, u, zeta=None, iota=None) -> np.ndarray:
        """Stack controls with their slacks; missing slacks come from :func:`tv_decompose`."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape != (self.m, self.N):
            raise ContractError(f"controls must have shape {(self.m, self.N)}, got {u.shape}")
        z = np.empty(self.size)
        for j in range(self.m):
            if zeta is None or iota is None:
                zj, ij = tv_decompose(u[j])
            else:
                zj, ij = np.atleast_2d(zeta)[j], np.atleast_2d(iota)[j]
            z[self.u_slice(j)] = u[j]
            z[self.zeta_slice(j)] = zj
            z[self.iota_slice(j)] = ij
        return z

    def unpack(self, z):
        """Split a stacked vector into ``(u, zeta, iota)`` arrays of shape ``m x .``."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.size,):
            raise ContractError(f"stacked vector must have length {self.size}, got {z.shape}")
        u = np.stack([z[self.u_slice(j)] for j in range(self.m)])
        zeta = np.stack([z[self.zeta_slice(j)] for j in range(self.m)])
        iota = np.stack([z[self.iota_slice(j)] for j in range(self.m)])
        return u, zeta, iota

    def controls(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z[self.u_index()].reshape(self.m, self.N)

    def constraint_matrix(self) -> sp.csr_matrix:
        """Block-diagonal ``[A | -I | I]`` equality rows, one block per channel."""
        A = difference_matrix(self.N)
        eye = sp.identity(self.N - 1, format="csr")
        block = sp.hstack([A, -eye, eye], format="csr")
        return sp.block_diag([block] * self.m, format="csr")

    def bounds(self, lower, upper):
        lo = np.zeros(self.size)
        hi = np.full(self.size, np.inf)
        for j in range(self.m):
            lo[self.u_slice(j)] = lower[j]
            hi[self.u_slice(j)] = upper[j]
        return lo, hi


def penalized_objective(problem: ControlProblem, mesh: Mesh, weights: TVWeights, u) -> float:
    """``discrete_cost + sum_j rho_j V(u_j)`` for a plain control array."""
    traj = solve_trajectory(problem, mesh, u)
    pen = sum(r * total_variation(row) for r, row in zip(weights.rho, traj.u))
    return discrete_cost(problem, mesh, traj.x, traj.u) + pen


def assemble_nlp(problem: ControlProblem, mesh: Mesh, weights: TVWeights) -> PolyhedralNLP:
    """Lift the penalized transcription into a :class:`PolyhedralNLP`.

    The objective is the discrete cost plus ``sum_j rho_j sum_k (zeta + iota)``;
    the slack gradient blocks are the constants ``rho_j``.
    """
    if len(weights) != problem.m:
        raise ContractError(f"expected {problem.m} penalty weights, got {len(weights)}")
    lay = DecomposedLayout(problem.m, mesh.N)
    rho = np.asarray(weights.rho)
    slack_grad = np.zeros(lay.size)
    for j in range(problem.m):
        slack_grad[lay.zeta_slice(j)] = rho[j]
        slack_grad[lay.iota_slice(j)] = rho[j]
    uidx = lay.u_index()
    slack_mask = np.ones(lay.size, dtype=bool)
    slack_mask[uidx] = False

    def split(z):
        return z[uidx].reshape(problem.m, mesh.N)

    def objective(z):
        z = np.asarray(z, dtype=float)
        traj = solve_trajectory(problem, mesh, split(z))
        pen = float(slack_grad[slack_mask] @ z[slack_mask])
        return discrete_cost(problem, mesh, traj.x, traj.u) + pen

    def value_and_gradient(z):
        z = np.asarray(z, dtype=float)
        traj = solve_trajectory(problem, mesh, split(z))
        J = discrete_cost(problem, mesh, traj.x, traj.u) + float(slack_grad[slack_mask] @ z[slack_mask])
        g = slack_grad.copy()
        g[uidx] = gradient_via_lagrangian(problem, mesh, traj.x, traj.u, traj.lam).ravel()
        return J, g

    def gradient(z):
        return value_and_gradient(z)[1]

    lo, hi = lay.bounds(problem.lower, problem.upper)
    return PolyhedralNLP(
        objective=objective,
        gradient=gradient,
        lo=lo,
        hi=hi,
        B=lay.constraint_matrix(),
        value_and_gradient=value_and_gradient,
        layout=lay,
    )
