"""Control-affine optimal control problems on a uniform mesh.

States are advanced with explicit Euler and the running cost is integrated
with the left-rectangle rule.  The adjoint recursion below is the exact
discrete adjoint of that pairing, so :func:`gradient_via_lagrangian` returns
the true gradient of the discrete reduced cost.

Problem callables take the state and control as *sequences of components*
(``x[0], ..., x[n-1]`` and ``u[0], ..., u[m-1]``).  Each component is either
a Python float (one node) or a 1-D array (all nodes at once); the same
closure serves the sequential rollout and the vectorized partials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, CostEvaluationError, RolloutDivergedError

__all__ = [
    "Mesh",
    "ControlProblem",
    "Trajectory",
    "rollout_state",
    "backward_adjoint",
    "discrete_cost",
    "gradient_via_lagrangian",
    "solve_trajectory",
    "reduced_cost",
    "reduced_gradient",
]


@dataclass(frozen=True)
class Mesh:
    """Uniform partition of ``[0, T]`` into ``N`` intervals."""

    T: float
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ContractError(f"mesh needs N >= 2 intervals, got {self.N}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ContractError(f"horizon must be positive and finite, got {self.T}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        """All ``N + 1`` nodes ``t_k = k h``."""
        return np.arange(self.N + 1) * self.h

    @property
    def left_nodes(self) -> np.ndarray:
        """Left endpoints ``t_0 .. t_{N-1}`` where controls are held."""
        return np.arange(self.N) * self.h

    @classmethod
    def from_step(cls, T, h):
        N = int(round(T / h))
        if not math.isclose(N * h, T, rel_tol=1e-9):
            raise ContractError(f"step {h} does not divide horizon {T}")
        return cls(T, N)


@dataclass(frozen=True)
class ControlProblem:
    """A control-affine problem ``min int g dt`` s.t. ``x' = f(x, u)``.

    ``dyn_dx(x, u)[i][l]`` is ``df_i/dx_l`` and ``dyn_du(x, u)[i][j]`` is
    ``df_i/du_j``.  Entries may be scalars; they are broadcast over nodes.
    ``state_ok``, when given, maps the state components to a truth value per
    node and flags states outside the model's domain (e.g. an empty
    population).
    """

    name: str
    n: int
    m: int
    x0: tuple
    dynamics: Callable
    cost: Callable
    dyn_dx: Callable
    dyn_du: Callable
    cost_dx: Callable
    cost_du: Callable
    lower: tuple
    upper: tuple
    T: float
    state_ok: Optional[Callable] = None
    state_names: tuple = ()
    control_names: tuple = ()
    params: object = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.x0) != self.n:
            raise ContractError(f"x0 has {len(self.x0)} entries, expected n={self.n}")
        if len(self.lower) != self.m or len(self.upper) != self.m:
            raise ContractError("control bounds must have length m")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise ContractError(f"control bounds need lower < upper, got [{lo}, {hi}]")
        if not self.state_names:
            object.__setattr__(self, "state_names", tuple(f"x_{i + 1}" for i in range(self.n)))
        if not self.control_names:
            object.__setattr__(self, "control_names", tuple(f"u_{j + 1}" for j in range(self.m)))

    def mesh(self, N) -> Mesh:
        return Mesh(self.T, N)

    def clip(self, u):
        """Clamp an ``m x N`` control array onto the box."""
        u = np.asarray(u, dtype=float)
        lo = np.asarray(self.lower)[:, None]
        hi = np.asarray(self.upper)[:, None]
        return np.minimum(np.maximum(u, lo), hi)


@dataclass
class Trajectory:
    """States ``n x (N+1)``, adjoints ``n x N`` and controls ``m x N``."""

    mesh: Mesh
    x: np.ndarray
    lam: np.ndarray
    u: np.ndarray


def _as_controls(problem, mesh, u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 1 and problem.m == 1:
        u = u[None, :]
    if u.shape != (problem.m, mesh.N):
        raise ContractError(f"controls must have shape {(problem.m, mesh.N)}, got {u.shape}")
    return u


def _as_states(problem, mesh, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n, mesh.N + 1):
        raise ContractError(f"states must have shape {(problem.n, mesh.N + 1)}, got {x.shape}")
    return x


def _block(entries, shape, N):
    """Broadcast a nested list of scalars/arrays into ``shape + (N,)``."""
    out = np.empty(shape + (N,))
    if len(shape) == 1:
        for i in range(shape[0]):
            out[i] = entries[i]
    else:
        for i in range(shape[0]):
            row = entries[i]
            for j in range(shape[1]):
                out[i, j] = row[j]
    return out


def rollout_state(problem: ControlProblem, mesh: Mesh, u) -> np.ndarray:
    """Explicit Euler rollout ``x_{k+1} = x_k + h f(x_k, u_k)``.

    Returns the ``n x (N+1)`` state array.  Raises
    :class:`RolloutDivergedError` at the first node whose state is not
    finite or fails the problem's domain check.
    """
    u = _as_controls(problem, mesh, u)
    h = mesh.h
    n = problem.n
    f = problem.dynamics
    cols = u.T.tolist()
    xk = list(problem.x0)
    rows = [xk]
    k = 0
    try:
        for k in range(mesh.N):
            fk = f(xk, cols[k])
            xk = [xk[i] + h * fk[i] for i in range(n)]
            rows.append(xk)
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        raise RolloutDivergedError(k + 1, f"rollout failed at node {k + 1}: {exc}") from exc
    x = np.array(rows).T
    bad = ~np.all(np.isfinite(x), axis=0)
    if problem.state_ok is not None:
        with np.errstate(all="ignore"):
            bad |= ~np.asarray(problem.state_ok(x), dtype=bool)
    if bad.any():
        raise RolloutDivergedError(int(np.argmax(bad)))
    return x


def discrete_cost(problem: ControlProblem, mesh: Mesh, x, u) -> float:
    """Left-rectangle sum ``sum_{k<N} h g(x_k, u_k)``."""
    u = _as_controls(problem, mesh, u)
    x = _as_states(problem, mesh, x)
    with np.errstate(all="ignore"):
        g = np.broadcast_to(np.asarray(problem.cost(x[:, :-1], u), dtype=float), (mesh.N,))
    bad = ~np.isfinite(g)
    if bad.any():
        raise CostEvaluationError(int(np.argmax(bad)))
    return float(mesh.h * math.fsum(g))


def backward_adjoint(problem: ControlProblem, mesh: Mesh, x, u) -> np.ndarray:
    """Discrete adjoint of the Euler/left-rectangle transcription.

    ``lam[:, N-1] = 0`` and, for ``k = N-1 .. 1``::

        lam[i, k-1] = lam[i, k] + h dg/dx_i(x_k, u_k)
                      + h sum_l lam[l, k] df_l/dx_i(x_k, u_k)

    The ``k = 1`` step defines ``lam[:, 0]``.
    """
    u = _as_controls(problem, mesh, u)
    x = _as_states(problem, mesh, x)
    n, N, h = problem.n, mesh.N, mesh.h
    lam = np.zeros((n, N))
    xs, us = x[:, 1:N], u[:, 1:N]
    with np.errstate(all="ignore"):
        jac = _block(problem.dyn_dx(xs, us), (n, n), N - 1)
        gx = _block(problem.cost_dx(xs, us), (n,), N - 1)
    # step operator per node: lam_{k-1} = (I + h J_k^T) lam_k + h gx_k
    step = h * jac.transpose(2, 1, 0)
    step[:, range(n), range(n)] += 1.0
    step = step.tolist()
    forcing = (h * gx.T).tolist()
    out = [None] * N
    lk = [0.0] * n
    out[N - 1] = lk
    idx = range(n)
    for k in range(N - 2, -1, -1):
        M = step[k]
        c = forcing[k]
        lk = [sum(M[i][l] * lk[l] for l in idx) + c[i] for i in idx]
        out[k] = lk
    lam[:] = np.array(out).T
    lam[:, N - 1] = 0.0
    return lam


def gradient_via_lagrangian(problem: ControlProblem, mesh: Mesh, x, u, lam) -> np.ndarray:
    """Gradient of the reduced discrete cost with respect to ``u``.

    Entry ``(j, k)`` is ``h dg/du_j + h sum_i lam[i, k] df_i/du_j`` at node k.
    """
    u = _as_controls(problem, mesh, u)
    x = _as_states(problem, mesh, x)
    lam = np.asarray(lam, dtype=float)
    n, m, N = problem.n, problem.m, mesh.N
    if lam.shape != (n, N):
        raise ContractError(f"adjoints must have shape {(n, N)}, got {lam.shape}")
    xs = x[:, :N]
    fu = _block(problem.dyn_du(xs, u), (n, m), N)
    gu = _block(problem.cost_du(xs, u), (m,), N)
    return mesh.h * (gu + np.einsum("ik,ijk->jk", lam, fu))


def solve_trajectory(problem: ControlProblem, mesh: Mesh, u) -> Trajectory:
    """Rollout plus adjoint sweep for a given control."""
    u = _as_controls(problem, mesh, u).copy()
    x = rollout_state(problem, mesh, u)
    lam = backward_adjoint(problem, mesh, x, u)
    return Trajectory(mesh, x, lam, u)


def reduced_cost(problem: ControlProblem, mesh: Mesh, u) -> float:
    u = _as_controls(problem, mesh, u)
    return discrete_cost(problem, mesh, rollout_state(problem, mesh, u), u)


def reduced_gradient(problem: ControlProblem, mesh: Mesh, u) -> np.ndarray:
    traj = solve_trajectory(problem, mesh, u)
    return gradient_via_lagrangian(problem, mesh, traj.x, traj.u, traj.lam)


def control_affinity_defect(problem: ControlProblem, x: Sequence, u, du) -> float:
    """Largest change of ``df/du`` and ``dg/du`` when ``u`` moves by ``du``.

    Zero (to rounding) for control-affine problems.
    """
    u2 = [a + b for a, b in zip(u, du)]
    fu1 = np.asarray(_block(problem.dyn_du(x, u), (problem.n, problem.m), 1))
    fu2 = np.asarray(_block(problem.dyn_du(x, u2), (problem.n, problem.m), 1))
    gu1 = np.asarray(_block(problem.cost_du(x, u), (problem.m,), 1))
    gu2 = np.asarray(_block(problem.cost_du(x, u2), (problem.m,), 1))
    return float(max(np.max(np.abs(fu1 - fu2)), np.max(np.abs(gu1 - gu2))))
