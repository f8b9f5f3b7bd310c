"""Proximal-gradient backend for single-channel problems.

Solves ``min J(u) + rho V(u)`` over a box by forward steps on ``J``
followed by the exact one-dimensional TV proximal map and a clip.  For a
1-D chain the clip of the TV prox is already the prox of TV plus the box
indicator, so one pass reaches the joint fixed point.
"""

from __future__ import annotations

import math
import time

import numpy as np

from ..errors import ContractError
from ..ocp import ControlProblem, Mesh, discrete_cost, gradient_via_lagrangian, solve_trajectory
from .nlp import SolveReport, SolverConfig
from .pasa import _EVAL_ERRORS
from .projection import Projector

__all__ = ["tv_prox", "prox_tv_backend"]

_EPS = np.finfo(float).eps


def tv_prox(y, lam):
    """``argmin_x 0.5 ||x - y||^2 + lam * sum |x_{k+1} - x_k|``.

    Direct taut-string style scan (Condat's algorithm), linear in practice.
    """
    y = [float(v) for v in np.asarray(y, dtype=float).ravel()]
    n = len(y)
    if lam < 0:
        raise ContractError("TV weight must be nonnegative")
    if n == 0 or lam == 0:
        return np.array(y)
    out = [0.0] * n
    k = k0 = kminus = kplus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    twolam, minlam = 2.0 * lam, -lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = kminus = k0
                vmin, umin = y[k], lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = kplus = k0
                vmax, umax = y[k], minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                for i in range(k0, k + 1):
                    out[i] = vmin
                return np.array(out)
        umin += y[k + 1] - vmin
        if umin < minlam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = kplus = kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin, umax = lam, minlam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            while True:
                out[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = kplus = kminus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin, umax = lam, minlam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= minlam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = minlam


def prox_tv_backend(problem: ControlProblem, mesh: Mesh, rho: float,
                    cfg: SolverConfig = SolverConfig(), u0=None) -> SolveReport:
    """Proximal gradient on ``J + rho V`` for a problem with one control.

    Stops on the same measure as :func:`singctrl.solver.solve`, evaluated at
    the complementary lift ``(u, zeta, iota)`` of the iterate.  The returned
    report carries that lifted point in ``z``.
    """
    from ..tv import DecomposedLayout, total_variation

    if problem.m != 1:
        raise ContractError("the prox-TV backend handles a single control channel")
    if not 0.0 <= rho < 1.0:
        raise ContractError(f"penalty weight must lie in [0, 1), got {rho}")
    t_start = time.perf_counter()
    lo, hi = float(problem.lower[0]), float(problem.upper[0])
    N = mesh.N
    lay = DecomposedLayout(1, N)
    zlo, zhi = lay.bounds(problem.lower, problem.upper)
    proj = Projector(zlo, zhi, lay.constraint_matrix(), tol=cfg.proj_tol)
    slack = np.full(N - 1, rho)
    count = 0

    def evaluate(u):
        nonlocal count
        count += 1
        try:
            tr = solve_trajectory(problem, mesh, u[None, :])
            J = discrete_cost(problem, mesh, tr.x, tr.u)
            g = gradient_via_lagrangian(problem, mesh, tr.x, tr.u, tr.lam)[0]
        except _EVAL_ERRORS:
            return math.inf, None
        if not (math.isfinite(J) and np.all(np.isfinite(g))):
            return math.inf, None
        return J, g

    def measure(u, g):
        z = lay.pack(u[None, :])
        gz = np.concatenate([g, slack, slack])
        return float(np.max(np.abs(proj(z - gz) - z)))

    def step(u, g, a):
        return np.clip(tv_prox(u - a * g, a * rho), lo, hi)

    u = np.clip(np.zeros(N) if u0 is None else np.asarray(u0, dtype=float).ravel(), lo, hi)
    J, g = evaluate(u)
    if g is None:
        raise ContractError("objective is not finite at the starting point")
    F = J + rho * total_variation(u)
    E = measure(u, g)
    history = [(0, F, E, "prox")]
    alpha = cfg.initial_step
    it = 0
    reason = "converged" if E <= cfg.tol else None
    while reason is None:
        if it >= cfg.max_iters:
            reason = "max_iters"
            break
        a = alpha
        for _ in range(cfg.max_backtracks):
            p = step(u, g, a)
            d = p - u
            Jp, gp = evaluate(p)
            if gp is not None:
                # descent-lemma test with a rounding allowance
                model = J + float(g @ d) + float(d @ d) / (2.0 * a)
                if Jp <= model + 1e3 * _EPS * (1.0 + abs(J)):
                    break
            a *= cfg.beta
        else:
            reason = "line-search-failure"
            break
        if not np.any(d):
            reason = "converged" if E <= cfg.tol else "line-search-failure"
            break
        s, yv = d, gp - g
        sy = float(s @ yv)
        alpha = min(max(float(s @ s) / sy, cfg.step_min), cfg.step_max) if sy > 0 else a
        u, J, g = p, Jp, gp
        F = J + rho * total_variation(u)
        it += 1
        E = measure(u, g)
        history.append((it, F, E, "prox"))
        if E <= cfg.tol:
            reason = "converged"
    return SolveReport(
        z=lay.pack(u[None, :]), objective=F, stationarity=E, reason=reason,
        iterations={"gradient_projection": it, "face": 0}, evaluations=count,
        wall_time=time.perf_counter() - t_start, history=history,
    )
