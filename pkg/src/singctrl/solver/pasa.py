"""Two-phase active-set minimizer over a polyhedron.

Phase one is gradient projection with Barzilai-Borwein trial steps and
Armijo backtracking along the projected direction.  Once the set of
variables sitting on a bound stops changing, phase two minimizes over the
current face (active bounds frozen, ``B d = 0``) with limited-memory quasi
Newton steps.  It hands control back when a new bound becomes active, when
its decrease stalls relative to phase one, or when the face is stationary
but the full problem is not.

Termination uses ``E(z) = ||P(z - grad J(z)) - z||_inf``.
"""

from __future__ import annotations

import math
import time
from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import CostEvaluationError, InfeasibleError, RolloutDivergedError
from .nlp import PolyhedralNLP, SolveReport, SolverConfig
from .projection import Projector

__all__ = ["solve", "stationarity"]

_EPS = np.finfo(float).eps
_EVAL_ERRORS = (RolloutDivergedError, CostEvaluationError, FloatingPointError, OverflowError)


def stationarity(nlp: PolyhedralNLP, z, g=None, projector=None) -> float:
    """``||P(z - g) - z||_inf`` with ``g = grad J(z)`` unless supplied."""
    z = np.asarray(z, dtype=float)
    if g is None:
        g = nlp.gradient(z)
    proj = projector or Projector(nlp.lo, nlp.hi, nlp.B)
    return float(np.max(np.abs(proj(z - g) - z), initial=0.0))


class _Evaluator:
    """Counts evaluations and maps model failures to ``+inf``."""

    def __init__(self, nlp):
        self.vg = nlp.value_and_gradient
        self.count = 0

    def __call__(self, z):
        self.count += 1
        try:
            J, g = self.vg(z)
        except _EVAL_ERRORS:
            return math.inf, None
        J = float(J)
        if not math.isfinite(J):
            return math.inf, None
        g = np.asarray(g, dtype=float)
        if not np.all(np.isfinite(g)):
            return math.inf, None
        return J, g


class _Face:
    """Orthogonal projector onto ``{d : d_A = 0, B d = 0}`` for a fixed active set."""

    def __init__(self, B, free):
        self.free = free
        Bf = B[:, free]
        rows = np.diff(Bf.tocsr().indptr) > 0
        self.Bf = Bf.tocsr()[rows]
        if self.Bf.shape[0]:
            M = (self.Bf @ self.Bf.T).tocsc()
            scale = max(1.0, float(M.diagonal().max()))
            self.lu = splu((M + sp.identity(M.shape[0]) * 1e-14 * scale).tocsc())
        else:
            self.lu = None

    def __call__(self, v):
        out = np.zeros_like(v)
        vf = v[self.free]
        if self.lu is not None:
            r = self.Bf @ vf
            vf = vf - self.Bf.T @ self.lu.solve(r)
            # one refinement pass keeps B d at rounding level
            r = self.Bf @ vf
            vf = vf - self.Bf.T @ self.lu.solve(r)
        out[self.free] = vf
        return out


def _two_loop(q, pairs, gamma):
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q = q - a * y
    r = gamma * q
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ r)
        r = r + (a - b) * s
    return r


def _active(z, lo, hi):
    return (z <= lo) | (z >= hi)


def solve(nlp: PolyhedralNLP, z0, cfg: SolverConfig = SolverConfig(), callback=None) -> SolveReport:
    """Minimize ``nlp`` from ``z0`` (projected first).

    Parameters
    ----------
    nlp : PolyhedralNLP
    z0 : array_like
        Starting point; need not be feasible.
    cfg : SolverConfig
    callback : callable, optional
        Called as ``callback(it, z, J, E, phase)`` after each accepted step.

    Returns
    -------
    SolveReport
    """
    t_start = time.perf_counter()
    lo, hi, B = nlp.lo, nlp.hi, nlp.B
    step_proj = Projector(lo, hi, B, tol=cfg.proj_tol)
    stat_proj = Projector(lo, hi, B, tol=cfg.proj_tol)
    evaluate = _Evaluator(nlp)

    z = step_proj(np.asarray(z0, dtype=float))
    J, g = evaluate(z)
    if g is None:
        raise RolloutDivergedError(0, "objective is not finite at the starting point")

    def measure(z, g):
        return float(np.max(np.abs(stat_proj(z - g) - z), initial=0.0))

    def check_feasible(z):
        assert np.all(z >= lo) and np.all(z <= hi), "iterate left the box"
        assert np.max(np.abs(B @ z), initial=0.0) <= 10 * cfg.proj_tol * max(1.0, np.max(np.abs(z))), \
            "iterate violates the equality rows"

    E = measure(z, g)
    iters = {"gradient_projection": 0, "face": 0}
    history = [(0, J, E, "start")]
    reason = "converged" if E <= cfg.tol else None
    alpha = cfg.initial_step
    prev_active = None
    phase = 1
    last_p1_decrease = math.inf
    face = None
    pairs = deque(maxlen=max(cfg.face_memory, 1))
    gamma = 1.0
    # a trial step never moves any entry by more than this multiple of the box scale
    finite_width = (hi - lo)[np.isfinite(hi - lo)]
    step_cap = 1e4 * max(1.0, float(np.max(finite_width, initial=1.0)))

    def accept(J_old, J_new, gd, t, g_new, d):
        """Armijo, or its rounding-level variant near stationarity."""
        if J_new <= J_old + cfg.sigma * t * gd:
            return True
        eps_f = 1e3 * _EPS * (1.0 + abs(J_old))
        if J_new <= J_old + eps_f and g_new is not None:
            return g_new @ d <= -(1.0 - 2 * 0.1) * gd
        return False

    total = 0
    retried = False
    while reason is None:
        if total >= cfg.max_iters:
            reason = "max_iters"
            break
        if phase == 1:
            gn = float(np.max(np.abs(g)))
            alpha_eff = min(alpha, step_cap * max(1.0, float(np.max(np.abs(z)))) / gn) if gn > 0 else alpha
            try:
                p = step_proj(z - alpha_eff * g)
            except InfeasibleError:
                # far-off trial points can stall the dual Newton; retry closer in
                step_proj.reset()
                alpha = max(alpha_eff * 1e-3, cfg.step_min)
                if alpha_eff <= cfg.step_min:
                    raise
                continue
            d = p - z
            gd = float(g @ d)
            dn = float(np.max(np.abs(d), initial=0.0))
            noise = 64 * _EPS * float(np.abs(g) @ np.abs(d))
            if dn == 0.0 or gd >= -noise:
                # the slope is below rounding: take the projected point if J does not rise
                if E <= cfg.tol:
                    reason = "converged"
                    break
                Jt, gt = evaluate(p) if dn > 0.0 else (math.inf, None)
                if gt is None or Jt > J + 1e3 * _EPS * (1.0 + abs(J)):
                    if alpha_eff < cfg.initial_step and not retried:
                        alpha, retried = cfg.initial_step, True
                        continue
                    reason = "line-search-failure"
                    break
                zt, t = p, 1.0
            else:
                t = 1.0
                gt = None
                for _ in range(cfg.max_backtracks):
                    zt = p if t == 1.0 else z + t * d
                    Jt, gt = evaluate(zt)
                    if accept(J, Jt, gd, t, gt, d):
                        break
                    gt = None
                    t *= cfg.beta
                    if t * dn <= _EPS * max(1.0, float(np.max(np.abs(z)))):
                        break
                if gt is None:
                    reason = "line-search-failure"
                    break
            retried = False
            s, y = zt - z, gt - g
            sy = float(s @ y)
            if sy > 0:
                alpha = min(max(float(s @ s) / sy, cfg.step_min), cfg.step_max)
            last_p1_decrease = J - Jt
            z, J, g = zt, Jt, gt
            iters["gradient_projection"] += 1
            total += 1
            act = _active(z, lo, hi)
            if prev_active is not None and np.array_equal(act, prev_active):
                phase = 2
                face = _Face(B, ~act)
                pairs.clear()
                gamma = alpha
            prev_active = act
        else:
            pg = face(g)
            pgn = float(np.max(np.abs(pg), initial=0.0))
            if pgn <= 0.1 * cfg.tol:
                phase, prev_active = 1, None
                continue
            d = -_two_loop(pg, list(pairs), gamma) if pairs else -gamma * pg
            d = face(d)
            gd = float(g @ d)
            if not (gd < 0 and np.all(np.isfinite(d))):
                pairs.clear()
                d = -gamma * pg
                gd = float(g @ d)
                if not gd < 0:
                    phase, prev_active = 1, None
                    continue
            free = face.free
            dneg = free & (d < 0)
            dpos = free & (d > 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                tmax = min(np.min((lo[dneg] - z[dneg]) / d[dneg], initial=np.inf),
                           np.min((hi[dpos] - z[dpos]) / d[dpos], initial=np.inf))
            t = min(1.0, tmax)
            dn = float(np.max(np.abs(d)))
            ok = False
            for _ in range(cfg.max_backtracks):
                zt = z + t * d
                Jt, gt = evaluate(zt)
                if accept(J, Jt, gd, t, gt, d):
                    ok = True
                    break
                t *= cfg.beta
                if t * dn <= _EPS * max(1.0, float(np.max(np.abs(z)))):
                    break
            if not ok or gt is None:
                phase, prev_active = 1, None
                continue
            hit = t >= tmax
            if hit:
                zt = np.clip(zt, lo, hi)
                with np.errstate(invalid="ignore"):
                    near_lo = free & (d < 0) & (np.abs(zt - lo) <= 4 * _EPS * (1 + np.abs(lo)))
                    near_hi = free & (d > 0) & (np.abs(zt - hi) <= 4 * _EPS * (1 + np.abs(hi)))
                near_lo &= np.isfinite(lo)
                near_hi &= np.isfinite(hi)
                zt[near_lo] = lo[near_lo]
                zt[near_hi] = hi[near_hi]
            if np.max(np.abs(B @ zt), initial=0.0) > 0.5 * cfg.proj_tol * max(1.0, np.max(np.abs(zt))):
                try:
                    zt = step_proj(zt)
                except InfeasibleError:
                    step_proj.reset()
                    zt = step_proj(zt)
                hit = True
            if hit:
                Jt, gt = evaluate(zt)
                if gt is None or Jt > J + 1e3 * _EPS * (1.0 + abs(J)):
                    phase, prev_active = 1, None
                    continue
            dec = J - Jt
            s, y = face(zt - z), face(gt - g)
            sy = float(s @ y)
            if sy > 1e-12 * math.sqrt(float(s @ s) * float(y @ y)) and sy > 0:
                pairs.append((s, y, 1.0 / sy))
                gamma = min(max(sy / float(y @ y), cfg.step_min), cfg.step_max)
            z, J, g = zt, Jt, gt
            iters["face"] += 1
            total += 1
            if hit or dec < cfg.stall_ratio * last_p1_decrease:
                phase, prev_active = 1, None
        if cfg.debug:
            check_feasible(z)
        E = measure(z, g)
        history.append((total, J, E, "gp" if phase == 1 else "face"))
        if callback is not None:
            callback(total, z, J, E, phase)
        if E <= cfg.tol:
            reason = "converged"

    return SolveReport(
        z=z, objective=J, stationarity=E, reason=reason, iterations=iters,
        evaluations=evaluate.count, wall_time=time.perf_counter() - t_start, history=history,
    )
