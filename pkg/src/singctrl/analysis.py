"""Error norms, switch detection, oscillation diagnosis and experiment drivers."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, SingCtrlError
from .ocp import ControlProblem, Mesh, discrete_cost, solve_trajectory
from .problems import fishery_exact, plant_classify, plant_exact
from .solver import SolveReport, SolverConfig, prox_tv_backend, solve
from .tv import TVWeights, assemble_nlp, total_variation

__all__ = [
    "Switch",
    "ExperimentReport",
    "LinearFit",
    "ConvergenceTable",
    "grid_l1_error",
    "grid_linf_error",
    "classify_levels",
    "detect_switches",
    "first_time_at",
    "singular_region",
    "oscillation_count",
    "switch_tolerance",
    "oscillation_threshold",
    "fit_loglog",
    "studentized_residuals",
    "convergence_table",
    "exact_control",
    "run_experiment",
    "rho_sweep",
    "convergence_study",
    "BACKENDS",
]

BACKENDS = ("polyhedral", "prox-tv")

#: Oscillation flag threshold on the reversal count.
OSCILLATION_FLAG_COUNT = 5


def switch_tolerance(lower, upper) -> float:
    """Level-matching tolerance ``1e-3 (upper - lower)``."""
    return 1e-3 * (float(upper) - float(lower))


def oscillation_threshold(lower, upper) -> float:
    """Jump size counted as a reversal, ``0.05 (upper - lower)``."""
    return 0.05 * (float(upper) - float(lower))


def _sample(u_num, u_exact_fn, mesh):
    u = np.asarray(u_num, dtype=float).ravel()
    if u.size != mesh.N:
        raise ContractError(f"expected {mesh.N} control values, got {u.size}")
    ue = np.broadcast_to(np.asarray(u_exact_fn(mesh.left_nodes), dtype=float), u.shape)
    return u, ue


def grid_l1_error(u_num, u_exact_fn: Callable, mesh: Mesh) -> float:
    """``sum_k h |u_k - u_exact(t_k)|`` with the exact control sampled at left nodes."""
    u, ue = _sample(u_num, u_exact_fn, mesh)
    return float(mesh.h * math.fsum(np.abs(u - ue)))


def grid_linf_error(u_num, u_exact_fn: Callable, mesh: Mesh) -> float:
    u, ue = _sample(u_num, u_exact_fn, mesh)
    return float(np.max(np.abs(u - ue), initial=0.0))


@dataclass(frozen=True)
class Switch:
    """Change of level classification at mesh node ``time``.

    Levels are target values; ``None`` stands for the interior
    (neither bound) and for "before the start" in the first record.
    """

    time: float
    from_level: Optional[float]
    to_level: Optional[float]


def classify_levels(u, levels: Sequence[float], eps: float) -> list:
    """Nearest level within ``eps`` for each entry, else ``None``."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    u = np.asarray(u, dtype=float).ravel()
    lv = np.asarray(levels, dtype=float)
    if lv.size == 0:
        return [None] * u.size
    dist = np.abs(u[:, None] - lv[None, :])
    idx = np.argmin(dist, axis=1)
    near = dist[np.arange(u.size), idx] <= eps
    return [float(lv[i]) if ok else None for i, ok in zip(idx, near)]


def detect_switches(u_num, mesh: Mesh, levels: Sequence[float], eps: float) -> list:
    """Every change of level classification along the mesh.

    The first record marks the classification at ``t = 0``; later records
    are nodes where it differs from the previous node.
    """
    labels = classify_levels(u_num, levels, eps)
    t = mesh.left_nodes
    out = []
    prev = object()
    for k, lab in enumerate(labels):
        if k == 0 or lab != prev:
            out.append(Switch(float(t[k]), None if k == 0 else prev, lab))
        prev = lab
    return out


def first_time_at(u_num, mesh: Mesh, level: float, eps: float) -> Optional[float]:
    """First node where ``|u_k - level| <= eps``."""
    u = np.asarray(u_num, dtype=float).ravel()
    hit = np.nonzero(np.abs(u - level) <= eps)[0]
    return float(mesh.left_nodes[hit[0]]) if hit.size else None


def singular_region(u_num, mesh: Mesh, levels: Sequence[float], eps: float):
    """``(t_start, t_end)`` between the leading and trailing bang segments.

    ``t_start`` is the first node after the leading run at one level (0 when
    the control starts off any level) and ``t_end`` the first node of the
    trailing run at one level (``T`` when it ends off every level).
    Returns ``None`` when the whole control sits on one level.
    """
    labels = classify_levels(u_num, levels, eps)
    N = len(labels)
    t = mesh.left_nodes
    i = 0
    if labels[0] is not None:
        while i < N and labels[i] == labels[0]:
            i += 1
    if i == N:
        return None
    j = N
    if labels[-1] is not None:
        while j > i and labels[j - 1] == labels[-1]:
            j -= 1
    start = float(t[i])
    end = float(t[j]) if j < N else float(mesh.T)
    return start, end


def oscillation_count(u_num, mesh: Optional[Mesh], delta: float):
    """Direction reversals among jumps larger than ``delta``.

    Jumps of size at most ``delta`` are ignored; the count is the number of
    sign changes between successive remaining jumps.  Returns
    ``(count, count >= 5)``.
    """
    if not delta > 0:
        raise ContractError("delta must be positive")
    d = np.diff(np.asarray(u_num, dtype=float).ravel())
    big = np.sign(d[np.abs(d) > delta])
    count = int(np.count_nonzero(big[1:] != big[:-1])) if big.size > 1 else 0
    return count, count >= OSCILLATION_FLAG_COUNT


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def fit_loglog(h, err, mask=None) -> Optional[LinearFit]:
    """Least squares ``ln(err) = slope ln(h) + intercept`` over ``mask``."""
    x = np.log(np.asarray(h, dtype=float))
    y = np.log(np.asarray(err, dtype=float))
    if mask is not None:
        x, y = x[mask], y[mask]
    if x.size < 2 or np.ptp(x) == 0:
        return None
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(res @ res) / ss if ss > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r2)


def studentized_residuals(x, y) -> np.ndarray:
    """Internally studentized residuals of a straight-line fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        return np.zeros(n)
    X = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    lev = np.einsum("ij,ji->i", X, np.linalg.solve(X.T @ X, X.T))
    s2 = float(r @ r) / (n - 2)
    if s2 == 0:
        return np.zeros(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r / np.sqrt(s2 * (1.0 - lev))
    return np.where(np.isfinite(out), out, 0.0)


@dataclass
class ConvergenceTable:
    """Mesh study rows sorted by decreasing ``h``.

    ``ratio[i] = err[i-1] / err[i]`` compares each mesh with the coarser
    one before it (so ``ratio[0]`` is undefined and stored as NaN).
    """

    h: np.ndarray
    err: np.ndarray
    ratio: np.ndarray
    log2_ratio: np.ndarray
    fit: Optional[LinearFit]
    fit_without_outliers: Optional[LinearFit]
    outliers: np.ndarray
    reports: list = field(default_factory=list, repr=False)

    def rows(self):
        return list(zip(self.h, self.err, self.ratio, self.log2_ratio))


def convergence_table(h, err, threshold: float = 2.0) -> ConvergenceTable:
    """Ratios and log-log fits for errors measured on a mesh sequence."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if h.shape != err.shape or h.ndim != 1:
        raise ContractError("h and err must be 1-D and of equal length")
    order = np.argsort(-h, kind="stable")
    h, err = h[order], err[order]
    ratio = np.full(h.size, np.nan)
    halved = np.isclose(h[1:] * 2.0, h[:-1], rtol=1e-9)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio[1:] = np.where(halved, err[:-1] / err[1:], np.nan)
        log2 = np.log2(ratio)
    usable = (err > 0) & np.isfinite(err)
    fit = fit_loglog(h, err, usable) if h.size >= 2 else None
    outliers = np.zeros(h.size, dtype=bool)
    fit_clean = fit
    if fit is not None and usable.sum() >= 3:
        idx = np.nonzero(usable)[0]
        st = studentized_residuals(np.log(h[idx]), np.log(err[idx]))
        outliers[idx[np.abs(st) > threshold]] = True
        if outliers.any():
            fit_clean = fit_loglog(h, err, usable & ~outliers)
    return ConvergenceTable(h, err, ratio, log2, fit, fit_clean, outliers)


def exact_control(problem: ControlProblem) -> Optional[Callable]:
    """Analytic optimal control of a benchmark problem, if one is known."""
    if problem.name == "fishery":
        return fishery_exact(problem.params).u
    if problem.name == "plant" and plant_classify(problem.params) in ("2a", "2b", "2c"):
        return plant_exact(problem.params).u
    return None


@dataclass
class ExperimentReport:
    """Diagnostics of one solve; per-channel fields are lists of length ``m``."""

    rho: tuple
    l1_error: Optional[float]
    linf_error: Optional[float]
    switches: list
    first_upper: list
    singular_region: list
    oscillation_count: list
    oscillation_flag: list
    total_variation: list
    objective_penalized: float
    objective_unpenalized: float
    solver: dict
    N: int = 0
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "rho": list(self.rho),
            "N": self.N,
            "l1_error": self.l1_error,
            "linf_error": self.linf_error,
            "switches": [[s.time for s in ch] for ch in self.switches],
            "first_upper": self.first_upper,
            "singular_region": [list(r) if r else None for r in self.singular_region],
            "oscillation_count": self.oscillation_count,
            "oscillation_flag": self.oscillation_flag,
            "total_variation": self.total_variation,
            "objective_penalized": self.objective_penalized,
            "objective_unpenalized": self.objective_unpenalized,
            "solver": self.solver,
            "error": self.error,
        }


def _initial_controls(problem, mesh, u0):
    if u0 is None:
        u0 = np.zeros(problem.m)
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim <= 1:
        u0 = np.repeat(np.broadcast_to(u0, (problem.m,))[:, None], mesh.N, axis=1)
    return problem.clip(u0)


def _solve(problem, mesh, weights, cfg, backend, u0):
    if backend == "polyhedral":
        nlp = assemble_nlp(problem, mesh, weights)
        rep = solve(nlp, nlp.layout.pack(u0), cfg)
        return rep, nlp.layout.controls(rep.z)
    if backend == "prox-tv":
        rep = prox_tv_backend(problem, mesh, weights.rho[0], cfg, u0=u0[0])
        return rep, rep.z[: mesh.N][None, :]
    raise ContractError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


def summarize(problem: ControlProblem, mesh: Mesh, weights: TVWeights, u, rep: SolveReport,
              exact: Optional[Callable] = None):
    """Build the :class:`ExperimentReport` and trajectory for controls ``u``."""
    traj = solve_trajectory(problem, mesh, u)
    J = discrete_cost(problem, mesh, traj.x, traj.u)
    tvs = [total_variation(row) for row in traj.u]
    switches, first_up, regions, counts, flags = [], [], [], [], []
    for j in range(problem.m):
        lo, hi = problem.lower[j], problem.upper[j]
        eps = switch_tolerance(lo, hi)
        switches.append(detect_switches(traj.u[j], mesh, (lo, hi), eps))
        first_up.append(first_time_at(traj.u[j], mesh, hi, eps))
        regions.append(singular_region(traj.u[j], mesh, (lo, hi), eps))
        c, f = oscillation_count(traj.u[j], mesh, oscillation_threshold(lo, hi))
        counts.append(c)
        flags.append(f)
    l1 = linf = None
    if exact is not None:
        l1 = grid_l1_error(traj.u[0], exact, mesh)
        linf = grid_linf_error(traj.u[0], exact, mesh)
    report = ExperimentReport(
        rho=tuple(weights.rho), l1_error=l1, linf_error=linf, switches=switches,
        first_upper=first_up, singular_region=regions, oscillation_count=counts,
        oscillation_flag=flags, total_variation=tvs,
        objective_penalized=J + sum(r * v for r, v in zip(weights.rho, tvs)),
        objective_unpenalized=J, solver=rep.summary(), N=mesh.N,
    )
    return report, traj


def run_experiment(problem: ControlProblem, mesh: Mesh, weights: TVWeights,
                   cfg: SolverConfig = SolverConfig(), backend: str = "polyhedral", u0=None):
    """Solve one penalized instance and measure it.

    Returns ``(ExperimentReport, Trajectory, SolveReport)``.
    """
    u0 = _initial_controls(problem, mesh, u0)
    rep, u = _solve(problem, mesh, weights, cfg, backend, u0)
    report, traj = summarize(problem, mesh, weights, u, rep, exact_control(problem))
    return report, traj, rep


def _threads() -> int:
    raw = os.environ.get("SINGCTRL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ContractError(f"SINGCTRL_THREADS must be an integer, got {raw!r}") from None


def rho_sweep(problem: ControlProblem, mesh: Mesh, rhos: Sequence, cfg: SolverConfig = SolverConfig(),
              backend: str = "polyhedral", u0=None, channels: Optional[Sequence[int]] = None):
    """One solve per penalty value, all from the same initial guess.

    A scalar entry of ``rhos`` is applied to the channels listed in
    ``channels`` (all by default) and the rest get zero.  Failures are
    recorded in the report's ``error`` field and the sweep continues.
    Results follow the input order.

    Returns a list of ``(ExperimentReport, Trajectory or None)``.
    """
    if len(rhos) == 0:
        raise ContractError("rho list is empty")
    chans = range(problem.m) if channels is None else channels
    weights = []
    for r in rhos:
        if np.ndim(r) == 0:
            w = [0.0] * problem.m
            for j in chans:
                w[j] = float(r)
            weights.append(TVWeights(tuple(w)))
        else:
            weights.append(TVWeights(tuple(r)))

    def one(w):
        try:
            rep, traj, _ = run_experiment(problem, mesh, w, cfg, backend, u0)
            return rep, traj
        except SingCtrlError as exc:
            failed = ExperimentReport(
                rho=w.rho, l1_error=None, linf_error=None, switches=[[] for _ in range(problem.m)],
                first_upper=[None] * problem.m, singular_region=[None] * problem.m,
                oscillation_count=[0] * problem.m, oscillation_flag=[False] * problem.m,
                total_variation=[math.nan] * problem.m, objective_penalized=math.nan,
                objective_unpenalized=math.nan, solver={}, N=mesh.N, error=str(exc))
            return failed, None

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(one, weights))


def convergence_study(problem: ControlProblem, rho, meshes: Sequence[float],
                      cfg: SolverConfig = SolverConfig(), backend: str = "polyhedral",
                      u0=None, threshold: float = 2.0) -> ConvergenceTable:
    """Solve on each step size in ``meshes`` and fit ``ln err`` against ``ln h``.

    The error is the grid L1 distance to the analytic control.  A solve
    failure is re-raised with the offending ``h`` in its message.
    """
    exact = exact_control(problem)
    if exact is None:
        raise ContractError(f"problem {problem.name!r} has no analytic control")
    weights = TVWeights.uniform(rho, problem.m) if np.ndim(rho) == 0 else TVWeights(tuple(rho))
    hs = [float(h) for h in meshes]

    def one(h):
        mesh = Mesh.from_step(problem.T, h)
        try:
            rep, _, _ = run_experiment(problem, mesh, weights, cfg, backend, u0)
        except SingCtrlError as exc:
            raise SingCtrlError(f"h = {h}: {exc}") from exc
        return rep

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        reports = list(pool.map(one, hs))
    table = convergence_table(hs, [r.l1_error for r in reports], threshold)
    order = np.argsort(-np.asarray(hs), kind="stable")
    table.reports = [reports[i] for i in order]
    return table
