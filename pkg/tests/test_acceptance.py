"""End-to-end acceptance checks on the three benchmark problems.

Each test carries a ``criterion`` marker; the summary at the end of the run
prints one PASS/FAIL line per criterion.  Solves shared by several checks
run once per module and record their own wall time.
"""

import math
import time
import timeit

import numpy as np
import pytest

from oracles import brute_force_projection, central_difference_gradient
from singctrl.analysis import (
    convergence_study,
    detect_switches,
    run_experiment,
    switch_tolerance,
)
from singctrl.ocp import reduced_cost, reduced_gradient
from singctrl.problems import (
    PlantParams,
    fishery_exact,
    fishery_problem,
    plant_constants,
    plant_exact,
    plant_problem,
    sir_problem,
    sir_switching,
)
from singctrl.solver import SolverConfig, project
from singctrl.tv import DecomposedLayout, TVWeights, total_variation, tv_decompose

N = 750
FISHERY_STEPS = [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125]


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _experiment(problem, rho, tol, backend="polyhedral", n=N):
    rho = tuple(rho) + (0.0,) * (problem.m - len(rho))
    (report, traj, rep), wall = _timed(
        run_experiment, problem, problem.mesh(n), TVWeights(rho), SolverConfig(tol=tol), backend)
    return {"report": report, "traj": traj, "solve": rep, "wall": wall, "mesh": problem.mesh(n)}


@pytest.fixture(scope="module")
def fishery_penalized():
    return _experiment(fishery_problem(), (1e-2,), 1e-10)


@pytest.fixture(scope="module")
def fishery_unpenalized():
    return _experiment(fishery_problem(), (0.0,), 1e-10)


@pytest.fixture(scope="module")
def fishery_prox():
    return _experiment(fishery_problem(), (1e-2,), 1e-10, backend="prox-tv")


@pytest.fixture(scope="module")
def plant_runs():
    return {c: _experiment(plant_problem(PlantParams.case(c)), (0.0,), 1e-10) for c in ("2a", "2b", "2c")}


@pytest.fixture(scope="module")
def plant_2a_penalized():
    return _experiment(plant_problem(PlantParams.case("2a")), (1e-6,), 1e-10)


@pytest.fixture(scope="module")
def sir_unpenalized():
    return _experiment(sir_problem(), (0.0,), 1e-8)


@pytest.fixture(scope="module")
def sir_penalized():
    return _experiment(sir_problem(), (1e-1,), 1e-8)


@pytest.mark.criterion(1, "fishery exact oracle")
def test_fishery_exact_oracle():
    ex = fishery_exact()
    assert 9.5391 <= ex.t_switch <= 9.5393
    assert ex.u_s == 0.1875
    assert abs(float(ex.lam(ex.params.T))) <= 1e-10
    best = min(timeit.repeat(fishery_exact, number=1, repeat=20))
    assert best < 1e-3


@pytest.mark.criterion(2, "fishery penalized solve")
def test_fishery_penalized(fishery_penalized):
    r, mesh = fishery_penalized["report"], fishery_penalized["mesh"]
    assert fishery_penalized["solve"].converged
    assert abs(r.first_upper[0] - 9.5333) <= 2 * mesh.h
    assert 0.009 <= r.l1_error <= 0.017
    assert r.oscillation_flag[0] is False
    assert fishery_penalized["wall"] < 60


@pytest.mark.criterion(3, "fishery unpenalized solve")
def test_fishery_unpenalized(fishery_unpenalized):
    r = fishery_unpenalized["report"]
    assert r.oscillation_flag[0] is True
    assert r.l1_error > 1.0
    assert fishery_unpenalized["wall"] < 120


@pytest.mark.criterion(4, "fishery convergence study")
def test_fishery_convergence():
    table, wall = _timed(convergence_study, fishery_problem(), 1e-2, FISHERY_STEPS, SolverConfig(tol=1e-10))
    assert table.fit_without_outliers is not None
    assert 0.9 <= table.fit_without_outliers.slope <= 1.5
    assert wall < 600


@pytest.mark.criterion(5, "plant constants")
def test_plant_constants():
    c = plant_constants()
    assert abs(c.y - 2.79328213) <= 1e-7
    assert abs(c.z - 0.55763674) <= 1e-7
    assert abs(c.terminal_ratio - 3.35091887) <= 1e-7


@pytest.mark.criterion(6, "plant exact switches")
def test_plant_exact_switches():
    b = plant_exact(PlantParams.case("2b"))
    assert abs(b.t1 - 0.2678) <= 1e-3
    assert abs(b.t2 - 2.20671787) <= 1e-6
    c = plant_exact(PlantParams.case("2c"))
    assert abs(c.t1 - 1.5778) <= 1e-3


@pytest.mark.criterion(7, "plant unpenalized solves")
def test_plant_unpenalized(plant_runs):
    reference = {"2a": 11.787, "2b": 3.601, "2c": 8.613}
    for case, run in plant_runs.items():
        r = run["report"]
        assert r.l1_error <= 0.05, case
        assert abs(-r.objective_unpenalized - reference[case]) <= 1e-3 * reference[case], case


@pytest.mark.criterion(8, "plant case 2a penalized")
def test_plant_2a_penalized(plant_2a_penalized):
    r, traj = plant_2a_penalized["report"], plant_2a_penalized["traj"]
    assert r.l1_error <= 0.03
    assert traj.u[0, 0] >= 0.55


@pytest.mark.criterion(9, "SIR solves")
def test_sir(sir_unpenalized, sir_penalized):
    problem = sir_problem()
    mesh = problem.mesh(N)
    r0, rp = sir_unpenalized["report"], sir_penalized["report"]
    assert abs(r0.objective_unpenalized - 6572.955) <= 5e-3 * 6572.955
    assert r0.oscillation_flag[0] is True
    start, end = r0.singular_region[0]
    assert abs(start - 12.933) <= 1.0 and abs(end - 36.533) <= 1.0
    assert rp.oscillation_flag[0] is False
    assert rp.total_variation[0] < 0.25 * r0.total_variation[0]
    # treatment: only bound values, one change of level
    v = sir_penalized["traj"].u[1]
    eps = switch_tolerance(problem.lower[1], problem.upper[1])
    assert np.all((np.abs(v - problem.lower[1]) <= eps) | (np.abs(v - problem.upper[1]) <= eps))
    sw = detect_switches(v, mesh, (problem.lower[1], problem.upper[1]), eps)
    assert len(sw) == 2 and abs(sw[1].time - 6.4) <= 0.5
    traj = sir_penalized["traj"]
    phi_u, _ = sir_switching(problem.params, traj.x, traj.lam)
    a, b = rp.singular_region[0]
    inside = (mesh.left_nodes >= a) & (mesh.left_nodes <= b)
    assert inside.any()
    assert np.max(np.abs(phi_u[inside])) <= 1.0
    assert sir_unpenalized["wall"] < 300 and sir_penalized["wall"] < 300


@pytest.mark.criterion(10, "gradient property suite")
def test_gradient_suite():
    rng = np.random.default_rng(10)
    problems = [fishery_problem(), plant_problem(PlantParams.case("2a")), sir_problem()]
    t0 = time.perf_counter()
    for problem in problems:
        mesh = problem.mesh(12)
        lo = np.asarray(problem.lower)[:, None]
        hi = np.asarray(problem.upper)[:, None]
        for _ in range(20):
            u = lo + (hi - lo) * rng.random((problem.m, mesh.N))
            g = reduced_gradient(problem, mesh, u)
            fd = central_difference_gradient(lambda v: reduced_cost(problem, mesh, v), u)
            # relative error, floored at the gradient's own scale
            scale = np.maximum(np.abs(fd), 1e-6 * np.max(np.abs(fd)))
            assert np.max(np.abs(g - fd) / scale) <= 1e-5, problem.name
    assert time.perf_counter() - t0 < 30


def _projection_instances(rng, count):
    for i in range(count):
        if i % 2 == 0:
            m, n = (1, int(rng.integers(2, 5))) if i % 4 == 0 else (2, 2)
            lay = DecomposedLayout(m, n)
            lo, hi = lay.bounds([-rng.random()] * m, [rng.random() + 0.1] * m)
            B = lay.constraint_matrix().toarray()
        else:
            D = int(rng.integers(2, 7))
            k = int(rng.integers(1, D))
            lo = -rng.random(D)
            hi = rng.random(D)
            B = rng.standard_normal((k, D))
        z = 2.0 * rng.standard_normal(lo.size)
        yield lo, hi, B, z


@pytest.mark.criterion(11, "projection oracle suite")
def test_projection_oracle():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst = 0.0
    for lo, hi, B, z in _projection_instances(rng, 200):
        assert lo.size <= 15
        y = project(lo, hi, B, z)
        ref = brute_force_projection(lo, hi, B, z)
        assert ref is not None
        worst = max(worst, float(np.max(np.abs(y - ref))))
    assert worst <= 1e-8
    assert time.perf_counter() - t0 < 10


@pytest.mark.criterion(12, "TV decomposition properties")
def test_tv_decomposition():
    rng = np.random.default_rng(12)
    t0 = time.perf_counter()
    for _ in range(1000):
        u = rng.standard_normal(int(rng.integers(1, 40)))
        zeta, iota = tv_decompose(u)
        assert np.all(zeta * iota == 0) and np.all(zeta >= 0) and np.all(iota >= 0)
        assert np.max(np.abs(np.diff(u) - (zeta - iota)), initial=0.0) <= 1e-14
        assert abs(total_variation(u) - (math.fsum(zeta) + math.fsum(iota))) <= 1e-14
    assert time.perf_counter() - t0 < 1


@pytest.mark.criterion(13, "backend cross-check")
def test_backend_cross_check(fishery_penalized, fishery_prox):
    mesh = fishery_prox["mesh"]
    u_poly = fishery_penalized["traj"].u[0]
    u_prox = fishery_prox["traj"].u[0]
    assert mesh.h * np.sum(np.abs(u_poly - u_prox)) <= 0.005
    assert fishery_prox["wall"] < 120
