import numpy as np
import pytest
import scipy.sparse as sp

from oracles import brute_force_projection
from singctrl import InfeasibleError
from singctrl.solver import Projector, project
from singctrl.tv import DecomposedLayout


def test_bounds_only_is_clamp():
    y = project(np.zeros(3), np.ones(3), sp.csr_matrix((0, 3)), np.array([-0.5, 0.3, 2.0]))
    assert np.array_equal(y, [0.0, 0.3, 1.0])


def test_identity_on_the_set():
    lay = DecomposedLayout(2, 6)
    lo, hi = lay.bounds((0.0, 0.0), (1.0, 1.0))
    z = lay.pack(np.random.default_rng(0).random((2, 6)))
    assert np.max(np.abs(project(lo, hi, lay.constraint_matrix(), z) - z)) <= 1e-12


def test_tv_instance_matches_brute_force():
    rng = np.random.default_rng(1)
    lay = DecomposedLayout(1, 4)
    lo, hi = lay.bounds((0.0,), (1.0,))
    B = lay.constraint_matrix()
    for _ in range(20):
        z = rng.normal(0.5, 1.0, lay.size)
        ref = brute_force_projection(lo, hi, B.toarray(), z)
        assert np.max(np.abs(project(lo, hi, B, z) - ref)) <= 1e-8


def test_idempotent_and_feasible():
    rng = np.random.default_rng(2)
    lay = DecomposedLayout(2, 50)
    lo, hi = lay.bounds((0.0, -1.0), (1.0, 1.0))
    B = lay.constraint_matrix()
    P = Projector(lo, hi, B)
    for scale in (0.1, 10.0, 1e4):
        z = scale * rng.standard_normal(lay.size)
        y = P(z)
        assert np.all(y >= lo) and np.all(y <= hi)
        assert np.max(np.abs(B @ y)) <= 1e-13 * max(1.0, scale)
        assert np.max(np.abs(P(y) - y)) <= 1e-10 * max(1.0, scale)


def test_obtuse_angle_condition():
    # (z - P z) . (w - P z) <= 0 for every feasible w
    rng = np.random.default_rng(3)
    lay = DecomposedLayout(1, 30)
    lo, hi = lay.bounds((0.0,), (1.0,))
    B = lay.constraint_matrix()
    z = 3.0 * rng.standard_normal(lay.size)
    y = project(lo, hi, B, z)
    for _ in range(20):
        w = lay.pack(rng.random((1, 30)))
        assert (z - y) @ (w - y) <= 1e-9


def test_warm_start_gives_same_answer():
    rng = np.random.default_rng(4)
    lay = DecomposedLayout(1, 200)
    lo, hi = lay.bounds((0.0,), (1.0,))
    B = lay.constraint_matrix()
    P = Projector(lo, hi, B)
    z = rng.standard_normal(lay.size)
    cold = P(z, warm=False)
    P(z + 0.01 * rng.standard_normal(lay.size))
    warm = P(z)
    assert np.max(np.abs(cold - warm)) <= 1e-12


def test_far_off_point_converges():
    rng = np.random.default_rng(5)
    lay = DecomposedLayout(1, 400)
    lo, hi = lay.bounds((0.0,), (1.0,))
    B = lay.constraint_matrix()
    z = lay.pack(rng.random((1, 400)))
    z[lay.zeta_slice(0)] += 500.0 * rng.random(399)
    z[lay.u_slice(0)] -= 600.0 * rng.random(400)
    y = Projector(lo, hi, B)(z)
    assert np.max(np.abs(B @ y)) <= 1e-14 * np.max(np.abs(z))


def test_empty_set_is_reported():
    B = sp.csr_matrix(np.array([[1.0, 1.0]]))
    with pytest.raises(InfeasibleError):
        project(np.array([1.0, 1.0]), np.array([2.0, 2.0]), B, np.array([0.0, 0.0]))


def test_larger_tv_instance_matches_brute_force():
    # 13 variables: five controls plus eight slacks
    rng = np.random.default_rng(6)
    lay = DecomposedLayout(1, 5)
    lo, hi = lay.bounds((-0.3,), (0.8,))
    B = lay.constraint_matrix()
    for _ in range(3):
        z = 2.0 * rng.standard_normal(lay.size)
        ref = brute_force_projection(lo, hi, B.toarray(), z)
        assert np.max(np.abs(project(lo, hi, B, z) - ref)) <= 1e-8
