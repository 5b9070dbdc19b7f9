import numpy as np
import pytest
import scipy.linalg
from scipy import optimize

from factories import crandn
from maisac import solvers as so


def psd(rng, n, rank=None):
    a = crandn(rng, n, rank or n)
    return a @ a.conj().T


def realify(x):
    return np.concatenate([x.real, x.imag])


def complexify(v):
    n = v.size // 2
    return v[:n] + 1j * v[n:]


def test_convex_quadratic_value():
    q = so.ConvexQuadratic(np.diag([2.0, 3.0]), np.array([1.0, -1.0]), 0.5)
    x = np.array([1.0, 2.0])
    assert q.value(x) == pytest.approx(2 + 12 - 2 * (1 - 2) + 0.5)
    assert so.ConvexQuadratic(2.0, np.array([1.0, -1.0]), 0.5).value(x) == pytest.approx(10 + 2 + 0.5)


def test_rejects_indefinite_hessian():
    with pytest.raises(ValueError):
        so.ConvexQuadratic(np.diag([1.0, -1.0]), np.zeros(2))
    with pytest.raises(ValueError):
        so.ConvexQuadratic(np.eye(3), np.zeros(2))


def test_unconstrained_minimum():
    rng = np.random.default_rng(0)
    h = psd(rng, 5)
    a = crandn(rng, 5)
    x, rep = so.solve_qcqp(so.ConvexQuadratic(h, a))
    np.testing.assert_allclose(x, np.linalg.solve(h, a), rtol=1e-9)
    assert rep.status == so.OPTIMAL


def test_inactive_constraint_leaves_free_minimum():
    h, a = np.eye(2), np.array([0.1, 0.0])
    con = so.ConvexQuadratic(1.0, np.zeros(2), -1.0)  # ||x||^2 <= 1
    x, rep = so.solve_qcqp(so.ConvexQuadratic(h, a), con)
    np.testing.assert_allclose(x, a)
    assert rep.dual[0] == 0.0


def test_single_ball_projects_free_minimum():
    # Isotropic objective: the ball solution is the radial projection.
    a = np.array([3.0 + 4.0j, 0.0])
    x, rep = so.solve_qcqp(so.ConvexQuadratic(np.eye(2), a), balls=[(np.arange(2), 1.0)])
    np.testing.assert_allclose(x, a / 5.0, atol=1e-9)
    assert rep.dual[1] == pytest.approx(4.0, rel=1e-6)


def _reference(h, a, con, balls):
    n = a.size

    def f(v):
        x = complexify(v)
        return np.real(np.vdot(x, h @ x)) - 2 * np.real(np.vdot(a, x))

    cons = [{"type": "ineq", "fun": lambda v, idx=idx, r=r: r ** 2 - np.sum(np.abs(complexify(v)[idx]) ** 2)}
            for idx, r in balls]
    if con is not None:
        cons.append({"type": "ineq", "fun": lambda v: -con.value(complexify(v))})
    res = optimize.minimize(f, np.zeros(2 * n), constraints=cons, method="SLSQP",
                            options={"ftol": 1e-15, "maxiter": 2000})
    return complexify(res.x), res.fun


@pytest.mark.parametrize("seed", range(12))
def test_balls_and_quadratic_constraint_match_reference(seed):
    rng = np.random.default_rng(seed)
    n = 6
    h = psd(rng, n, rank=3) + 0.05 * np.eye(n)
    a = 3 * crandn(rng, n)
    balls = [(np.arange(3), 1.0), (np.arange(3, 6), 0.7)]
    con = so.ConvexQuadratic(psd(rng, n, rank=2), crandn(rng, n), -0.5) if seed % 2 else None
    x, rep = so.solve_qcqp(so.ConvexQuadratic(h, a), con, balls=balls)
    ref_x, ref_val = _reference(h, a, con, balls)
    assert rep.status == so.OPTIMAL
    assert rep.objective <= ref_val + 1e-7 * max(1.0, abs(ref_val))
    assert rep.kkt_residual <= 1e-8
    for idx, r in balls:
        assert np.linalg.norm(x[idx]) <= r * (1 + 1e-10)
    if con is not None:
        assert con.value(x) <= 1e-10


def test_infeasible_constraint_reported():
    con = so.ConvexQuadratic(1.0, np.zeros(2), 1.0)  # ||x||^2 + 1 <= 0
    _, rep = so.solve_qcqp(so.ConvexQuadratic(1.0, np.ones(2)), con)
    assert rep.status == so.INFEASIBLE
    assert rep.certificate > 0


def test_box_with_diagonal_hessian():
    obj = so.ConvexQuadratic(np.array([1.0, 2.0, 0.0]), np.array([3.0, -0.5, -1.0]))
    x, _ = so.solve_qcqp(obj, box=(-np.ones(3), np.ones(3)))
    np.testing.assert_allclose(x, [1.0, -0.25, -1.0])


def test_polygon_vertex_optimum():
    # Free minimum at (2, 2); x + y <= 1 and the unit box pin it to (0.5, 0.5).
    obj = so.ConvexQuadratic(1.0, np.array([2.0, 2.0]))
    x, rep = so.solve_qcqp(obj, box=(-np.ones(2), np.ones(2)),
                           halfspaces=[(np.array([1.0, 1.0]), 1.0)])
    np.testing.assert_allclose(x, [0.5, 0.5], atol=1e-12)
    assert rep.status == so.OPTIMAL


def test_empty_polygon_is_infeasible():
    obj = so.ConvexQuadratic(1.0, np.zeros(2))
    _, rep = so.solve_qcqp(obj, box=(-np.ones(2), np.ones(2)),
                           halfspaces=[(np.array([1.0, 0.0]), -2.0)])
    assert rep.status == so.INFEASIBLE


@pytest.mark.parametrize("kwargs", [
    {"balls": [(np.arange(2), 1.0)], "box": (-np.ones(2), np.ones(2))},
    {"halfspaces": [(np.ones(3), 1.0)], "box": (-np.ones(3), np.ones(3))},
])
def test_unsupported_combinations(kwargs):
    n = kwargs.get("box")[0].size
    with pytest.raises(ValueError):
        so.solve_qcqp(so.ConvexQuadratic(1.0, np.zeros(n)), **kwargs)


def test_generalized_eig_matches_scipy():
    rng = np.random.default_rng(3)
    a = psd(rng, 5, rank=1)
    b = psd(rng, 5) + np.eye(5)
    value, v = so.max_generalized_eig(a, b)
    assert value == pytest.approx(scipy.linalg.eigh(a, b, eigvals_only=True)[-1], rel=1e-10)
    assert np.real(np.vdot(v, a @ v) / np.vdot(v, b @ v)) == pytest.approx(value, rel=1e-10)
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_generalized_eig_rejects_singular_b():
    with pytest.raises(ValueError, match="singular"):
        so.max_generalized_eig(np.eye(2), np.diag([1.0, 0.0]))


def test_lambda_max():
    value, v = so.lambda_max(np.diag([1.0, 4.0, 2.0]))
    assert value == pytest.approx(4.0)
    assert abs(v[1]) == pytest.approx(1.0)
