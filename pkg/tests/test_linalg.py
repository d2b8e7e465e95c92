import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from chsolve.fem import P2Space, interpolate
from chsolve.linalg import (
    BlockPreconditioner,
    BreakdownError,
    MGHierarchy,
    RankOneAugmented,
    SaddleOperator,
    apply_preconditioner,
    build_prolongation,
    gs_sweep,
    minres,
    vcycle,
)
from chsolve.mesh import build_hierarchy
from chsolve.spectral import simplified_saddle


# ---------------------------------------------------------------- operators


def test_rank_one_augmented_matches_dense(spaces, rng):
    s = spaces[3]
    op = RankOneAugmented(s.stiffness, s.mean_vector)
    x = rng.standard_normal(s.n_dof)
    np.testing.assert_allclose(op.matvec(x), op.toarray() @ x, atol=1e-13)
    with pytest.raises(ValueError):
        RankOneAugmented(s.stiffness, s.mean_vector[:-1])


@pytest.mark.parametrize("tau,eps", [(1e-3, 0.05), (1.0, 1.0), (3.125e-5, 0.001)])
def test_saddle_operator_symmetric(spaces, rng, tau, eps):
    s = spaces[4]
    J = s.weighted_mass(rng.random((s.mesh.n_triangles, len(s.rule.weights))))
    A = SaddleOperator.newton(tau, eps, RankOneAugmented(s.stiffness, s.mean_vector), s.mass, J)
    assert A.shape == (2 * s.n_dof,) * 2
    for _ in range(10):
        z, w = rng.standard_normal((2, 2 * s.n_dof))
        lhs, rhs = w @ A.matvec(z), z @ A.matvec(w)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_simplified_operator_matches_dense_formula(spaces):
    s = spaces[2]
    tau, eps = 0.01, 0.1
    Ka = RankOneAugmented(s.stiffness, s.mean_vector)
    A = SaddleOperator.simplified(tau, eps, Ka, s.mass)
    ref = simplified_saddle(Ka.toarray(), s.mass.toarray(), tau, eps)
    np.testing.assert_allclose(A.toarray(), ref, atol=1e-14)
    j, k = A.second_block_coeffs
    assert j == pytest.approx(0.5 * np.sqrt(tau)) and k == pytest.approx(1.5 * np.sqrt(tau) * eps**2)


# ---------------------------------------------------------------- MINRES


def test_minres_identity_one_iteration(rng):
    b = rng.standard_normal(20)
    r = minres(lambda v: v, b)
    assert r.converged and r.iterations == 1
    np.testing.assert_allclose(r.x, b, atol=1e-14)


def test_minres_two_eigenvalues():
    A = np.diag([2.0, -3.0])
    r = minres(lambda v: A @ v, np.array([2.0, 3.0]), tol=1e-12)
    assert r.iterations <= 2
    np.testing.assert_allclose(r.x, [1.0, -1.0], atol=1e-12)


def test_minres_zero_rhs():
    r = minres(lambda v: 2 * v, np.zeros(5))
    assert r.iterations == 0 and np.all(r.x == 0)


def _random_indefinite(rng, n=60):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.concatenate([rng.uniform(0.5, 3, n // 2), -rng.uniform(0.5, 3, n - n // 2)])
    return (Q * ev) @ Q.T


def test_minres_against_dense_and_scipy(rng):
    A = _random_indefinite(rng)
    B = rng.standard_normal((60, 60))
    P = B @ B.T + 60 * np.eye(60)
    Pinv = np.linalg.inv(P)
    b = rng.standard_normal(60)
    r = minres(lambda v: A @ v, b, lambda v: Pinv @ v, tol=1e-12, maxit=500)
    assert r.converged
    np.testing.assert_allclose(r.x, np.linalg.solve(A, b), rtol=1e-9, atol=1e-9)
    x_sp, info = spla.minres(A, b, M=Pinv, rtol=1e-12, maxiter=500)
    assert info == 0
    np.testing.assert_allclose(r.x, x_sp, rtol=1e-8, atol=1e-8)


def test_minres_residual_history_monotone_and_meaningful(rng):
    A = _random_indefinite(rng, 80)
    P = np.diag(rng.uniform(0.5, 2.0, 80))
    Pinv = np.linalg.inv(P)
    b = rng.standard_normal(80)
    r = minres(lambda v: A @ v, b, lambda v: Pinv @ v, tol=1e-10, maxit=500)
    h = np.array(r.residual_norms)
    assert np.all(np.diff(h) <= 1e-12 * h[0])
    # the recurred norm equals the true preconditioned residual norm
    res = b - A @ r.x
    true = np.sqrt(res @ Pinv @ res)
    assert true <= 1e-10 * h[0] * 10
    assert h[-1] <= 1e-10 * h[0]


def test_minres_maxit_flag(rng):
    A = _random_indefinite(rng, 50)
    r = minres(lambda v: A @ v, rng.standard_normal(50), tol=1e-14, maxit=3)
    assert not r.converged and r.max_iterations_exceeded and r.iterations == 3


def test_minres_rejects_indefinite_preconditioner(rng):
    with pytest.raises(ValueError):
        minres(lambda v: v, np.ones(3), lambda v: -v)
    with pytest.raises(ValueError):
        minres(lambda v: v, np.ones(3), maxit=0)


def test_minres_singular_breakdown():
    # b outside the range of a singular A: Lanczos stops without a solution
    A = np.diag([1.0, 0.0])
    with pytest.raises(BreakdownError):
        minres(lambda v: A @ v, np.array([0.0, 1.0]), tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 30))
def test_minres_property_solves_nonsingular(seed, n):
    rng = np.random.default_rng(seed)
    ev = rng.uniform(0.5, 2, n) * rng.choice([-1, 1], n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (Q * ev) @ Q.T
    b = rng.standard_normal(n)
    r = minres(lambda v: A @ v, b, tol=1e-12, maxit=10 * n)
    assert r.converged
    assert np.linalg.norm(A @ r.x - b) <= 1e-9 * np.linalg.norm(b)


# ---------------------------------------------------------------- Gauss-Seidel


def _dense_gs(A, x, b, backward=False):
    n = len(x)
    x = x.copy()
    order = range(n - 1, -1, -1) if backward else range(n)
    for i in order:
        x[i] = (b[i] - A[i] @ x + A[i, i] * x[i]) / A[i, i]
    return x


def _random_dd(rng, n, symmetric):
    A = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.4)
    if symmetric:
        A = A + A.T
    A += np.diag(np.abs(A).sum(1) + 1)
    return A


@pytest.mark.parametrize("backward", [False, True])
def test_gs_matches_dense_bruteforce(rng, backward):
    A = _random_dd(rng, 25, symmetric=False)
    x0, b = rng.standard_normal((2, 25))
    ref = _dense_gs(A, _dense_gs(A, x0, b, backward), b, backward)
    got = gs_sweep(sp.csr_matrix(A), x0.copy(), b, sweeps=2, backward=backward)
    np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-13)


def _sweep_matrix(A, backward):
    # b -> x for a single sweep from zero, as a dense matrix
    n = A.shape[0]
    cols = [gs_sweep(sp.csr_matrix(A), np.zeros(n), e, 1, backward) for e in np.eye(n)]
    return np.array(cols).T


def test_reversed_sweep_on_transpose_is_transpose(rng):
    A = _random_dd(rng, 20, symmetric=False)
    F = _sweep_matrix(A, backward=False)
    Bt = _sweep_matrix(A.T, backward=True)
    np.testing.assert_allclose(Bt, F.T, rtol=1e-13, atol=1e-14)


# ---------------------------------------------------------------- prolongation


def test_prolongation_reproduces_constants_and_quadratics(spaces):
    for c, f in zip(spaces[:-1], spaces[1:]):
        P = build_prolongation(c, f)
        np.testing.assert_allclose(P @ np.ones(c.n_dof), 1.0, atol=1e-15)
        q = lambda x, y: x * y
        np.testing.assert_allclose(P @ interpolate(c, q), interpolate(f, q), atol=1e-15)
        q2 = lambda x, y: 3 * x * x - y + 0.5 * y * y
        np.testing.assert_allclose(P @ interpolate(c, q2), interpolate(f, q2), atol=1e-14)
        assert np.diff(P.indptr).max() <= 6


def test_prolongation_energy_identity(spaces, rng):
    for c, f in zip(spaces[:-1], spaces[1:]):
        P = build_prolongation(c, f)
        for _ in range(20):
            v = rng.standard_normal(c.n_dof)
            a = v @ (c.stiffness @ v)
            pv = P @ v
            assert abs(a - pv @ (f.stiffness @ pv)) <= 1e-12 * max(1.0, a)
            m = v @ (c.mass @ v)
            assert abs(m - pv @ (f.mass @ pv)) <= 1e-12 * max(1.0, m)


def test_prolongation_rejects_unrelated_meshes(spaces):
    with pytest.raises(ValueError):
        build_prolongation(spaces[1], spaces[3])
    with pytest.raises(ValueError):
        build_prolongation(spaces[2], spaces[1])


# ---------------------------------------------------------------- multigrid


@pytest.fixture(scope="module")
def mg(spaces):
    return MGHierarchy(spaces[:5], 0.01)


def test_vcycle_zero_fixed_point(mg):
    n = mg.matrices[-1].shape[0]
    np.testing.assert_array_equal(vcycle(mg, mg.top, np.zeros(n), np.zeros(n)), 0)


def test_vcycle_level0_exact(mg, rng):
    b = rng.standard_normal(mg.matrices[0].shape[0])
    x = vcycle(mg, 0, b)
    assert np.linalg.norm(mg.matrices[0] @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_vcycle_rejects_bad_level(mg):
    with pytest.raises(IndexError):
        vcycle(mg, 99, np.zeros(3))


def test_vcycle_symmetric_and_positive_definite(mg, rng):
    n = mg.matrices[-1].shape[0]
    for _ in range(20):
        r, s = rng.standard_normal((2, n))
        a, b = s @ mg.apply(r), r @ mg.apply(s)
        assert abs(a - b) <= 1e-10 * max(abs(a), 1e-300)
    for _ in range(100):
        r = rng.standard_normal(n)
        assert r @ mg.apply(r) > 0


def _contraction(hier, rng, cycles=8):
    A = hier.matrices[-1]
    b = rng.standard_normal(A.shape[0])
    x = np.zeros_like(b)
    res = [np.linalg.norm(b)]
    for _ in range(cycles):
        x = hier.vcycle(hier.top, b, x)
        res.append(np.linalg.norm(b - A @ x))
    return (res[-1] / res[2]) ** (1 / (cycles - 2))


def test_vcycle_contraction_level_independent(spaces, rng):
    rhos = [_contraction(MGHierarchy(spaces[: lev + 1], 0.01), rng) for lev in range(3, 6)]
    assert max(rhos) < 1
    assert max(rhos) - min(rhos) <= 0.15, rhos


def test_block_preconditioner_linear_spd(spaces, rng):
    P = BlockPreconditioner.for_spaces(spaces[:5], 1e-3, 0.05)
    n = 2 * spaces[4].n_dof
    np.testing.assert_array_equal(apply_preconditioner(P, np.zeros(n)), 0)
    for _ in range(20):
        r, s = rng.standard_normal((2, n))
        a, b = s @ apply_preconditioner(P, r), r @ apply_preconditioner(P, s)
        assert abs(a - b) <= 1e-10 * abs(a)
        assert r @ P.matvec(r) > 0
    # linearity
    r, s = rng.standard_normal((2, n))
    np.testing.assert_allclose(P(2 * r + s), 2 * P(r) + P(s), rtol=1e-12, atol=1e-12)


def test_projected_jacobian_operator(spaces, rng):
    s = spaces[2]
    J = s.weighted_mass(rng.random((s.mesh.n_triangles, len(s.rule.weights))) + 0.5)
    Ka = RankOneAugmented(s.stiffness, s.mean_vector)
    A = SaddleOperator.newton(0.01, 0.1, Ka, s.mass, J, project_constants=True)
    dense = A.toarray()
    np.testing.assert_allclose(dense, dense.T, atol=1e-14)
    z = rng.standard_normal(2 * s.n_dof)
    np.testing.assert_allclose(A.matvec(z), dense @ z, atol=1e-13)
    # the Jacobian term no longer sees constants in either slot
    n = s.n_dof
    one = np.r_[np.zeros(n), np.ones(n)]
    plain = SaddleOperator.newton(0.01, 0.1, Ka, s.mass, 0 * J, project_constants=True)
    np.testing.assert_allclose(A.matvec(one), plain.matvec(one), atol=1e-14)
