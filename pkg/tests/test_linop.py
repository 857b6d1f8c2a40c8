import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_born
from lmnscatter.linop import BornOperator, born_adjoint, born_apply, cg_solve, cg_solve_normal


def test_dense_matches_apply(small_operator):
    A = small_operator
    np.testing.assert_allclose(A.dense(), dense_born(A), rtol=1e-13, atol=1e-20)


def test_block_structure_is_gs_times_incident_field(small_operator):
    A = small_operator
    i = 2
    block = A.dense()[i * A.n_rx:(i + 1) * A.n_rx]
    np.testing.assert_allclose(block, A.gs.matrix * A.e_inc[:, i][None, :], rtol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_adjoint_identity(small_operator, seed):
    A = small_operator
    rng = np.random.default_rng(seed)
    x = rng.normal(size=A.grid.size)
    y = rng.normal(size=A.shape[0]) + 1j * rng.normal(size=A.shape[0])
    lhs = np.vdot(y, born_apply(A, x)).real
    rhs = x @ born_adjoint(A, y)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), np.linalg.norm(x) * np.linalg.norm(y) * 1e-30)


def test_batched_apply_and_adjoint(small_operator):
    A = small_operator
    rng = np.random.default_rng(3)
    X = rng.normal(size=(A.grid.size, 3))
    Y = born_apply(A, X)
    for j in range(3):
        np.testing.assert_allclose(Y[:, j], born_apply(A, X[:, j]), rtol=1e-13)
    B = born_adjoint(A, Y)
    for j in range(3):
        np.testing.assert_allclose(B[:, j], born_adjoint(A, Y[:, j]), rtol=1e-12)


def test_normal_matrix(small_operator):
    A = small_operator
    D = A.dense()
    np.testing.assert_allclose(A.normal_matrix, (D.conj().T @ D).real, rtol=1e-12, atol=1e-22)
    assert A.normal_norm == pytest.approx(np.linalg.norm(A.normal_matrix, 2), rel=1e-12)


def test_scaled_operator(small_operator):
    A = small_operator
    B = A.scaled(3.0)
    x = np.linspace(0, 1, A.grid.size)
    np.testing.assert_allclose(born_apply(B, x), 3 * born_apply(A, x), rtol=1e-14)
    np.testing.assert_allclose(B.normal_matrix, 9 * A.normal_matrix, rtol=1e-14)


def test_cg_matches_direct_solve(small_operator):
    A = small_operator
    rng = np.random.default_rng(4)
    y = rng.normal(size=A.shape[0]) + 1j * rng.normal(size=A.shape[0])
    z = rng.normal(size=A.grid.size)
    lam = 1e-2 * A.normal_norm
    chi, rep = cg_solve_normal(A, lam, y, z, tol=1e-13, max_iter=1000)
    D = A.dense()
    M = (D.conj().T @ D).real
    ref = np.linalg.solve(M + lam * np.eye(A.grid.size), (D.conj().T @ y).real + lam * z)
    assert rep.converged
    assert np.linalg.norm(chi - ref) / np.linalg.norm(ref) < 1e-8


def test_cg_energy_error_is_monotone(small_operator):
    A = small_operator
    rng = np.random.default_rng(5)
    rhs = rng.normal(size=(A.grid.size, 2))
    _, rep = cg_solve(A, 1e-3 * A.normal_norm, rhs, tol=1e-12, max_iter=500)
    e = np.array(rep.energy_errors)
    assert rep.converged and len(rep.residuals) == rep.iterations + 1
    assert np.all(np.diff(e) <= 1e-12 * e[0])


def test_cg_batch_equals_columns(small_operator):
    A = small_operator
    rng = np.random.default_rng(6)
    y = rng.normal(size=(A.shape[0], 3)) + 0j
    z = rng.normal(size=(A.grid.size, 3))
    lam = 0.05 * A.normal_norm
    batch, _ = cg_solve_normal(A, lam, y, z, tol=1e-12)
    for j in range(3):
        single, _ = cg_solve_normal(A, lam, y[:, j], z[:, j], tol=1e-12)
        np.testing.assert_allclose(batch[:, j], single, rtol=1e-9, atol=1e-12)


def test_cg_zero_rhs_and_nonconvergence(small_operator):
    A = small_operator
    x, rep = cg_solve(A, 1.0, np.zeros(A.grid.size))
    assert rep.converged and not x.any()
    _, rep = cg_solve(A, 1e-9 * A.normal_norm, np.ones(A.grid.size), tol=1e-14, max_iter=2)
    assert not rep.converged and rep.iterations == 2


@pytest.mark.parametrize("lam,tol", [(0.0, 1e-8), (-1.0, 1e-8), (1.0, 0.0)])
def test_cg_argument_validation(small_operator, lam, tol):
    with pytest.raises(ValueError):
        cg_solve(small_operator, lam, np.ones(small_operator.grid.size), tol=tol)


def test_shape_validation(small_operator):
    A = small_operator
    with pytest.raises(ValueError):
        born_apply(A, np.ones(5))
    with pytest.raises(ValueError):
        born_apply(A, np.full(A.grid.size, np.inf))
    with pytest.raises(ValueError):
        born_adjoint(A, np.ones(3))
    with pytest.raises(ValueError):
        BornOperator(A.gs, A.e_inc[:5], A.grid)
