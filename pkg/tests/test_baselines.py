import numpy as np
import pytest

from lmnscatter.baselines import (
    backprojection, ba_tikhonov, ba_tikhonov_raw, ba_tsvd, ba_tsvd_raw, project_physical,
    real_stacked, tsvd_factors, tune_tikhonov,
)
from lmnscatter.linop import born_adjoint, born_apply


def test_projection():
    np.testing.assert_array_equal(project_physical([-1.0, 0.5, 3.0]), [0.0, 0.5, 1.4])
    np.testing.assert_array_equal(project_physical([2.0], chi_max=1.0), [1.0])
    with pytest.raises(ValueError):
        project_physical([1.0], chi_max=0.0)


def test_tikhonov_matches_closed_form(small_operator):
    A = small_operator
    rng = np.random.default_rng(0)
    y = rng.normal(size=A.shape[0]) + 1j * rng.normal(size=A.shape[0])
    lam = 0.1 * A.normal_norm
    R = real_stacked(A)
    ref = np.linalg.solve(R.T @ R + lam * np.eye(A.grid.size), R.T @ np.concatenate([y.real, y.imag]))
    np.testing.assert_allclose(ba_tikhonov_raw(A, y, lam, tol=1e-13), ref, rtol=1e-8, atol=1e-10 * np.abs(ref).max())
    rec = ba_tikhonov(A, y, lam)
    assert rec.values.min() >= 0 and rec.values.max() <= 1.4


def test_tikhonov_stall_raises(small_operator):
    with pytest.raises(RuntimeError):
        ba_tikhonov_raw(small_operator, np.ones(small_operator.shape[0]), 1e-12, tol=1e-15, max_iter=1)


def test_real_stacked_is_equivalent(small_operator):
    A = small_operator
    x = np.linspace(-1, 1, A.grid.size)
    y = born_apply(A, x)
    np.testing.assert_allclose(real_stacked(A) @ x, np.concatenate([y.real, y.imag]), rtol=1e-12)


def test_tsvd_full_rank_is_least_squares(small_operator):
    A = small_operator
    f = tsvd_factors(A)
    assert np.all(np.diff(f[1]) <= 0)
    truth = np.random.default_rng(1).uniform(0, 1, A.grid.size)
    y = born_apply(A, truth)
    R = real_stacked(A)
    ls = np.linalg.lstsq(R, np.concatenate([y.real, y.imag]), rcond=None)[0]
    full = ba_tsvd_raw(A, y, f[1].size, f)
    np.testing.assert_allclose(full, ls, rtol=1e-6, atol=1e-8)


def test_tsvd_rank_one_and_validation(small_operator):
    A = small_operator
    U, s, Vt = f = tsvd_factors(A)
    y = born_apply(A, np.ones(A.grid.size))
    one = ba_tsvd_raw(A, y, 1, f)
    np.testing.assert_allclose(one, Vt[0] * (U[:, 0] @ np.concatenate([y.real, y.imag])) / s[0])
    for rank in (0, s.size + 1):
        with pytest.raises(ValueError):
            ba_tsvd(A, y, rank, factors=f)


def test_tuning_returns_grid_optimum(small_operator):
    A = small_operator
    rng = np.random.default_rng(2)
    labels = [np.where(rng.random(A.grid.size) < 0.3, 0.8, 0.0) for _ in range(3)]
    data = [born_apply(A, lab) for lab in labels]
    grid = np.array([1e-4, 1e-2, 1.0])
    lam, scores = tune_tikhonov(A, data, labels, grid=grid)
    assert len(scores) == 3
    assert lam == pytest.approx(grid[int(np.argmin(scores))] * A.normal_norm)


def test_backprojection_is_adjoint(small_operator):
    y = np.ones(small_operator.shape[0], dtype=complex)
    np.testing.assert_array_equal(backprojection(small_operator, y), born_adjoint(small_operator, y))
