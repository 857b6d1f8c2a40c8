"""Classical Born-approximation reconstructions used as baselines."""

from __future__ import annotations

import numpy as np

from .forward import ScatteredData
from .linop import BornOperator, born_adjoint, cg_solve_normal
from .scene import CHI_MAX, ContrastMap

LAMBDA_GRID = np.logspace(-4, 2, 7)


def project_physical(chi, chi_max: float = CHI_MAX):
    """Clamp contrast to the lossless, bounded range ``[0, chi_max]``."""
    if not chi_max > 0:
        raise ValueError("chi_max must be positive")
    return np.clip(np.asarray(chi, dtype=float), 0.0, chi_max)


def ba_tikhonov_raw(A: BornOperator, data, lam: float, tol: float = 1e-8, max_iter: int = 500):
    chi, report = cg_solve_normal(A, lam, data, np.zeros(A.grid.size), tol=tol, max_iter=max_iter)
    if not report.converged:
        raise RuntimeError(f"Tikhonov CG stalled at relative residual {report.final_residual:.2e}")
    return chi


def ba_tikhonov(A: BornOperator, data, lam: float, chi_max: float = CHI_MAX) -> ContrastMap:
    """Regularized Born inversion ``(M + lam I)^-1 Re(A^H y)``, then clamped."""
    return ContrastMap(A.grid, project_physical(ba_tikhonov_raw(A, data, lam), chi_max))


def real_stacked(A: BornOperator) -> np.ndarray:
    """Real matrix ``[Re A; Im A]`` acting on real contrast vectors."""
    Ad = A.dense()
    return np.concatenate([Ad.real, Ad.imag])


def tsvd_factors(A: BornOperator):
    """Thin SVD of the real-stacked operator, singular values nonincreasing."""
    U, s, Vt = np.linalg.svd(real_stacked(A), full_matrices=False)
    return U, s, Vt


def ba_tsvd_raw(A: BornOperator, data, rank: int, factors=None):
    y = data.vector if isinstance(data, ScatteredData) else np.asarray(data)
    U, s, Vt = factors if factors is not None else tsvd_factors(A)
    if not 1 <= rank <= s.size:
        raise ValueError(f"rank must lie in [1, {s.size}], got {rank}")
    yr = np.concatenate([y.real, y.imag])
    coef = (U[:, :rank].T @ yr) / s[:rank]
    return Vt[:rank].T @ coef


def ba_tsvd(A: BornOperator, data, rank: int, chi_max: float = CHI_MAX, factors=None) -> ContrastMap:
    """Rank-truncated pseudo-inverse reconstruction, then clamped."""
    return ContrastMap(A.grid, project_physical(ba_tsvd_raw(A, data, rank, factors), chi_max))


def tune_tikhonov(A: BornOperator, data_list, labels, grid=LAMBDA_GRID, metric=None):
    """Pick ``lam = g * ||M||`` from ``grid`` minimising the mean relative error.

    Returns ``(best_lambda, scores)``.
    """
    from .evaluation import relative_error

    metric = metric or (lambda rec, lab: relative_error(rec + 1.0, lab + 1.0))
    scale = A.normal_norm
    scores = []
    for g in grid:
        errs = [metric(ba_tikhonov(A, y, g * scale).values, np.asarray(lab).reshape(A.grid.n, A.grid.n))
                for y, lab in zip(data_list, labels)]
        scores.append(float(np.mean(errs)))
    best = int(np.argmin(scores))
    return float(grid[best] * scale), scores


def backprojection(A: BornOperator, data) -> np.ndarray:
    return born_adjoint(A, data)
