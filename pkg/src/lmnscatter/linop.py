"""Born measurement operator and the regularized normal-equation CG solver.

The unknown contrast is real, so the least-squares normal operator is
``M = Re(A^H A)`` and the adjoint is ``Re(A^H y)``.  Measurement vectors stack
incidences block by block (block ``i`` is the receiver column of incidence
``i``), matching :attr:`ScatteredData.vector`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .forward import GreenMeasure, ScatteredData, green_measure, incident_fields
from .scene import Grid, Scenario

DENSE_NORMAL_LIMIT = 4096
CG_TOL = 1e-8
CG_MAXITER = 200


@dataclass(frozen=True, eq=False)
class BornOperator:
    """``A = scale * vstack_i(G_S diag(E_inc[:, i]))``."""

    gs: GreenMeasure
    e_inc: np.ndarray
    grid: Grid
    scale: float = 1.0

    def __post_init__(self):
        if self.e_inc.shape[0] != self.grid.size or self.gs.matrix.shape[1] != self.grid.size:
            raise ValueError("operator blocks do not match the grid")

    @classmethod
    def for_scenario(cls, scenario: Scenario, grid: Grid | None = None) -> "BornOperator":
        grid = grid or scenario.inversion_grid
        k0 = scenario.wavenumber
        return cls(green_measure(grid, scenario.rx_ring, k0),
                   incident_fields(grid, scenario.tx_ring, k0), grid)

    @property
    def n_rx(self) -> int:
        return self.gs.matrix.shape[0]

    @property
    def n_inc(self) -> int:
        return self.e_inc.shape[1]

    @property
    def shape(self):
        return (self.n_rx * self.n_inc, self.grid.size)

    def scaled(self, factor: float) -> "BornOperator":
        out = BornOperator(self.gs, self.e_inc, self.grid, self.scale * factor)
        # always derive the normal matrix from the parent's so results do not
        # depend on which of the two happened to be formed first
        if "normal_matrix" in self.__dict__ or self.grid.size <= DENSE_NORMAL_LIMIT:
            out.__dict__["normal_matrix"] = self.normal_matrix * factor ** 2
        return out

    def dense(self) -> np.ndarray:
        """Stacked complex matrix, ``(N_r*N_i, N)``."""
        G = self.gs.matrix
        return self.scale * np.concatenate([G * self.e_inc[:, i][None, :] for i in range(self.n_inc)])

    @cached_property
    def normal_matrix(self) -> np.ndarray:
        """Dense ``Re(A^H A)``."""
        A = self.dense()
        return np.ascontiguousarray((A.conj().T @ A).real)

    @cached_property
    def normal_norm(self) -> float:
        """Largest eigenvalue of ``Re(A^H A)``."""
        return float(np.linalg.eigvalsh(self.normal_matrix)[-1])

    def normal_apply(self, v):
        if self.grid.size <= DENSE_NORMAL_LIMIT:
            return self.normal_matrix @ v
        return born_adjoint(self, born_apply(self, v))


def _data_matrix(A: BornOperator, y):
    if isinstance(y, ScatteredData):
        y = y.vector
    y = np.asarray(y)
    if y.shape[0] != A.shape[0]:
        raise ValueError(f"expected data of length {A.shape[0]}, got {y.shape[0]}")
    return y


def born_apply(A: BornOperator, chi) -> np.ndarray:
    """``A @ chi`` for a real vector ``(N,)`` or a batch ``(N, B)``."""
    chi = np.asarray(chi, dtype=float)
    if chi.shape[0] != A.grid.size:
        raise ValueError(f"expected {A.grid.size} contrast values, got {chi.shape[0]}")
    if not np.all(np.isfinite(chi)):
        raise ValueError("contrast must be finite")
    G = A.gs.matrix
    if chi.ndim == 1:
        return A.scale * (G @ (A.e_inc * chi[:, None])).T.ravel()
    # (N, Ni, B) -> (Nr, Ni, B) -> (Ni*Nr, B)
    y = np.einsum("rn,nib->rib", G, A.e_inc[:, :, None] * chi[:, None, :], optimize=True)
    return A.scale * y.transpose(1, 0, 2).reshape(-1, chi.shape[1])


def born_adjoint(A: BornOperator, y) -> np.ndarray:
    """``Re(A^H y)`` for data ``(N_r*N_i,)`` or a batch ``(N_r*N_i, B)``."""
    y = _data_matrix(A, y)
    if not np.all(np.isfinite(y)):
        raise ValueError("data must be finite")
    GH = A.gs.matrix.conj().T
    if y.ndim == 1:
        Y = y.reshape(A.n_inc, A.n_rx).T
        return A.scale * np.sum(A.e_inc.conj() * (GH @ Y), axis=1).real
    Y = y.reshape(A.n_inc, A.n_rx, -1).transpose(1, 0, 2)
    back = np.einsum("nr,rib->nib", GH, Y, optimize=True)
    return A.scale * np.einsum("ni,nib->nb", A.e_inc.conj(), back, optimize=True).real


@dataclass
class NormalSolveReport:
    iterations: int
    final_residual: float
    converged: bool
    residuals: list = field(default_factory=list)
    energy_errors: list = field(default_factory=list)


def cg_solve(A: BornOperator, lam: float, rhs, tol: float = CG_TOL,
             max_iter: int = CG_MAXITER):
    """Conjugate gradients on ``(M + lam I) x = rhs``, columns solved in lockstep.

    ``report.residuals`` holds the worst relative residual per iteration and
    ``report.energy_errors`` the Hestenes-Stiefel estimate of the squared
    energy-norm error (tail sums of ``alpha_k ||r_k||^2``), which CG makes
    nonincreasing.
    """
    if not lam > 0:
        raise ValueError(f"regularization weight must be positive, got {lam}")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    b = np.asarray(rhs, dtype=float)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b, axis=0)
    live = bnorm > 0
    safe = np.where(live, bnorm, 1.0)
    r = b.copy()
    p = r.copy()
    rr = np.sum(r * r, axis=0)
    history = [float(np.max(np.sqrt(rr) / safe))]
    steps = []
    it = 0
    while it < max_iter:
        active = live & (np.sqrt(rr) / safe >= tol)
        if not np.any(active):
            break
        q = A.normal_apply(p) + lam * p
        pq = np.sum(p * q, axis=0)
        alpha = np.where(active, rr / np.where(active, pq, 1.0), 0.0)
        x += alpha * p
        r -= alpha * q
        rr_new = np.sum(r * r, axis=0)
        steps.append(alpha * rr)
        beta = np.where(active, rr_new / np.where(active, rr, 1.0), 0.0)
        p = np.where(active, r + beta * p, p)
        rr = np.where(active, rr_new, rr)
        it += 1
        history.append(float(np.max(np.sqrt(rr) / safe)))
    final = float(np.max(np.sqrt(rr) / safe))
    tails = np.cumsum(np.array(steps)[::-1], axis=0)[::-1] if steps else np.zeros((0, b.shape[1]))
    energy = [float(v) for v in np.max(tails, axis=1)] + [0.0]
    report = NormalSolveReport(it, final, final < tol, history, energy)
    return (x[:, 0] if squeeze else x), report


def cg_solve_normal(A: BornOperator, lam: float, data, z, tol: float = CG_TOL,
                    max_iter: int = CG_MAXITER):
    """Solve ``(Re(A^H A) + lam I) chi = Re(A^H data) + lam z`` by CG from zero.

    Returns ``(chi, report)``; on non-convergence the last iterate is returned
    with ``report.converged == False``.
    """
    back = born_adjoint(A, data)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1 and back.ndim == 2:
        z = z[:, None]
    rhs = back + lam * z
    return cg_solve(A, lam, rhs, tol, max_iter)
