"""Method-of-moments forward model for 2D TM scattering.

Time convention ``exp(+j*omega*t)``; the outgoing free-space Green's function
is ``g(r) = -j/4 * H0^(2)(k0*r)``.  The ``k0**2`` factor of the volume
integral equation is folded into the discrete Green's operators, so that

    E_tot = E_inc + G_D diag(chi) E_tot,    E_sca = G_S diag(chi) E_tot.

Unknowns are pulse-basis cell values with point matching at cell centers.
The default ``cell_rule="square"`` integrates the kernel over the true square
cell (Gauss-Legendre off the diagonal, an angular rule with the analytic
radial integral on the diagonal).  ``cell_rule="richmond"`` gives the classic
equal-area-circle closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .scene import ContrastMap, Grid, SensorRing
from .specfun import bessel_j, hankel2

KRYLOV_TOL = 1e-10
KRYLOV_MAXITER = 2000
DENSE_LIMIT = 48


class SolverError(RuntimeError):
    """Raised when an iterative solve misses its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


# ---------------------------------------------------------------- cell integrals

def _gauss_square(order):
    x, w = np.polynomial.legendre.leggauss(order)
    X, Y = np.meshgrid(0.5 * x, 0.5 * x, indexing="xy")
    return X.ravel(), Y.ravel(), np.outer(w, w).ravel() * 0.25


def square_cell_integral(k0, h, dx, dy, order):
    """``int_cell H0(k0*|r|) dA`` over squares of side ``h`` centered at
    ``(dx, dy)`` (arrays, none of them containing the origin)."""
    gx, gy, gw = _gauss_square(order)
    dx = np.asarray(dx, dtype=float)[..., None]
    dy = np.asarray(dy, dtype=float)[..., None]
    r = np.hypot(dx + h * gx, dy + h * gy)
    return h * h * (hankel2(0, k0 * r) @ gw)


def square_self_integral(k0, h, order=24):
    """``int H0(k0*|r|) dA`` over the square of side ``h`` centered at the origin.

    In polar coordinates the radial integral is closed-form,
    ``int_0^R H0(k r) r dr = R H1(kR)/k - 2j/(pi k^2)``,
    leaving a smooth integral over the angle (eight symmetric triangles).
    """
    t, w = np.polynomial.legendre.leggauss(order)
    theta = np.pi / 8 * (t + 1.0)
    R = 0.5 * h / np.cos(theta)
    radial = R * hankel2(1, k0 * R) / k0 - 2j / (np.pi * k0 ** 2)
    return 8.0 * (np.pi / 8) * np.sum(w * radial)


def richmond_radius(h):
    return h / np.sqrt(np.pi)


def richmond_self_integral(k0, h):
    a = richmond_radius(h)
    return 2 * np.pi * a / k0 * hankel2(1, k0 * a) - 4j / k0 ** 2


def richmond_offdiag_integral(k0, h, rho):
    a = richmond_radius(h)
    return 2 * np.pi * a / k0 * bessel_j(1, k0 * a) * hankel2(0, k0 * np.asarray(rho))


# --------------------------------------------------------------------- operators

@dataclass(frozen=True, eq=False)
class GreenDomain:
    """Translation-invariant G_D on a grid.

    ``kernel[dy + n - 1, dx + n - 1]`` is the coupling between two cells whose
    centers differ by ``(dx, dy)`` cells.
    """

    grid: Grid
    k0: float
    kernel: np.ndarray
    cell_rule: str = "square"

    @cached_property
    def _kernel_fft(self):
        n = self.grid.n
        emb = np.zeros((2 * n, 2 * n), dtype=complex)
        idx = np.r_[0:n, -(n - 1):0]
        emb[np.ix_(idx % (2 * n), idx % (2 * n))] = self.kernel[np.ix_(idx + n - 1, idx + n - 1)]
        return np.fft.fft2(emb)

    def dense(self) -> np.ndarray:
        n = self.grid.n
        iy, ix = np.divmod(np.arange(n * n), n)
        return self.kernel[(iy[:, None] - iy[None, :]) + n - 1, (ix[:, None] - ix[None, :]) + n - 1]

    def matvec(self, v):
        return toeplitz_matvec(self, v)


@dataclass(frozen=True, eq=False)
class GreenMeasure:
    positions: np.ndarray
    grid: Grid
    k0: float
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class FieldSet:
    e_inc: np.ndarray
    e_tot: np.ndarray

    def __post_init__(self):
        if self.e_inc.shape != self.e_tot.shape:
            raise ValueError("incident and total fields must have the same shape")


@dataclass(frozen=True, eq=False)
class ScatteredData:
    """Receivers x incidences matrix of scattered field values."""

    values: np.ndarray
    noise_level: float = 0.0
    seed: int | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.values.shape

    @property
    def vector(self) -> np.ndarray:
        """Incidence-major stacking: block ``i`` holds incidence ``i``."""
        return self.values.T.ravel()


def green_domain(grid: Grid, k0: float, cell_rule: str = "square") -> GreenDomain:
    if not k0 > 0:
        raise ValueError("wavenumber must be positive")
    n, h = grid.n, grid.cell_size
    # fill the 0 <= dy <= dx octant and mirror
    dx, dy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    tri = (dy <= dx) & ~((dx == 0) & (dy == 0))
    ox, oy = dx[tri], dy[tri]
    vals = np.empty(ox.shape, dtype=complex)
    if cell_rule == "square":
        near = np.maximum(ox, oy) <= 1
        vals[near] = square_cell_integral(k0, h, ox[near] * h, oy[near] * h, 16)
        vals[~near] = square_cell_integral(k0, h, ox[~near] * h, oy[~near] * h, 8)
        self_term = square_self_integral(k0, h)
    elif cell_rule == "richmond":
        vals = richmond_offdiag_integral(k0, h, np.hypot(ox, oy) * h)
        self_term = richmond_self_integral(k0, h)
    else:
        raise ValueError(f"unknown cell rule {cell_rule!r}")
    quad = np.zeros((n, n), dtype=complex)
    quad[oy, ox] = vals
    quad[ox, oy] = vals
    quad[0, 0] = self_term
    quad *= -0.25j * k0 ** 2
    kernel = np.empty((2 * n - 1, 2 * n - 1), dtype=complex)
    kernel[n - 1:, n - 1:] = quad
    kernel[: n - 1, n - 1:] = quad[:0:-1, :]
    kernel[n - 1:, : n - 1] = quad[:, :0:-1]
    kernel[: n - 1, : n - 1] = quad[:0:-1, :0:-1]
    return GreenDomain(grid, float(k0), kernel, cell_rule)


def _outside_domain(grid, pts):
    half = 0.5 * grid.extent
    return np.all(np.max(np.abs(pts), axis=1) > half)


def green_measure(grid: Grid, rx: SensorRing, k0: float, cell_rule: str = "square") -> GreenMeasure:
    if not k0 > 0:
        raise ValueError("wavenumber must be positive")
    pos = rx.positions if isinstance(rx, SensorRing) else np.asarray(rx, dtype=float)
    if not _outside_domain(grid, pos):
        raise ValueError("all receivers must lie strictly outside the domain of interest")
    c = grid.centers
    dx = pos[:, None, 0] - c[None, :, 0]
    dy = pos[:, None, 1] - c[None, :, 1]
    h = grid.cell_size
    if cell_rule == "square":
        integ = square_cell_integral(k0, h, dx, dy, 4)
    elif cell_rule == "richmond":
        integ = richmond_offdiag_integral(k0, h, np.hypot(dx, dy))
    else:
        raise ValueError(f"unknown cell rule {cell_rule!r}")
    return GreenMeasure(pos, grid, float(k0), -0.25j * k0 ** 2 * integ)


def incident_fields(grid: Grid, tx, k0: float) -> np.ndarray:
    """Unit line-source fields ``-j/4 H0(k0 |r - r_j|)`` at cell centers, ``N x N_i``."""
    if not k0 > 0:
        raise ValueError("wavenumber must be positive")
    pos = tx.positions if isinstance(tx, SensorRing) else np.asarray(tx, dtype=float)
    c = grid.centers
    d = np.hypot(c[:, None, 0] - pos[None, :, 0], c[:, None, 1] - pos[None, :, 1])
    if np.any(d < grid.cell_size):
        raise ValueError("a transmitter lies within one cell of a cell center")
    return -0.25j * hankel2(0, k0 * d)


def toeplitz_matvec(gd: GreenDomain, v):
    """``G_D @ v`` by circulant embedding; ``v`` is ``(N,)`` or ``(N, m)``."""
    n = gd.grid.n
    v = np.asarray(v)
    if v.shape[0] != n * n:
        raise ValueError(f"expected leading dimension {n * n}, got {v.shape[0]}")
    cols = v.reshape(n, n, -1)
    pad = np.zeros((2 * n, 2 * n, cols.shape[2]), dtype=complex)
    pad[:n, :n] = cols
    out = np.fft.ifft2(np.fft.fft2(pad, axes=(0, 1)) * gd._kernel_fft[:, :, None], axes=(0, 1))
    return out[:n, :n].reshape(v.shape)


def _contrast_vector(chi, grid):
    if isinstance(chi, ContrastMap):
        if chi.grid != grid:
            raise ValueError("contrast map is defined on a different grid")
        return chi.vector
    chi = np.asarray(chi, dtype=float).ravel()
    if chi.size != grid.size:
        raise ValueError("contrast has the wrong number of cells")
    return chi


def solve_total_field(gd: GreenDomain, chi, e_inc, method: str = "auto",
                      tol: float = KRYLOV_TOL, maxiter: int = KRYLOV_MAXITER) -> np.ndarray:
    """Solve ``(I - G_D diag(chi)) E_tot = E_inc`` for every incidence column."""
    c = _contrast_vector(chi, gd.grid)
    e_inc = np.asarray(e_inc, dtype=complex)
    squeeze = e_inc.ndim == 1
    rhs = e_inc[:, None] if squeeze else e_inc
    if rhs.shape[0] != c.size:
        raise ValueError("incident field rows do not match the grid")
    if not np.any(c):
        return e_inc.copy()
    if method == "auto":
        method = "dense" if gd.grid.n <= DENSE_LIMIT else "bicgstab"
    if method == "dense":
        if gd.grid.n > DENSE_LIMIT:
            raise ValueError(f"dense solve limited to grids up to {DENSE_LIMIT}x{DENSE_LIMIT}")
        system = np.eye(c.size) - gd.dense() * c[None, :]
        out = scipy.linalg.solve(system, rhs)
    elif method == "bicgstab":
        N = c.size
        op = spla.LinearOperator((N, N), dtype=complex,
                                 matvec=lambda v: v.ravel() - toeplitz_matvec(gd, c * v.ravel()))
        out = np.empty_like(rhs)
        for i in range(rhs.shape[1]):
            # a little headroom: the recursive residual drifts from the true one
            sol, info = spla.bicgstab(op, rhs[:, i], rtol=0.1 * tol, atol=0.0, maxiter=maxiter)
            out[:, i] = sol
    else:
        raise ValueError(f"unknown method {method!r}")
    resid = out - toeplitz_matvec(gd, c[:, None] * out) - rhs
    rel = np.linalg.norm(resid, axis=0) / np.linalg.norm(rhs, axis=0)
    if np.max(rel) >= tol:
        raise SolverError(f"total-field solve did not converge (relative residual {rel.max():.3e})",
                          residual=float(rel.max()))
    return out[:, 0] if squeeze else out


def scattered_field(gs: GreenMeasure, chi, e_tot) -> ScatteredData:
    c = _contrast_vector(chi, gs.grid)
    e_tot = np.asarray(e_tot)
    if e_tot.shape[0] != c.size:
        raise ValueError("field rows do not match the grid")
    return ScatteredData(gs.matrix @ (c[:, None] * e_tot.reshape(c.size, -1)))


def add_noise(data: ScatteredData, level: float, seed: int) -> ScatteredData:
    """Add circular complex white Gaussian noise with ``||n||_F / ||data||_F == level``."""
    if level < 0:
        raise ValueError(f"noise level must be nonnegative, got {level}")
    vals = data.values
    if level == 0:
        return ScatteredData(vals.copy(), 0.0, seed, dict(data.metadata))
    norm = np.linalg.norm(vals)
    if norm == 0:
        raise ValueError("cannot scale noise relative to all-zero data")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(vals.shape) + 1j * rng.standard_normal(vals.shape)
    noise *= level * norm / np.linalg.norm(noise)
    return ScatteredData(vals + noise, float(level), seed, dict(data.metadata))


@dataclass(frozen=True, eq=False)
class ForwardModel:
    """Operators for one grid and sensor layout, built once and reused."""

    grid: Grid
    k0: float
    gd: GreenDomain
    gs: GreenMeasure
    e_inc: np.ndarray

    @classmethod
    def build(cls, grid: Grid, tx: SensorRing, rx: SensorRing, k0: float, cell_rule="square"):
        return cls(grid, k0, green_domain(grid, k0, cell_rule),
                   green_measure(grid, rx, k0, cell_rule), incident_fields(grid, tx, k0))

    def simulate(self, chi, method="auto") -> tuple[ScatteredData, FieldSet]:
        e_tot = solve_total_field(self.gd, chi, self.e_inc, method=method)
        return scattered_field(self.gs, chi, e_tot), FieldSet(self.e_inc, e_tot)
