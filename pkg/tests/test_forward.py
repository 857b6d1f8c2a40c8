import numpy as np
import pytest
from scipy import integrate
from scipy import special as sp

from conftest import cylinder_scattered_field
from lmnscatter.forward import (
    ForwardModel, ScatteredData, SolverError, add_noise, green_domain, green_measure,
    incident_fields, scattered_field, solve_total_field, toeplitz_matvec,
)
from lmnscatter.linop import BornOperator, born_apply
from lmnscatter.scene import C0, ContrastMap, make_grid, make_ring, rasterize_circle

K0 = 2 * np.pi * 400e6 / C0


def _cquad(f, *args, **kw):
    re = integrate.dblquad(lambda y, x: f(x, y).real, *args, **kw)[0]
    im = integrate.dblquad(lambda y, x: f(x, y).imag, *args, **kw)[0]
    return re + 1j * im


def oracle_offdiag(k0, h, dx, dy):
    """Adaptive 2D quadrature of ``-j/4 k0^2 H0(k0 |r|)`` over a square cell."""
    f = lambda x, y: sp.hankel2(0, k0 * np.hypot(x, y))
    return -0.25j * k0 ** 2 * _cquad(f, dx - h / 2, dx + h / 2, dy - h / 2, dy + h / 2,
                                     epsabs=1e-14, epsrel=1e-12)


def oracle_self(k0, h):
    """Singular self cell: polar coordinates about the center, nested adaptive quadrature."""
    def radial(theta):
        R = 0.5 * h / np.cos(theta)
        re = integrate.quad(lambda r: (sp.hankel2(0, k0 * r) * r).real, 0, R, epsabs=1e-15, limit=200)[0]
        im = integrate.quad(lambda r: (sp.hankel2(0, k0 * r) * r).imag, 0, R, epsabs=1e-15, limit=200)[0]
        return re + 1j * im
    re = integrate.quad(lambda t: radial(t).real, 0, np.pi / 4, epsabs=1e-15)[0]
    im = integrate.quad(lambda t: radial(t).imag, 0, np.pi / 4, epsabs=1e-15)[0]
    return -0.25j * k0 ** 2 * 8 * (re + 1j * im)


@pytest.fixture(scope="module")
def gd24():
    return green_domain(make_grid(2.0, 24), K0)


def _entry(gd, dx, dy):
    n = gd.grid.n
    return gd.kernel[dy + n - 1, dx + n - 1]


def test_self_term_matches_quadrature(gd24):
    ref = oracle_self(K0, gd24.grid.cell_size)
    assert abs(_entry(gd24, 0, 0) - ref) / abs(ref) < 1e-3


@pytest.mark.parametrize("dx,dy", [(1, 0), (0, 1), (1, 1), (-1, 1), (2, 1)])
def test_near_terms_match_quadrature(gd24, dx, dy):
    h = gd24.grid.cell_size
    ref = oracle_offdiag(K0, h, dx * h, dy * h)
    assert abs(_entry(gd24, dx, dy) - ref) / abs(ref) < 1e-3


@pytest.mark.parametrize("dx,dy", [(5, 3), (-10, 7), (23, -23), (0, 15)])
def test_far_terms_match_quadrature(gd24, dx, dy):
    h = gd24.grid.cell_size
    ref = oracle_offdiag(K0, h, dx * h, dy * h)
    assert abs(_entry(gd24, dx, dy) - ref) / abs(ref) < 1e-6


def test_measurement_entries_match_quadrature():
    grid = make_grid(2.0, 24)
    gs = green_measure(grid, make_ring(8, 6.0), K0)
    h = grid.cell_size
    for r, c in [(0, 0), (3, 100), (7, 575)]:
        d = gs.positions[r] - grid.centers[c]
        ref = oracle_offdiag(K0, h, d[0], d[1])
        assert abs(gs.matrix[r, c] - ref) / abs(ref) < 1e-6


def test_green_domain_symmetry(gd24):
    D = gd24.dense()
    np.testing.assert_array_equal(D, D.T)
    k = gd24.kernel
    np.testing.assert_array_equal(k, k[::-1, ::-1])
    np.testing.assert_array_equal(k, k.T)


def test_richmond_rule_is_available():
    g = make_grid(2.0, 8)
    rich = green_domain(g, K0, cell_rule="richmond")
    sq = green_domain(g, K0)
    # the equal-area-disk rule is an approximation of the same integral
    assert np.max(np.abs(rich.kernel - sq.kernel)) / np.max(np.abs(sq.kernel)) < 2e-2
    with pytest.raises(ValueError):
        green_domain(g, K0, cell_rule="bogus")


def test_toeplitz_matches_dense():
    gd = green_domain(make_grid(2.0, 12), K0)
    rng = np.random.default_rng(0)
    v = rng.normal(size=(144, 3)) + 1j * rng.normal(size=(144, 3))
    dense = gd.dense() @ v
    assert np.linalg.norm(toeplitz_matvec(gd, v) - dense) / np.linalg.norm(dense) < 1e-12
    np.testing.assert_allclose(gd.matvec(v[:, 0]), dense[:, 0], rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        toeplitz_matvec(gd, v[:100])


def test_incident_field_is_line_source():
    grid = make_grid(2.0, 4)
    tx = make_ring(3, 12.0)
    e = incident_fields(grid, tx, K0)
    d = np.hypot(*(grid.centers[5] - tx.positions[1]))
    assert e[5, 1] == pytest.approx(-0.25j * sp.hankel2(0, K0 * d), rel=1e-13)
    with pytest.raises(ValueError):
        incident_fields(grid, np.array([[0.25, 0.25]]), K0)


def test_receivers_must_be_outside():
    with pytest.raises(ValueError):
        green_measure(make_grid(2.0, 8), make_ring(4, 1.0), K0)


def test_dense_and_iterative_solvers_agree():
    grid = make_grid(2.0, 20)
    gd = green_domain(grid, K0)
    e = incident_fields(grid, make_ring(3, 12.0), K0)
    chi = rasterize_circle((0.2, 0.0), 0.5, 2.0, grid)
    a = solve_total_field(gd, chi, e, method="dense")
    b = solve_total_field(gd, chi, e, method="bicgstab", tol=1e-11)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-9
    # the computed field satisfies the discrete equation
    res = a - gd.dense() @ (chi.vector[:, None] * a) - e
    assert np.linalg.norm(res) / np.linalg.norm(e) < 1e-12


def test_zero_contrast_returns_incident_field():
    grid = make_grid(2.0, 6)
    e = incident_fields(grid, make_ring(2, 12.0), K0)
    np.testing.assert_array_equal(solve_total_field(green_domain(grid, K0), np.zeros(36), e), e)


def test_solver_reports_non_convergence():
    grid = make_grid(2.0, 16)
    gd = green_domain(grid, K0)
    e = incident_fields(grid, make_ring(2, 12.0), K0)
    with pytest.raises(SolverError) as info:
        solve_total_field(gd, rasterize_circle((0, 0), 0.8, 3.0, grid), e, method="bicgstab", maxiter=1)
    assert info.value.residual > 0


def test_solver_input_validation():
    grid = make_grid(2.0, 6)
    gd = green_domain(grid, K0)
    e = incident_fields(grid, make_ring(2, 12.0), K0)
    with pytest.raises(ValueError):
        solve_total_field(gd, np.ones(30), e)
    with pytest.raises(ValueError):
        solve_total_field(gd, np.ones(36), e, method="lu")
    with pytest.raises(ValueError):
        solve_total_field(gd, ContrastMap(make_grid(2.0, 5), np.zeros(25)), e)


def test_cylinder_matches_analytic_series_32():
    grid = make_grid(2.0, 32)
    tx, rx = make_ring(16, 12.0), make_ring(32, 6.0)
    data, _ = ForwardModel.build(grid, tx, rx, K0).simulate(rasterize_circle((0, 0), 0.25, 2.0, grid, fill="area"))
    ref = cylinder_scattered_field(0.25, 2.0, tx.positions, rx.positions, K0)
    assert np.linalg.norm(data.values - ref) / np.linalg.norm(ref) < 0.06


def test_born_regime_agrees_with_full_solution():
    grid = make_grid(2.0, 32)
    tx, rx = make_ring(16, 12.0), make_ring(32, 6.0)
    fm = ForwardModel.build(grid, tx, rx, K0)
    chi = rasterize_circle((0.1, -0.1), 0.4, 1.01, grid)
    full, _ = fm.simulate(chi)
    born = born_apply(BornOperator(fm.gs, fm.e_inc, grid), chi.vector)
    assert np.linalg.norm(born - full.vector) / np.linalg.norm(full.vector) < 0.02


def test_reciprocity_with_colocated_sensors():
    grid = make_grid(2.0, 16)
    ring = make_ring(8, 6.0)
    fm = ForwardModel.build(grid, ring, ring, K0)
    chi = rasterize_circle((0.3, 0.2), 0.4, 1.8, grid)
    data, fields = fm.simulate(chi)
    # G_S rows use the cell integral and E_inc uses point values, so the two
    # directions differ only by the cell-averaging of the source term
    assert np.linalg.norm(data.values - data.values.T) / np.linalg.norm(data.values) < 1e-3
    assert fields.e_tot.shape == (256, 8)


def test_scattered_field_and_vector_layout():
    grid = make_grid(2.0, 6)
    gs = green_measure(grid, make_ring(3, 6.0), K0)
    e = np.ones((36, 2), dtype=complex)
    d = scattered_field(gs, np.ones(36), e)
    assert d.shape == (3, 2)
    np.testing.assert_array_equal(d.vector[:3], d.values[:, 0])


def test_noise_has_exact_ratio_and_is_reproducible():
    rng = np.random.default_rng(2)
    d = ScatteredData(rng.normal(size=(32, 16)) + 1j * rng.normal(size=(32, 16)))
    a = add_noise(d, 0.2, [1, 2, 3])
    b = add_noise(d, 0.2, [1, 2, 3])
    np.testing.assert_array_equal(a.values, b.values)
    assert np.linalg.norm(a.values - d.values) / np.linalg.norm(d.values) == pytest.approx(0.2, rel=1e-12)
    c = add_noise(d, 0.2, [1, 2, 4])
    assert not np.array_equal(a.values, c.values)
    np.testing.assert_array_equal(add_noise(d, 0.0, 0).values, d.values)
    with pytest.raises(ValueError):
        add_noise(d, -0.1, 0)
    with pytest.raises(ValueError):
        add_noise(ScatteredData(np.zeros((2, 2))), 0.1, 0)
