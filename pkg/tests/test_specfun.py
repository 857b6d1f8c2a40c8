import mpmath
import numpy as np
import pytest

from lmnscatter.specfun import bessel_all, bessel_j, bessel_y, hankel2

mpmath.mp.dps = 30


def _oracle(x):
    return [float(f(0, x)) for f in (mpmath.besselj, mpmath.bessely)] + \
           [float(f(1, x)) for f in (mpmath.besselj, mpmath.bessely)]


@pytest.fixture(scope="module")
def points():
    rng = np.random.default_rng(0)
    # cover every regime plus values straddling the switch points
    return np.concatenate([rng.uniform(1e-6, 100.0, 300), np.geomspace(1e-8, 1.0, 20),
                           [2.0 - 1e-12, 2.0, 2.0 + 1e-12, 25.0 - 1e-12, 25.0, 25.0 + 1e-12]])


def test_against_high_precision_oracle(points):
    j0, j1, y0, y1 = bessel_all(points)
    for i, x in enumerate(points):
        rj0, ry0, rj1, ry1 = _oracle(mpmath.mpf(float(x)))
        for got, ref in ((j0[i], rj0), (j1[i], rj1), (y0[i], ry0), (y1[i], ry1)):
            # absolute floor handles the zeros of the functions
            assert abs(got - ref) <= 1e-10 * max(abs(ref), 1e-3), (x, got, ref)


def test_wronskian(points):
    j0, j1, y0, y1 = bessel_all(points)
    assert np.max(np.abs((j1 * y0 - j0 * y1) * np.pi * points / 2 - 1)) < 1e-9


def test_values_at_origin_and_known_points():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    # first zero of J0
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-14


def test_hankel_is_j_minus_jy():
    x = np.linspace(0.1, 60, 50)
    for n in (0, 1):
        np.testing.assert_allclose(hankel2(n, x), bessel_j(n, x) - 1j * bessel_y(n, x), rtol=0, atol=0)


def test_small_argument_y_is_logarithmic():
    x = 1e-6
    expected = 2 / np.pi * (np.log(x / 2) + np.euler_gamma)
    assert abs(bessel_y(0, x) - expected) < 1e-10


@pytest.mark.parametrize("call", [lambda: bessel_j(2, 1.0), lambda: bessel_y(0, 0.0),
                                  lambda: bessel_j(0, -1.0), lambda: hankel2(1, -2.0),
                                  lambda: bessel_j(0, np.nan)])
def test_invalid_input_rejected(call):
    with pytest.raises(ValueError):
        call()


def test_array_shape_preserved():
    x = np.linspace(1, 5, 12).reshape(3, 4)
    assert bessel_j(1, x).shape == (3, 4)
    assert hankel2(0, x).dtype == complex
