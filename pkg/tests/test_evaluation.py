import io

import numpy as np
import pytest
from PIL import Image

from lmnscatter.evaluation import (
    CSV_HEADER, mean_relative_error, noise_seed, noise_sweep, relative_error, render_map,
)
from lmnscatter.forward import ScatteredData, add_noise


def test_relative_error_values():
    ref = np.ones((3, 3))
    assert relative_error(ref, ref) == 0.0
    assert relative_error(2 * ref, ref) == pytest.approx(1.0)
    assert relative_error(np.zeros((2, 2)), np.full((2, 2), 4.0)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_error(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        relative_error(np.ones(3), np.ones(4))
    assert mean_relative_error([ref, 2 * ref], [ref, ref]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        mean_relative_error([], [])


def test_sweep_uses_shared_noise_and_permittivity():
    rng = np.random.default_rng(0)
    clean = [ScatteredData(rng.normal(size=(4, 2)) + 0j) for _ in range(3)]
    truths = [np.full((2, 2), 0.5) for _ in range(3)]
    seen = {"a": [], "b": []}

    def recorder(name):
        def fn(y):
            seen[name].append(y.copy())
            return np.zeros(4)
        return fn

    rep = noise_sweep({"a": recorder("a"), "b": recorder("b")}, clean, truths, [0.0, 0.1], seed=9)
    for ya, yb in zip(seen["a"], seen["b"]):
        np.testing.assert_array_equal(ya, yb)
    expected = add_noise(clean[2], 0.1, noise_seed(9, 2, 1)).vector
    np.testing.assert_array_equal(seen["a"][5], expected)
    # a zero contrast against chi = 0.5 is an error of 0.5 / 1.5 in permittivity
    assert rep.row("a", 0.1).mean_re == pytest.approx(1 / 3)
    assert rep.row("b", 0.0).m_t == 3
    np.testing.assert_allclose(rep.series("a"), [1 / 3, 1 / 3])
    with pytest.raises(KeyError):
        rep.row("c", 0.0)
    with pytest.raises(ValueError):
        noise_sweep({}, clean, truths, [0.0])
    with pytest.raises(ValueError):
        noise_sweep({"a": None}, clean, truths, [0.0])


def test_csv_layout():
    rep = noise_sweep({"m": lambda y: np.ones(4)}, [ScatteredData(np.ones((2, 2)) + 0j)],
                      [np.ones((2, 2))], [0.0, 0.2])
    lines = rep.to_csv(timing=False).splitlines()
    assert lines[0].split(",") == CSV_HEADER
    assert lines[1] == "m,0,0.000000,nan,1"
    assert lines[2].startswith("m,0.2,")
    assert "nan" not in rep.to_csv(timing=True)


def test_render_map_png():
    img = np.array([[0.0, 1.0], [0.5, 0.25]])
    png = Image.open(io.BytesIO(render_map(img, 0.0, 1.0)))
    assert png.size == (2, 2) and png.mode == "RGB"
    assert float(png.text["vmin"]) == 0.0 and float(png.text["vmax"]) == 1.0
    px = np.asarray(png)
    # row 0 of the image is drawn at the bottom
    assert tuple(px[1, 0]) != tuple(px[0, 0])
    assert render_map(img, 0.0, 1.0) == render_map(img, 0.0, 1.0)
    with pytest.raises(ValueError):
        render_map(img, 1.0, 1.0)
    with pytest.raises(ValueError):
        render_map(np.full((2, 2), np.nan), 0.0, 1.0)
