import numpy as np
import pytest

from lmnscatter.datasets import synthesize
from lmnscatter.glyphs import glyph_bitmaps, procedural_glyph, read_idx, write_idx
from lmnscatter.scene import austria_profile, resample_contrast


def test_idx_roundtrip(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    p = tmp_path / "x.idx"
    write_idx(p, arr)
    raw = p.read_bytes()
    assert raw[:4] == bytes([0, 0, 8, 3]) and int.from_bytes(raw[4:8], "big") == 3
    np.testing.assert_array_equal(read_idx(p), arr)
    p.write_bytes(raw[:-5])
    with pytest.raises(ValueError):
        read_idx(p)
    p.write_bytes(b"\x00\x00\x0d\x01" + raw[4:])
    with pytest.raises(ValueError):
        read_idx(p)


def test_procedural_glyphs():
    g = procedural_glyph(np.random.default_rng(1))
    assert g.shape == (28, 28) and g.dtype == np.uint8 and g.max() == 255
    a = glyph_bitmaps(5, 7)
    np.testing.assert_array_equal(a[3:], glyph_bitmaps(2, 7, start=3))
    assert not np.array_equal(a[0], a[1])
    assert glyph_bitmaps(0, 7).shape == (0, 28, 28)


def test_idx_source_takes_precedence(tmp_path):
    imgs = np.zeros((4, 28, 28), dtype=np.uint8)
    for i in range(4):
        imgs[i, i * 5:i * 5 + 4] = 255
    write_idx(tmp_path / "g.idx", imgs)
    picked = glyph_bitmaps(6, 0, tmp_path / "g.idx")
    assert all(any(np.array_equal(p, im) for im in imgs) for p in picked)


def test_synthesize_glyphs(small_scenario):
    ds = synthesize(small_scenario, 4, seed=3)
    assert ds.labels.shape == (4, 10, 10) and ds.data.shape == (4, 8, 4)
    assert np.all((1.5 <= ds.eps_r) & (ds.eps_r <= 2.4))
    assert ds.labels.max() <= ds.eps_r.max() - 1 + 1e-12
    tail = synthesize(small_scenario, 2, seed=3, start=2)
    np.testing.assert_array_equal(tail.data, ds.data[2:])
    np.testing.assert_array_equal(tail.labels, ds.labels[2:])
    assert ds.data_matrix().shape == (32, 4)
    np.testing.assert_array_equal(ds.data_matrix()[:, 1], ds.data[1].T.ravel())
    np.testing.assert_array_equal(ds.label_matrix([0, 2])[:, 1], ds.labels[2].ravel())
    assert len(ds.subset([1, 3])) == 2


def test_synthesize_shapes_and_austria(small_scenario):
    shapes = synthesize(small_scenario, 3, seed=1, kind="shapes")
    assert np.all((1.1 <= shapes.eps_r) & (shapes.eps_r <= 2.0))
    aus = synthesize(small_scenario, 1, seed=0, kind="austria")
    ref = resample_contrast(austria_profile(small_scenario.forward_grid), small_scenario.inversion_grid)
    np.testing.assert_array_equal(aus.labels[0], ref.values)
    with pytest.raises(ValueError):
        synthesize(small_scenario, 1, seed=0, kind="faces")
