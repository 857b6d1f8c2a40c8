"""Synthetic training and test sets: contrast labels plus clean scattered data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardModel
from .glyphs import glyph_bitmaps
from .scene import (
    ContrastMap,
    Scenario,
    austria_profile,
    rasterize_glyph,
    resample_contrast,
)


@dataclass
class Dataset:
    """Labels live on the inversion grid; data are ``(S, N_r, N_i)`` clean fields."""

    scenario: Scenario
    labels: np.ndarray
    data: np.ndarray
    eps_r: np.ndarray
    seed: int = 0
    kind: str = "glyph"

    def __len__(self):
        return self.labels.shape[0]

    def data_matrix(self, idx=None) -> np.ndarray:
        """Stacked measurement vectors ``(N_r*N_i, S)``, incidence-major."""
        d = self.data if idx is None else self.data[idx]
        return d.transpose(0, 2, 1).reshape(d.shape[0], -1).T

    def label_matrix(self, idx=None) -> np.ndarray:
        lab = self.labels if idx is None else self.labels[idx]
        return lab.reshape(lab.shape[0], -1).T

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.scenario, self.labels[idx], self.data[idx], self.eps_r[idx], self.seed, self.kind)


def _shape_sample(rng, grid):
    """1-3 disks / rings with permittivities in [1.1, 2.0] (max where overlapping)."""
    X, Y = grid.mesh()
    chi = np.zeros((grid.n, grid.n))
    eps_list = []
    for _ in range(rng.integers(1, 4)):
        eps = rng.uniform(1.1, 2.0)
        eps_list.append(eps)
        cx, cy = rng.uniform(-0.55, 0.55, size=2)
        d2 = (X - cx) ** 2 + (Y - cy) ** 2
        if rng.random() < 0.5:
            r = rng.uniform(0.12, 0.35)
            mask = d2 < r * r
        else:
            outer = rng.uniform(0.3, 0.6)
            inner = outer * rng.uniform(0.4, 0.7)
            mask = (d2 < outer ** 2) & (d2 >= inner ** 2)
        chi = np.maximum(chi, np.where(mask, eps - 1.0, 0.0))
    return ContrastMap(grid, chi), max(eps_list)


def synthesize(scenario: Scenario, count: int, seed: int, kind: str = "glyph",
               idx_images=None, fwd: ForwardModel | None = None, progress=None,
               start: int = 0) -> Dataset:
    """Generate ``count`` samples on the forward grid and label them on the inversion grid.

    ``kind`` is ``"glyph"`` (letter-like shapes, eps_r in [1.5, 2.4]),
    ``"shapes"`` (disks and rings, eps_r in [1.1, 2.0]) or ``"austria"``.
    Per-sample randomness depends only on ``(seed, i)``; ``start`` offsets the
    sample index so that chunks generated separately concatenate exactly.
    """
    fgrid, igrid = scenario.forward_grid, scenario.inversion_grid
    fwd = fwd or ForwardModel.build(fgrid, scenario.tx_ring, scenario.rx_ring, scenario.wavenumber)
    bitmaps = glyph_bitmaps(count, seed, idx_images, start) if kind == "glyph" else None
    labels = np.zeros((count, igrid.n, igrid.n))
    data = np.zeros((count, scenario.rx_ring.count, scenario.tx_ring.count), dtype=complex)
    eps = np.zeros(count)
    for i in range(count):
        rng = np.random.default_rng([seed, start + i, 1])
        if kind == "glyph":
            eps[i] = rng.uniform(1.5, 2.4)
            chi = rasterize_glyph(bitmaps[i], eps[i], fgrid)
        elif kind == "shapes":
            chi, eps[i] = _shape_sample(rng, fgrid)
        elif kind == "austria":
            eps[i] = 2.0
            chi = austria_profile(fgrid, 2.0)
        else:
            raise ValueError(f"unknown dataset kind {kind!r}")
        sca, _ = fwd.simulate(chi)
        data[i] = sca.values
        labels[i] = resample_contrast(chi, igrid).values
        if progress is not None:
            progress(i)
    return Dataset(scenario, labels, data, eps, seed, kind)
