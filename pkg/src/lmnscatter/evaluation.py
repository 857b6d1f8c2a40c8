"""Reconstruction metrics, noise sweeps, CSV reports and PNG renders."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .forward import ScatteredData, add_noise

CSV_HEADER = ["method", "noise_level", "mean_re", "mean_time_s", "m_t"]


def relative_error(eps_rec, eps_true) -> float:
    """``||eps_rec - eps_true||_F / ||eps_true||_F``."""
    eps_rec = np.asarray(eps_rec, dtype=float)
    eps_true = np.asarray(eps_true, dtype=float)
    if eps_rec.shape != eps_true.shape:
        raise ValueError("images must have the same shape")
    denom = np.linalg.norm(eps_true)
    if denom == 0:
        raise ValueError("reference image is all zeros")
    return float(np.linalg.norm(eps_rec - eps_true) / denom)


def mean_relative_error(recs, truths) -> float:
    """Average of :func:`relative_error` over paired test images."""
    errs = [relative_error(r, t) for r, t in zip(recs, truths)]
    if not errs:
        raise ValueError("no test images")
    return float(np.mean(errs))


@dataclass
class SweepRow:
    method: str
    noise_level: float
    mean_re: float
    mean_time_s: float
    m_t: int
    errors: list = field(default_factory=list)


@dataclass
class SweepReport:
    rows: list
    scenario: dict = field(default_factory=dict)
    setup_time_s: dict = field(default_factory=dict)

    def row(self, method, level) -> SweepRow:
        for r in self.rows:
            if r.method == method and np.isclose(r.noise_level, level):
                return r
        raise KeyError((method, level))

    def series(self, method) -> np.ndarray:
        return np.array([r.mean_re for r in self.rows if r.method == method])

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            t = f"{r.mean_time_s:.6f}" if timing else "nan"
            w.writerow([r.method, f"{r.noise_level:g}", f"{r.mean_re:.6f}", t, r.m_t])
        return buf.getvalue()


def noise_seed(base_seed: int, sample: int, level_index: int) -> list:
    return [int(base_seed), int(sample), int(level_index), 7]


def noise_sweep(methods: dict, clean_data, truths, levels, seed: int = 0,
                scenario: dict | None = None) -> SweepReport:
    """Mean relative permittivity error per (method, noise level).

    ``methods`` maps a name to ``fn(data_vector) -> contrast image``;
    ``clean_data`` is a sequence of :class:`ScatteredData` (or receiver x
    incidence matrices) and ``truths`` the matching contrast labels.  Noise for
    sample ``i`` at level ``j`` is seeded by ``(seed, i, j)``, identically for
    every method.  Only the reconstruction call is timed.
    """
    if not methods:
        raise ValueError("no reconstruction methods given")
    clean = [d if isinstance(d, ScatteredData) else ScatteredData(np.asarray(d)) for d in clean_data]
    truths = [np.asarray(t, dtype=float) for t in truths]
    rows = []
    for name, fn in methods.items():
        if fn is None:
            raise ValueError(f"method {name!r} has no reconstructor (missing model?)")
        for j, level in enumerate(levels):
            errs, times = [], []
            for i, (d, t) in enumerate(zip(clean, truths)):
                noisy = add_noise(d, level, noise_seed(seed, i, j))
                t0 = time.perf_counter()
                rec = np.asarray(fn(noisy.vector), dtype=float)
                times.append(time.perf_counter() - t0)
                errs.append(relative_error(rec.reshape(t.shape) + 1.0, t + 1.0))
            rows.append(SweepRow(name, float(level), float(np.mean(errs)), float(np.mean(times)),
                                 len(errs), errs))
    return SweepReport(rows, scenario or {})


def render_map(image, vmin: float, vmax: float, cmap: str = "viridis") -> bytes:
    """Color-mapped 8-bit PNG of ``image`` (row 0 drawn at the bottom).

    The color scale bounds are stored as PNG text chunks.
    """
    from matplotlib import colormaps
    from PIL import Image, PngImagePlugin

    img = np.asarray(image, dtype=float)
    if not np.all(np.isfinite(img)):
        raise ValueError("image must be finite")
    if not vmax > vmin:
        raise ValueError("vmax must exceed vmin")
    idx = np.clip(np.round((img - vmin) / (vmax - vmin) * 255), 0, 255).astype(np.uint8)
    palette = (colormaps[cmap](np.linspace(0, 1, 256))[:, :3] * 255).round().astype(np.uint8)
    rgb = palette[idx[::-1]]
    info = PngImagePlugin.PngInfo()
    info.add_text("vmin", repr(float(vmin)))
    info.add_text("vmax", repr(float(vmax)))
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()
