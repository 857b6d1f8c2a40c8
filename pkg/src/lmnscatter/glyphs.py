"""Glyph bitmaps: IDX file ingestion and a procedural stroke generator."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

IDX_UBYTE = 0x08


def read_idx(path) -> np.ndarray:
    """Read an IDX file of unsigned bytes (e.g. MNIST images, magic 0x00000803)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ValueError("file too short for an IDX header")
    zero, dtype, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or dtype != IDX_UBYTE:
        raise ValueError(f"unsupported IDX magic {raw[:4].hex()}")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    start = 4 + 4 * ndim
    count = int(np.prod(dims))
    if len(raw) - start < count:
        raise ValueError("IDX payload is truncated")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=start).reshape(dims)


def write_idx(path, array) -> None:
    arr = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">HBB", 0, IDX_UBYTE, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def _stroke_points(rng, kind):
    c = rng.uniform(10.0, 18.0, size=2)
    if kind == "line":
        ang = rng.uniform(0, np.pi)
        half = rng.uniform(5.0, 9.0)
        t = np.linspace(-half, half, 60)
        return c + np.outer(t, [np.cos(ang), np.sin(ang)])
    rx, ry = rng.uniform(3.5, 7.5, size=2)
    if kind == "arc":
        start = rng.uniform(0, 2 * np.pi)
        span = rng.uniform(0.9, 1.6) * np.pi
    else:  # closed loop
        start, span = 0.0, 2 * np.pi
    t = start + np.linspace(0, span, 90)
    return c + np.column_stack([rx * np.cos(t), ry * np.sin(t)])


def procedural_glyph(rng, size: int = 28) -> np.ndarray:
    """One handwriting-like 28x28 uint8 bitmap built from 1-3 thick strokes."""
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    canvas = np.zeros((size, size))
    for _ in range(rng.integers(1, 4)):
        kind = rng.choice(["line", "arc", "loop"])
        pts = np.clip(_stroke_points(rng, kind), 3.0, size - 3.0)
        width = rng.uniform(1.2, 2.2)
        d = np.min(np.hypot(xx[..., None] - pts[:, 0], yy[..., None] - pts[:, 1]), axis=-1)
        canvas = np.maximum(canvas, np.clip(width + 0.5 - d, 0.0, 1.0))
    return np.round(255 * canvas).astype(np.uint8)


def glyph_bitmaps(count: int, seed: int, idx_images=None, start: int = 0) -> np.ndarray:
    """Bitmaps for samples ``start .. start+count-1``.

    Sample ``i`` uses the generator seeded with ``(seed, i)``, either to pick
    an image from the IDX file (when given) or to draw strokes, so any subset
    can be regenerated independently.
    """
    if count == 0:
        return np.zeros((0, 28, 28), dtype=np.uint8)
    rngs = [np.random.default_rng([seed, i]) for i in range(start, start + count)]
    if idx_images is not None:
        imgs = read_idx(idx_images)
        if imgs.ndim != 3 or imgs.shape[0] == 0:
            raise ValueError("IDX image file must hold a non-empty stack of 2D images")
        return np.stack([imgs[r.integers(imgs.shape[0])] for r in rngs])
    return np.stack([procedural_glyph(r) for r in rngs])
