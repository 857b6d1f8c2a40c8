"""Grids, sensor rings and scatterer generation.

Images are stored as ``(n, n)`` arrays indexed ``[iy, ix]`` (row = y), and
flattened row-major whenever an operator needs a vector of length ``n**2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

C0 = 299_792_458.0
DEFAULT_FREQUENCY = 400e6
DEFAULT_EXTENT = 2.0
CHI_MAX = 1.4


@dataclass(frozen=True)
class Grid:
    extent: float
    n: int

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError(f"grid extent must be positive, got {self.extent}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"grid size must be a positive integer, got {self.n}")

    @property
    def cell_size(self) -> float:
        return self.extent / self.n

    @property
    def axis(self) -> np.ndarray:
        """Cell-center coordinates along one side."""
        h = self.cell_size
        return -0.5 * self.extent + (np.arange(self.n) + 0.5) * h

    @property
    def size(self) -> int:
        return self.n * self.n

    def mesh(self):
        """Return ``(X, Y)`` center coordinates, each of shape ``(n, n)``."""
        return np.meshgrid(self.axis, self.axis, indexing="xy")

    @property
    def centers(self) -> np.ndarray:
        """``(n*n, 2)`` array of cell centers in row-major order."""
        X, Y = self.mesh()
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class SensorRing:
    count: int
    diameter: float

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"sensor count must be a positive integer, got {self.count}")
        if not self.diameter > 0:
            raise ValueError(f"ring diameter must be positive, got {self.diameter}")

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter

    @property
    def angles(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.count) / self.count

    @property
    def positions(self) -> np.ndarray:
        """``(count, 2)`` sensor coordinates, first sensor on the +x axis."""
        a = self.angles
        return self.radius * np.column_stack([np.cos(a), np.sin(a)])


@dataclass(frozen=True, eq=False)
class ContrastMap:
    grid: Grid
    values: np.ndarray
    empty: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.n, self.grid.n)
        if not np.all(np.isfinite(v)):
            raise ValueError("contrast values must be finite")
        if np.any(v < 0):
            raise ValueError("contrast must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def permittivity(self) -> np.ndarray:
        return self.values + 1.0


@dataclass(frozen=True)
class Scenario:
    """Full physical configuration of one experiment."""

    frequency: float = DEFAULT_FREQUENCY
    forward_grid: Grid = field(default_factory=lambda: Grid(DEFAULT_EXTENT, 64))
    inversion_grid: Grid = field(default_factory=lambda: Grid(DEFAULT_EXTENT, 30))
    tx_ring: SensorRing = field(default_factory=lambda: SensorRing(16, 12.0))
    rx_ring: SensorRing = field(default_factory=lambda: SensorRing(32, 6.0))
    noise_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if self.noise_level < 0:
            raise ValueError(f"noise level must be nonnegative, got {self.noise_level}")
        if self.forward_grid.n <= self.inversion_grid.n:
            raise ValueError("forward grid must be finer than the inversion grid")
        if not np.isclose(self.forward_grid.extent, self.inversion_grid.extent):
            raise ValueError("forward and inversion grids must cover the same domain")

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi * self.frequency / C0

    def to_dict(self) -> dict:
        return {
            "frequency": self.frequency,
            "extent": self.forward_grid.extent,
            "forward_n": self.forward_grid.n,
            "inversion_n": self.inversion_grid.n,
            "tx_count": self.tx_ring.count,
            "tx_diameter": self.tx_ring.diameter,
            "rx_count": self.rx_ring.count,
            "rx_diameter": self.rx_ring.diameter,
            "noise_level": self.noise_level,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        extent = float(d.get("extent", DEFAULT_EXTENT))
        return cls(
            frequency=float(d.get("frequency", DEFAULT_FREQUENCY)),
            forward_grid=Grid(extent, int(d.get("forward_n", 64))),
            inversion_grid=Grid(extent, int(d.get("inversion_n", 30))),
            tx_ring=SensorRing(int(d.get("tx_count", 16)), float(d.get("tx_diameter", 12.0))),
            rx_ring=SensorRing(int(d.get("rx_count", 32)), float(d.get("rx_diameter", 6.0))),
            noise_level=float(d.get("noise_level", 0.0)),
            seed=int(d.get("seed", 0)),
        )


def make_grid(extent: float, n: int) -> Grid:
    return Grid(float(extent), int(n))


def make_ring(count: int, diameter: float) -> SensorRing:
    return SensorRing(int(count), float(diameter))


def _check_eps(eps_r):
    if not eps_r >= 1:
        raise ValueError(f"relative permittivity must be >= 1, got {eps_r}")


def _disk_mask(grid, center, radius):
    X, Y = grid.mesh()
    return (X - center[0]) ** 2 + (Y - center[1]) ** 2 < radius ** 2


def _disk_fraction(grid, center, radius, sub=16):
    X, Y = grid.mesh()
    h = grid.cell_size
    offs = ((np.arange(sub) + 0.5) / sub - 0.5) * h
    acc = np.zeros_like(X)
    for ox in offs:
        for oy in offs:
            acc += (X + ox - center[0]) ** 2 + (Y + oy - center[1]) ** 2 < radius ** 2
    return acc / sub ** 2


def rasterize_circle(center, radius: float, eps_r: float, grid: Grid,
                     fill: str = "center") -> ContrastMap:
    """Disk of uniform permittivity.

    ``fill="center"`` puts a cell inside iff its center is inside;
    ``fill="area"`` weights each cell by its covered area fraction (16x16
    subsampling), which removes most of the staircase error of coarse grids.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    _check_eps(eps_r)
    if fill == "center":
        frac = _disk_mask(grid, center, radius).astype(float)
    elif fill == "area":
        frac = _disk_fraction(grid, center, radius)
    else:
        raise ValueError(f"unknown fill rule {fill!r}")
    return ContrastMap(grid, (eps_r - 1.0) * frac)


def rasterize_annulus(center, outer: float, inner: float, eps_r: float, grid: Grid) -> ContrastMap:
    if not outer > inner >= 0:
        raise ValueError("annulus needs outer > inner >= 0")
    _check_eps(eps_r)
    mask = _disk_mask(grid, center, outer)
    if inner > 0:
        mask &= ~_disk_mask(grid, center, inner)
    return ContrastMap(grid, np.where(mask, eps_r - 1.0, 0.0))


# classical "Austria" profile geometry in meters
AUSTRIA_DISKS = (((-0.3, 0.6), 0.2), ((0.3, 0.6), 0.2))
AUSTRIA_RING = ((0.0, -0.2), 0.6, 0.3)


def austria_profile(grid: Grid, eps_r: float = 2.0) -> ContrastMap:
    """Two disks above an annulus, all at the same permittivity."""
    _check_eps(eps_r)
    center, outer, inner = AUSTRIA_RING
    mask = _disk_mask(grid, center, outer) & ~_disk_mask(grid, center, inner)
    for c, r in AUSTRIA_DISKS:
        mask |= _disk_mask(grid, c, r)
    return ContrastMap(grid, np.where(mask, eps_r - 1.0, 0.0))


def rasterize_glyph(bitmap, eps_r: float, grid: Grid) -> ContrastMap:
    """Binarise a grayscale bitmap at half its maximum and upsample it onto ``grid``.

    Bitmap row 0 is the top of the picture, so it lands on the largest y.
    An all-zero bitmap yields an all-zero map flagged ``empty``.
    """
    if not 1.5 <= eps_r <= 2.4:
        raise ValueError(f"glyph permittivity must lie in [1.5, 2.4], got {eps_r}")
    bm = np.asarray(bitmap, dtype=float)
    if bm.ndim != 2:
        raise ValueError("bitmap must be two-dimensional")
    peak = bm.max()
    if peak <= 0:
        warnings.warn("empty glyph bitmap; returning a zero contrast map", stacklevel=2)
        return ContrastMap(grid, np.zeros((grid.n, grid.n)), empty=True)
    fg = bm >= 0.5 * peak
    rows, cols = bm.shape
    # nearest source pixel for every destination cell center
    ri = np.minimum(((np.arange(grid.n) + 0.5) * rows / grid.n).astype(int), rows - 1)
    ci = np.minimum(((np.arange(grid.n) + 0.5) * cols / grid.n).astype(int), cols - 1)
    up = fg[np.ix_(ri, ci)][::-1, :]
    return ContrastMap(grid, np.where(up, eps_r - 1.0, 0.0))


def _overlap_matrix(n_dst: int, n_src: int) -> np.ndarray:
    """Fraction of each source interval covered by each destination interval,
    normalised so that every row sums to one (unit-length domain)."""
    src = np.linspace(0.0, 1.0, n_src + 1)
    dst = np.linspace(0.0, 1.0, n_dst + 1)
    lo = np.maximum(dst[:-1, None], src[None, :-1])
    hi = np.minimum(dst[1:, None], src[None, 1:])
    w = np.clip(hi - lo, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def resample_contrast(src: ContrastMap, dst_grid: Grid) -> ContrastMap:
    """Area-weighted average of the source cells overlapping each destination cell."""
    if not np.isclose(src.grid.extent, dst_grid.extent, rtol=0, atol=1e-12):
        raise ValueError("source and destination grids must have the same extent")
    if src.grid.n == dst_grid.n:
        return ContrastMap(dst_grid, src.values.copy())
    W = _overlap_matrix(dst_grid.n, src.grid.n)
    out = W @ src.values @ W.T
    return ContrastMap(dst_grid, np.clip(out, 0.0, None))
