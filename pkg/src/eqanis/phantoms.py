"""Rasterized test phantoms and noisy measurement simulation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .physics import ScanGrid

ROD_WIDTH = 2.5e-3

# Snake: five rods (x0, x1, y0, y1) in mm, joined end to side without overlap.
_SNAKE_MM = (
    (-10.0, 10.0, 8.75, 11.25),  # 20
    (7.5, 10.0, 0.0, 8.75),  # 8.75
    (-7.5, 10.0, -2.5, 0.0),  # 17.5
    (-7.5, -5.0, -7.5, -2.5),  # 5
    (-7.5, 7.5, -10.0, -7.5),  # 15
)
SNAKE_LENGTHS_MM = (20.0, 17.5, 15.0, 8.75, 5.0)
RESOLUTION_LENGTHS_MM = (20.0, 17.5)


@dataclass
class Phantom:
    """Concentration image on a :class:`ScanGrid`; ``values`` has shape ``(ny, nx)``."""

    values: np.ndarray
    grid: ScanGrid
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("phantom values must be finite and >= 0")

    def vector(self):
        """Concentration vector in grid position order (x fastest)."""
        return self.values.ravel().copy()

    @property
    def filled_area(self):
        dx, dy = self.grid.spacing
        return float(np.count_nonzero(self.values)) * dx * dy


def _bounds(grid: ScanGrid):
    cx, cy = grid.center[:2]
    return cx - grid.fov[0] / 2, cx + grid.fov[0] / 2, cy - grid.fov[1] / 2, cy + grid.fov[1] / 2


def _rasterize(grid: ScanGrid, rects, value=1.0):
    """Cell-centre inclusion ``x0 <= x < x1`` for axis-aligned rectangles (in m)."""
    bx0, bx1, by0, by1 = _bounds(grid)
    tol = 1e-12
    for x0, x1, y0, y1 in rects:
        if x0 < bx0 - tol or x1 > bx1 + tol or y0 < by0 - tol or y1 > by1 + tol:
            raise ValueError("phantom geometry lies outside the field of view")
    xs, ys = grid.axes()
    X, Y = np.meshgrid(xs, ys)
    mask = np.zeros(grid.shape, bool)
    for x0, x1, y0, y1 in rects:
        mask |= (X >= x0 - tol) & (X < x1 - tol) & (Y >= y0 - tol) & (Y < y1 - tol)
    return np.where(mask, value, 0.0)


def _edge_clearance(grid: ScanGrid, rects):
    """Smallest distance between a rectangle edge and a cell-centre line, in units of the spacing."""
    xs, ys = grid.axes()
    dx, dy = grid.spacing
    ex = np.array([[r[0], r[1]] for r in rects]).ravel()
    ey = np.array([[r[2], r[3]] for r in rects]).ravel()
    cx = np.abs((ex[:, None] - xs[0]) / dx - np.round((ex[:, None] - xs[0]) / dx)).min()
    cy = np.abs((ey[:, None] - ys[0]) / dy - np.round((ey[:, None] - ys[0]) / dy)).min()
    return float(min(cx, cy))


def _area_preserving(grid: ScanGrid, rects, n_shift=16):
    """Sub-cell shift whose rasterized area is closest to the exact area.

    Ties go to the largest edge clearance, then the smallest shift.
    """
    target = sum((x1 - x0) * (y1 - y0) for x0, x1, y0, y1 in rects)
    dx, dy = grid.spacing
    frac = (np.arange(n_shift) + 0.5) / n_shift - 0.5
    best = None
    for fx in frac:
        for fy in frac:
            moved = [(x0 + fx * dx, x1 + fx * dx, y0 + fy * dy, y1 + fy * dy) for x0, x1, y0, y1 in rects]
            try:
                n = np.count_nonzero(_rasterize(grid, moved))
            except ValueError:
                continue
            key = (round(abs(n * dx * dy - target) / (dx * dy), 9), -round(_edge_clearance(grid, moved), 6),
                   round(fx * fx + fy * fy, 12))
            if best is None or key < best[0]:
                best = (key, moved)
    if best is None:
        raise ValueError("phantom geometry lies outside the field of view")
    return best[1]


def snake(grid: ScanGrid, value=1.0, offset=(0.0, 0.0), fit_area=True):
    """Five rods arranged as a snake, bounding box centred on the grid plus ``offset`` (m).

    With ``fit_area`` the layout is moved by less than one cell so that the
    rasterized area best matches the nominal rod area.
    """
    r = np.array(_SNAKE_MM) * 1e-3
    ox = grid.center[0] + offset[0] - 0.5 * (r[:, 0].min() + r[:, 1].max())
    oy = grid.center[1] + offset[1] - 0.5 * (r[:, 2].min() + r[:, 3].max())
    rects = [(x0 + ox, x1 + ox, y0 + oy, y1 + oy) for x0, x1, y0, y1 in r]
    if fit_area:
        rects = _area_preserving(grid, rects)
    params = {"value": value, "offset": list(offset), "fit_area": fit_area}
    return Phantom(_rasterize(grid, rects, value), grid, "snake", params)


def resolution(grid: ScanGrid, distance, value=1.0):
    """Two parallel rods along ``y`` with an edge-to-edge gap ``distance`` (m)."""
    if not distance > 0:
        raise ValueError("distance must be > 0")
    l1, l2 = (v * 1e-3 for v in RESOLUTION_LENGTHS_MM)
    cx, cy = grid.center[:2]
    h = distance / 2
    rects = [
        (cx - h - ROD_WIDTH, cx - h, cy - l1 / 2, cy + l1 / 2),
        (cx + h, cx + h + ROD_WIDTH, cy - l2 / 2, cy + l2 / 2),
    ]
    return Phantom(_rasterize(grid, rects, value), grid, "resolution", {"distance": distance, "value": value})


def delta(grid: ScanGrid, x=0.0, y=0.0, value=1.0):
    """Single cell containing ``(x, y)``."""
    bx0, bx1, by0, by1 = _bounds(grid)
    if not (bx0 <= x <= bx1 and by0 <= y <= by1):
        raise ValueError("delta position lies outside the field of view")
    dx, dy = grid.spacing
    i = min(int((x - bx0) // dx), grid.nx - 1)
    j = min(int((y - by0) // dy), grid.ny - 1)
    v = np.zeros(grid.shape)
    v[j, i] = value
    return Phantom(v, grid, "delta", {"x": x, "y": y, "value": value})


def disk(grid: ScanGrid, radius, x=0.0, y=0.0, value=1.0):
    if not radius > 0:
        raise ValueError("radius must be > 0")
    bx0, bx1, by0, by1 = _bounds(grid)
    if x - radius < bx0 or x + radius > bx1 or y - radius < by0 or y + radius > by1:
        raise ValueError("disk lies outside the field of view")
    xs, ys = grid.axes()
    X, Y = np.meshgrid(xs, ys)
    v = np.where((X - x) ** 2 + (Y - y) ** 2 <= radius**2, value, 0.0)
    return Phantom(v, grid, "disk", {"radius": radius, "x": x, "y": y, "value": value})


PHANTOMS = {"snake": snake, "resolution": resolution, "delta": delta, "disk": disk}


def phantom_generate(kind, grid: ScanGrid, **kw) -> Phantom:
    if kind not in PHANTOMS:
        raise ValueError(f"unknown phantom {kind!r}; choose from {sorted(PHANTOMS)}")
    return PHANTOMS[kind](grid, **kw)


def simulate_measurement(S, c, snr_db=40.0, seed=None, sigma=None):
    """Noisy measurement ``u = S c + e`` with circular complex Gaussian ``e``.

    ``sigma`` is the per-entry standard deviation ``sqrt(E|e_k|^2)``. If not
    given it is set from ``snr_db`` so that ``E ||e||^2 = ||S c||^2 / 10^(snr/10)``
    (SNR over the whole vector). Returns ``(u, sigma_rows)``; with
    ``snr_db = inf`` and no ``sigma`` the data are exact and ``sigma_rows`` is 1.
    """
    A = S.matrix() if callable(getattr(S, "matrix", None)) else np.asarray(S)
    c = c.vector() if isinstance(c, Phantom) else np.asarray(c, dtype=float).ravel()
    if A.ndim != 2 or A.shape[1] != c.size:
        raise ValueError(f"shape mismatch: S {A.shape}, c {c.shape}")
    clean = A @ c
    m = clean.size
    if sigma is None:
        if np.isinf(snr_db):
            return clean, np.ones(m)
        sigma = np.linalg.norm(clean) / (np.sqrt(m) * 10 ** (snr_db / 20))
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    noise = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * (sigma / np.sqrt(2))
    rows = np.full(m, sigma if sigma > 0 else 1.0)
    return clean + noise, rows
