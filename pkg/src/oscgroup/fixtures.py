"""Seeded synthetic inputs with known ground truth.

Every generator draws from ``numpy.random.default_rng(seed)`` so outputs
are bit-reproducible.
"""
from __future__ import annotations

import math

import numpy as np

LEVELS3 = (0.0, 128.0, 255.0)


def two_blobs(seed: int = 0, n_per_blob: int = 60, sigma: float = 3.0,
              centers=((30.0, 50.0), (70.0, 50.0))):
    """Two Gaussian blobs. Returns ``(points, truth)``."""
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(c, sigma, (n_per_blob, 2)) for c in centers])
    truth = np.repeat(np.arange(len(centers)), n_per_blob)
    return pts, truth


def uniform_plus_cluster(seed: int = 0, n_uniform: int = 300, n_cluster: int = 100,
                         size: float = 100.0, sigma: float = 3.0, center=(50.0, 50.0)):
    """Uniform clutter plus one Gaussian cluster. ``truth`` is 1 for cluster points."""
    rng = np.random.default_rng(seed)
    clutter = rng.uniform(0.0, size, (n_uniform, 2))
    cluster = rng.normal(center, sigma, (n_cluster, 2))
    pts = np.vstack([clutter, cluster])
    truth = np.concatenate([np.zeros(n_uniform, int), np.ones(n_cluster, int)])
    return pts, truth


# -- orientation grids ------------------------------------------------------

def random_grid(seed: int = 0, shape=(20, 20)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, math.pi, shape)


def _embed(theta, cells, orientations, jitter_deg, rng):
    theta = theta.copy()
    for (r, c), o in zip(cells, orientations):
        theta[r, c] = (o + math.radians(jitter_deg) * rng.normal()) % math.pi
    return theta


def vertical_contour(seed: int = 0, shape=(20, 20), length: int = 10, jitter_deg: float = 10.0,
                     col: int | None = None, top: int | None = None):
    """Random grid with one vertical contour. Returns ``(theta, cells)``."""
    rng = np.random.default_rng(seed)
    rows, cols = shape
    theta = rng.uniform(0.0, math.pi, shape)
    col = cols // 2 if col is None else col
    top = (rows - length) // 2 if top is None else top
    cells = [(top + i, col) for i in range(length)]
    return _embed(theta, cells, [math.pi / 2] * length, jitter_deg, rng), cells


def crossing_contours(seed: int = 0, shape=(20, 20), length: int = 10, jitter_deg: float = 10.0):
    """Two diagonal contours forming an X that cross between cells.

    Returns ``(theta, [cells_a, cells_b])``.
    """
    rng = np.random.default_rng(seed)
    rows, cols = shape
    theta = rng.uniform(0.0, math.pi, shape)
    r0 = (rows - length) // 2
    c0 = (cols - length) // 2
    a = [(r0 + i, c0 + i) for i in range(length)]
    b = [(r0 + i, c0 + length - 1 - i) for i in range(length)]
    # y grows downward: a runs down-right (+45 deg), b runs down-left (135 deg)
    theta = _embed(theta, a, [math.pi / 4] * length, jitter_deg, rng)
    theta = _embed(theta, b, [3 * math.pi / 4] * length, jitter_deg, rng)
    return theta, [a, b]


def curved_contour(seed: int = 0, shape=(24, 24), length: int = 12, jitter_deg: float = 10.0,
                   radius: float = 20.0):
    """A gentle circular arc of ``length`` 8-connected cells with tangent-aligned elements."""
    rng = np.random.default_rng(seed)
    rows, cols = shape
    theta = rng.uniform(0.0, math.pi, shape)
    # arc bulging to the right, centred left of the grid
    cy, cx = rows / 2.0, cols / 2.0 - radius + 2.0
    cells, orients = [], []
    # small angular steps so consecutive distinct cells are 8-adjacent
    for phi in np.arange(-math.pi / 2, math.pi / 2, 0.1 / radius):
        y, x = cy + radius * math.sin(phi), cx + radius * math.cos(phi)
        cell = (int(round(y)), int(round(x)))
        if not (0 <= cell[0] < rows and 0 <= cell[1] < cols) or (cells and cell == cells[-1]):
            continue
        cells.append(cell)
        # tangent direction of the arc in (x, y) is (-sin phi, cos phi)
        orients.append(math.atan2(math.cos(phi), -math.sin(phi)) % math.pi)
    start = max(0, (len(cells) - length) // 2)
    cells, orients = cells[start:start + length], orients[start:start + length]
    # recentre vertically
    shift = rows // 2 - cells[len(cells) // 2][0]
    cells = [(r + shift, c) for r, c in cells]
    return _embed(theta, cells, orients, jitter_deg, rng), cells


# -- images -----------------------------------------------------------------

def three_level(seed: int = 0, size: int = 64, sigma: float = 10.0):
    """Black background, gray block on the right, white disk. Returns ``(img, truth)``."""
    r, c = np.mgrid[:size, :size]
    truth = np.zeros((size, size), dtype=np.int64)
    truth[c > size * 0.35] = 1
    truth[(r - size * 0.5) ** 2 + (c - size * 0.68) ** 2 < (size * 0.22) ** 2] = 2
    img = np.asarray(LEVELS3)[truth]
    if sigma > 0:
        img = img + np.random.default_rng(seed).normal(0.0, sigma, img.shape)
    return img, truth


def two_level(size: int = 32, levels=(40.0, 200.0)):
    """Noiseless image whose two regions cross both tile seams of a 2x2 split."""
    r, c = np.mgrid[:size, :size]
    truth = ((r - size * 0.45) ** 2 + (c - size * 0.55) ** 2 < (size * 0.3) ** 2).astype(np.int64)
    return np.asarray(levels, dtype=float)[truth], truth


def gray_bands(seed: int = 0, size: int = 256, n_bands: int = 6, sigma: float = 8.0,
               wobble: float = 6.0):
    """Diagonal gray bands with wavy borders, a stand-in for an aerial scene."""
    rng = np.random.default_rng(seed)
    r, c = np.mgrid[:size, :size].astype(float)
    phase = rng.uniform(0, 2 * math.pi)
    coord = (r + c) / 2.0 + wobble * np.sin(2 * math.pi * c / size * 2 + phase)
    edges = np.linspace(coord.min(), coord.max() + 1e-9, n_bands + 1)
    truth = np.clip(np.searchsorted(edges, coord, side="right") - 1, 0, n_bands - 1)
    levels = np.linspace(20.0, 235.0, n_bands)
    img = levels[truth] + rng.normal(0.0, sigma, truth.shape)
    return img, truth


def region_means_within(img, truth, levels, sigma, k: float = 3.0) -> bool:
    """Whether each region's sample mean lies within ``k sigma / sqrt(count)`` of its level."""
    for m, level in enumerate(levels):
        vals = img[truth == m]
        if abs(vals.mean() - level) > k * sigma / math.sqrt(vals.size):
            return False
    return True
