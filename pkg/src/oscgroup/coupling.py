"""Coupling graphs for point clustering, contour integration and segmentation.

Grid conventions: cell ``(r, c)`` sits at ``x = c`` (rightward), ``y = r``
(downward). Orientations are angles in that frame, stored modulo pi.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from oscgroup.errors import DegenerateInputError

# gains below this are dropped from sparse graphs
MIN_GAIN = 1e-12


class CouplingGraph:
    """Immutable undirected weighted graph, one entry per unordered pair ``i < j``."""

    __slots__ = ("n", "rows", "cols", "gains", "_adj")

    def __init__(self, n, rows=(), cols=(), gains=()):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        gains = np.asarray(gains, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == gains.shape):
            raise ValueError("rows, cols and gains must have equal length")
        if np.any(rows == cols):
            raise ValueError("self-edges are not allowed")
        if gains.size and (not np.all(np.isfinite(gains)) or gains.min() < 0):
            raise ValueError("gains must be finite and non-negative")
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
            raise ValueError("edge endpoint out of range")
        lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
        order = np.lexsort((hi, lo))
        lo, hi, gains = lo[order], hi[order], gains[order]
        if lo.size > 1 and np.any((lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])):
            raise ValueError("duplicate edge")
        for arr in (lo, hi, gains):
            arr.setflags(write=False)
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "rows", lo)
        object.__setattr__(self, "cols", hi)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "_adj", None)

    def __setattr__(self, name, value):
        raise AttributeError("CouplingGraph is immutable")

    def __repr__(self):
        return f"CouplingGraph(n={self.n}, edges={self.n_edges})"

    @property
    def n_edges(self) -> int:
        return int(self.gains.size)

    def edges(self):
        """List of ``(i, j, k_ij)`` with ``i < j``."""
        return [(int(i), int(j), float(k)) for i, j, k in zip(self.rows, self.cols, self.gains)]

    def gain(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        adj = self.adjacency()
        return float(adj[i, j])

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric CSR gain matrix with zero diagonal."""
        if self._adj is None:
            data = np.concatenate([self.gains, self.gains])
            r = np.concatenate([self.rows, self.cols])
            c = np.concatenate([self.cols, self.rows])
            adj = sp.csr_matrix((data, (r, c)), shape=(self.n, self.n))
            adj.sort_indices()
            object.__setattr__(self, "_adj", adj)
        return self._adj

    def degree(self) -> np.ndarray:
        return np.bincount(self.rows, self.gains, self.n) + np.bincount(self.cols, self.gains, self.n)

    def scaled(self, factor: float) -> "CouplingGraph":
        if not (math.isfinite(factor) and factor >= 0):
            raise ValueError("scale factor must be finite and non-negative")
        return CouplingGraph(self.n, self.rows, self.cols, self.gains * factor)

    def permuted(self, perm) -> "CouplingGraph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return CouplingGraph(self.n, perm[self.rows], perm[self.cols], self.gains)

    @classmethod
    def empty(cls, n: int) -> "CouplingGraph":
        return cls(n)

    @classmethod
    def from_dense(cls, k) -> "CouplingGraph":
        k = np.asarray(k, dtype=float)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or not np.allclose(k, k.T, rtol=0, atol=0):
            raise ValueError("gain matrix must be square and exactly symmetric")
        r, c = np.nonzero(np.triu(k, 1))
        return cls(k.shape[0], r, c, k[r, c])


def gaussian_gain(s_i, s_j, beta_t: float) -> float:
    """``exp(-|s_i - s_j|^2 / beta_t^2)``."""
    if beta_t <= 0:
        raise ValueError("beta_t must be positive")
    d = np.atleast_1d(np.asarray(s_i, dtype=float)) - np.atleast_1d(np.asarray(s_j, dtype=float))
    return float(np.exp(-np.dot(d, d) / beta_t**2))


def gaussian_matrix(stimuli, beta_t: float) -> np.ndarray:
    """Dense all-pairs Gaussian gain matrix (ones on the diagonal)."""
    s = np.asarray(stimuli, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    sq = np.sum(s * s, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * s @ s.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return np.exp(-d2 / beta_t**2)


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise DegenerateInputError("points must be an (n, 2) array with n >= 1")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInputError("point coordinates must be finite")
    return pts


def nearest_neighbors(points, m: int, chunk: int = 512) -> np.ndarray:
    """Indices of each point's ``m`` nearest other points; ties go to the lower index."""
    pts = as_points(points)
    n = len(pts)
    if not 1 <= m < n:
        raise DegenerateInputError(f"need 1 <= m_neighbors < n (m={m}, n={n})")
    out = np.empty((n, m), dtype=np.int64)
    for start in range(0, n, chunk):
        block = pts[start:start + chunk]
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        d2[np.arange(len(block)), np.arange(start, start + len(block))] = np.inf
        # stable sort keeps index order among equal distances
        out[start:start + len(block)] = np.argsort(d2, axis=1, kind="stable")[:, :m]
    return out


def build_cluster_coupling(points, m_neighbors: int, beta_t: float) -> CouplingGraph:
    """Gaussian gains on the union-symmetrized ``m``-nearest-neighbor graph."""
    if beta_t <= 0:
        raise ValueError("beta_t must be positive")
    pts = as_points(points)
    n = len(pts)
    nbr = nearest_neighbors(pts, m_neighbors)
    i = np.repeat(np.arange(n), m_neighbors)
    j = nbr.ravel()
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    pairs = np.unique(lo * n + hi)
    lo, hi = pairs // n, pairs % n
    d2 = np.sum((pts[lo] - pts[hi]) ** 2, axis=1)
    gains = np.exp(-d2 / beta_t**2)
    keep = gains >= MIN_GAIN
    return CouplingGraph(n, lo[keep], hi[keep], gains[keep])


def as_orientation_grid(theta) -> np.ndarray:
    """Orientation array reduced to [0, pi)."""
    th = np.asarray(theta, dtype=float)
    if th.ndim != 2 or th.size == 0:
        raise DegenerateInputError("orientation grid must be a non-empty 2-D array")
    if not np.all(np.isfinite(th)):
        raise DegenerateInputError("orientations must be finite")
    th = np.mod(th, np.pi)
    th[th >= np.pi] = 0.0
    return th


def axial_difference(a, b):
    """Signed difference ``b - a`` of undirected angles, wrapped to [-pi/2, pi/2)."""
    return np.mod(np.asarray(b) - np.asarray(a) + np.pi / 2, np.pi) - np.pi / 2


def contour_gain(theta_i, theta_j, dr, dc, delta: float, gamma: float):
    """Good-continuation gain between two elements offset by ``(dr, dc)`` grid cells.

    The first factor penalizes element-to-element turning, the second the
    angle between the elements' mean orientation and the joining path.
    """
    d = axial_difference(theta_i, theta_j)
    d_ee = np.abs(d)
    mean = np.mod(np.asarray(theta_i) + d / 2, np.pi)
    path = np.mod(np.arctan2(dr, dc), np.pi)
    d_ep = np.abs(axial_difference(mean, path))
    return np.exp(-(d_ee**2) / delta**2 - d_ep**2 / gamma**2)


def _window_offsets(radius: int):
    """Offsets ``(dr, dc)`` with Chebyshev norm in 1..radius, one per unordered pair."""
    out = []
    for dr in range(0, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc <= 0:
                continue
            out.append((dr, dc))
    return out


def _grid_pairs(shape, dr, dc):
    rows, cols = shape
    r0 = np.arange(0, rows - dr)
    c0 = np.arange(max(0, -dc), min(cols, cols - dc))
    rr, cc = np.meshgrid(r0, c0, indexing="ij")
    a = (rr * cols + cc).ravel()
    b = ((rr + dr) * cols + (cc + dc)).ravel()
    return rr.ravel(), cc.ravel(), a, b


def build_contour_coupling(theta, delta: float = math.radians(20), gamma: float = math.radians(10),
                           w: int = 1) -> CouplingGraph:
    """Contour-integration graph over cells within Chebyshev distance ``w``."""
    if w < 1:
        raise ValueError("w must be >= 1")
    if delta <= 0 or gamma <= 0:
        raise ValueError("delta and gamma must be positive")
    th = as_orientation_grid(theta)
    rows, cols = th.shape
    lo_all, hi_all, g_all = [], [], []
    for dr, dc in _window_offsets(w):
        rr, cc, a, b = _grid_pairs(th.shape, dr, dc)
        if a.size == 0:
            continue
        g = contour_gain(th[rr, cc], th[rr + dr, cc + dc], dr, dc, delta, gamma)
        keep = g >= MIN_GAIN
        lo_all.append(a[keep])
        hi_all.append(b[keep])
        g_all.append(g[keep])
    return _concat_graph(rows * cols, lo_all, hi_all, g_all)


def as_gray_image(img) -> np.ndarray:
    u = np.asarray(img, dtype=float)
    if u.ndim != 2 or min(u.shape) < 1:
        raise DegenerateInputError("image must be a non-empty 2-D array")
    if not np.all(np.isfinite(u)):
        raise DegenerateInputError("gray levels must be finite")
    return u


def build_segmentation_coupling(img, beta_t: float, w: int = 5) -> CouplingGraph:
    """Non-local gray-level graph: pixels with Chebyshev distance ``< w`` are coupled."""
    if w < 1:
        raise ValueError("w must be >= 1")
    if beta_t <= 0:
        raise ValueError("beta_t must be positive")
    u = as_gray_image(img)
    rows, cols = u.shape
    lo_all, hi_all, g_all = [], [], []
    for dr, dc in _window_offsets(w - 1):
        rr, cc, a, b = _grid_pairs(u.shape, dr, dc)
        if a.size == 0:
            continue
        diff = u[rr, cc] - u[rr + dr, cc + dc]
        g = np.exp(-(diff * diff) / beta_t**2)
        keep = g >= MIN_GAIN
        lo_all.append(a[keep])
        hi_all.append(b[keep])
        g_all.append(g[keep])
    return _concat_graph(rows * cols, lo_all, hi_all, g_all)


def _concat_graph(n, lo_all, hi_all, g_all) -> CouplingGraph:
    if not lo_all:
        return CouplingGraph.empty(n)
    return CouplingGraph(n, np.concatenate(lo_all), np.concatenate(hi_all), np.concatenate(g_all))


def laplacian(g: CouplingGraph, dense: bool = False):
    """Graph Laplacian ``L = D - K``; rows sum to zero."""
    adj = g.adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    lap = (sp.diags(deg) - adj).tocsr()
    return lap.toarray() if dense else lap
