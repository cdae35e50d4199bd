"""Identify synchronized groups in oscillator traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from oscgroup.errors import DegenerateTraceError, EmptyClusterError
from oscgroup.network import TraceBuffer
from oscgroup.oscillator import SPIKE_THRESHOLD, upward_crossings

BACKGROUND = -1
DEFAULT_THETA = 0.95


@dataclass(frozen=True, eq=False)
class SyncPartition:
    """Group id per oscillator; ``BACKGROUND`` marks unsynchronized units."""

    labels: np.ndarray
    n_groups: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def groups(self) -> list[np.ndarray]:
        return [np.nonzero(self.labels == g)[0] for g in range(self.n_groups)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n_groups)


def relabel_dense(labels, background=None) -> SyncPartition:
    """Renumber labels 0..G-1 in order of first appearance."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, BACKGROUND, dtype=np.int64)
    mapping = {}
    for i, lab in enumerate(labels.tolist()):
        if background is not None and lab == background:
            continue
        out[i] = mapping.setdefault(lab, len(mapping))
    return SyncPartition(out, len(mapping))


@dataclass(frozen=True, eq=False)
class SpikeRaster:
    times: tuple
    duration: float

    @property
    def n(self) -> int:
        return len(self.times)


def _windowed(traces, window):
    if isinstance(traces, TraceBuffer):
        return np.asarray(traces.v[traces.window_slice(window)], dtype=float)
    return np.asarray(traces, dtype=float)


def trace_correlation(traces: TraceBuffer, window: tuple[float, float] | None = None,
                      allow_degenerate: bool = False) -> np.ndarray:
    """Pearson correlation of v-traces over ``window`` (default: last 75%).

    Constant traces raise DegenerateTraceError unless ``allow_degenerate``,
    in which case their rows are zero apart from the unit diagonal.
    """
    x = _windowed(traces, window)
    x = x - x.mean(axis=0)
    norm = np.sqrt(np.sum(x * x, axis=0))
    flat = norm <= 1e-12 * max(1.0, float(norm.max(initial=0.0)))
    if flat.any() and not allow_degenerate:
        raise DegenerateTraceError(f"{flat.sum()} constant trace(s) in window", np.nonzero(flat)[0])
    safe = np.where(flat, 1.0, norm)
    z = x / safe
    z[:, flat] = 0.0
    corr = z.T @ z
    np.clip(corr, -1.0, 1.0, out=corr)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def partition_by_threshold(corr, theta: float = DEFAULT_THETA, background: bool = False) -> SyncPartition:
    """Connected components of ``corr >= theta``.

    With ``background=True`` singleton components become ``BACKGROUND``.
    """
    corr = np.asarray(corr)
    n = corr.shape[0]
    _, comp = connected_components(sp.csr_matrix(corr >= theta), directed=False)
    if background:
        sizes = np.bincount(comp, minlength=n)
        comp = np.where(sizes[comp] > 1, comp, -1)
        return relabel_dense(comp, background=-1)
    return relabel_dense(comp)


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns become zero."""
    x = x - x.mean(axis=0)
    sd = x.std(axis=0)
    return x / np.where(sd > 0, sd, 1.0)


def _sq_dist(x, centers):
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centers.T + np.sum(centers * centers, axis=1)[None, :]
    return np.maximum(d, 0.0)


def _plus_plus(x, k, rng):
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d = _sq_dist(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = d.sum()
        idx = rng.choice(n, p=d / total) if total > 0 else rng.integers(n)
        centers[j] = x[idx]
        d = np.minimum(d, _sq_dist(x, centers[j:j + 1])[:, 0])
    return centers


def lloyd(x, centers, max_iter: int = 300):
    """Lloyd iterations from ``centers``.

    An empty cluster is re-seeded at the point farthest from its current
    centroid. Returns ``(labels, centers, objective_history)``.
    """
    x = np.asarray(x, dtype=float)
    centers = np.array(centers, dtype=float)
    k = len(centers)
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dist(x, centers)
        new = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                centers[j] = x[labels == j].mean(axis=0)
        for j in np.nonzero(counts == 0)[0]:
            try:
                centers[j] = _reseed(x, centers, labels, counts)
            except EmptyClusterError:
                break
            counts = np.bincount(labels, minlength=k)
    return labels, centers, history


def _reseed(x, centers, labels, counts):
    d = np.sum((x - centers[labels]) ** 2, axis=1)
    d[counts[labels] <= 1] = -1.0
    far = int(np.argmax(d))
    if d[far] <= 0:
        raise EmptyClusterError("no point available to re-seed an empty cluster")
    src = labels[far]
    labels[far] = np.argmin(counts)
    counts[src] -= 1
    return x[far].copy()


def kmeans(x, k: int, restarts: int = 10, seed: int = 0, max_iter: int = 300):
    """Best-of-``restarts`` k-means++/Lloyd. Returns ``(labels, objective)``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n (k={k}, n={n})")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        labels, centers, hist = lloyd(x, _plus_plus(x, k, rng), max_iter)
        obj = float(np.sum((x - centers[labels]) ** 2))
        if best is None or obj < best[1] - 1e-12:
            best = (labels.copy(), obj)
    return best


def kmeans_partition(traces: TraceBuffer, k: int, window: tuple[float, float] | None = None,
                     restarts: int = 10, seed: int = 0) -> SyncPartition:
    """k-means on per-trace standardized v-vectors over ``window``."""
    x = standardize(_windowed(traces, window)).T
    labels, _ = kmeans(x, k, restarts=restarts, seed=seed)
    return relabel_dense(labels)


def spike_raster(traces: TraceBuffer, threshold: float = SPIKE_THRESHOLD) -> SpikeRaster:
    """Interpolated upward threshold-crossing times for each oscillator."""
    v = np.asarray(traces.v)
    times = tuple(upward_crossings(v[:, i], threshold) * traces.dt for i in range(v.shape[1]))
    return SpikeRaster(times, traces.duration)


def coincidence_series(raster: SpikeRaster, bin_width: float, members=None,
                       start: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin count of oscillators spiking at least once in the bin.

    Returns ``(bin_start_times, counts)`` covering ``[start, duration]``.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    n_bins = max(1, int(np.ceil((raster.duration - start) / bin_width - 1e-9)))
    counts = np.zeros(n_bins, dtype=np.int64)
    idx = range(raster.n) if members is None else members
    for i in idx:
        t = raster.times[i]
        t = t[t >= start]
        b = np.unique(np.minimum(((t - start) / bin_width).astype(np.int64), n_bins - 1))
        counts[b] += 1
    return start + np.arange(n_bins) * bin_width, counts


def partition_on_edges(traces: TraceBuffer, rows, cols, theta: float = DEFAULT_THETA,
                       window: tuple[float, float] | None = None, background: bool = False,
                       chunk: int = 65536) -> SyncPartition:
    """Threshold-mode grouping that only scores the listed oscillator pairs.

    Equivalent to ``partition_by_threshold`` on a correlation matrix whose
    unlisted off-diagonal entries are zero. Memory stays linear in the number
    of pairs, which makes it usable on full images.
    """
    x = _windowed(traces, window)
    n = x.shape[1]
    z = x - x.mean(axis=0)
    norm = np.sqrt(np.sum(z * z, axis=0))
    z = z / np.where(norm > 0, norm, 1.0)
    z[:, norm <= 0] = 0.0
    zt = np.ascontiguousarray(z.T)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    keep = np.zeros(rows.size, dtype=bool)
    for s in range(0, rows.size, chunk):
        r, c = rows[s:s + chunk], cols[s:s + chunk]
        keep[s:s + chunk] = np.einsum("ij,ij->i", zt[r], zt[c]) >= theta
    a = sp.coo_matrix((np.ones(int(keep.sum())), (rows[keep], cols[keep])), shape=(n, n))
    _, comp = connected_components(a.tocsr(), directed=False)
    if background:
        sizes = np.bincount(comp, minlength=n)
        comp = np.where(sizes[comp] > 1, comp, -1)
        return relabel_dense(comp, background=-1)
    return relabel_dense(comp)
