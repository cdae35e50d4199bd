"""End-to-end grouping tasks built on the oscillator network.

Each pipeline builds a coupling graph from its input, simulates the
network, and reads groups off the synchronized traces.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from oscgroup.coupling import (
    CouplingGraph,
    as_gray_image,
    as_orientation_grid,
    as_points,
    build_cluster_coupling,
    build_contour_coupling,
    build_segmentation_coupling,
    gaussian_gain,
)
from oscgroup.errors import DimensionError, NonConvergenceWarning, TileError
from oscgroup.network import (
    DEFAULT_PERIODS,
    HierarchySpec,
    NetworkSpec,
    TraceBuffer,
    default_period,
    simulate,
    simulate_hierarchy,
)
from oscgroup.oscillator import TRANSIENT_FRACTION, OscParams, input_range
from oscgroup.syncdetect import (
    BACKGROUND,
    DEFAULT_THETA,
    SyncPartition,
    coincidence_series,
    kmeans,
    kmeans_partition,
    partition_by_threshold,
    partition_on_edges,
    relabel_dense,
    spike_raster,
    standardize,
    trace_correlation,
)

SAMPLE_DT = 0.25

# Overall gain scale per task. The pairwise tunings are in (0, 1]; clustering
# and contour networks need stronger coupling to lock against drive spread.
CLUSTER_GAIN = 4.0
CONTOUR_GAIN = 10.0
SEGMENT_GAIN = 1.0

CLUSTER_M = 16
CLUSTER_BETA = 2.0
MIN_CONTOUR_CELLS = 5
SEGMENT_W = 5
SEGMENT_PERIODS = 6
# labels are read from the final few periods of a segmentation run
DETECT_PERIODS = 3
PEAK_BIN_FRACTION = 0.01
MIN_NOISE_BETA = 1.0

CROSS = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))


# -- result types -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClusterResult:
    """Per-point labels (``BACKGROUND`` for outliers) and the coincidence-peak size estimate."""

    labels: np.ndarray
    n_groups: int
    peak: int
    coincidence: tuple[np.ndarray, np.ndarray]
    traces: TraceBuffer | None = None

    @property
    def partition(self) -> SyncPartition:
        return SyncPartition(self.labels, self.n_groups)


@dataclass(frozen=True, eq=False)
class ContourResult:
    masks: tuple
    shape: tuple[int, int]
    traces: TraceBuffer | None = None

    @property
    def count(self) -> int:
        return len(self.masks)

    def cells(self) -> list[list[tuple[int, int]]]:
        return [[(int(r), int(c)) for r, c in zip(*np.nonzero(m))] for m in self.masks]


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Dense group ids per pixel, numbered in raster order of first appearance."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise DimensionError("a label map is two-dimensional")
        dense = relabel_dense(lab.ravel()).labels.reshape(lab.shape)
        dense.setflags(write=False)
        object.__setattr__(self, "labels", dense)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def n_labels(self) -> int:
        return int(self.labels.max(initial=-1)) + 1

    def __eq__(self, other):
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True)
class FeedbackConfig:
    offsets: tuple = CROSS
    k1: float = 1.0
    k2: float = 0.01
    max_periods: int = 12

    def __post_init__(self):
        offs = tuple((int(a), int(b)) for a, b in self.offsets)
        if (0, 0) not in offs:
            raise ValueError("the neighborhood must contain the center cell")
        if len(set(offs)) != len(offs):
            raise ValueError("duplicate neighborhood offsets")
        if self.max_periods < 1:
            raise ValueError("max_periods must be >= 1")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("k1 and k2 must be non-negative")
        object.__setattr__(self, "offsets", offs)


@dataclass(frozen=True, eq=False)
class FeedbackResult:
    labels: LabelMap
    history: tuple
    converged: bool
    periods: int


# -- shared helpers ---------------------------------------------------------

def label_accuracy(labels, truth) -> float:
    """Fraction of pixels correct under the best one-to-one label matching."""
    a = np.asarray(labels).ravel()
    b = np.asarray(truth).ravel()
    if a.shape != b.shape:
        raise DimensionError("labels and truth differ in size")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    conf = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(conf, (ai, bi), 1)
    r, c = linear_sum_assignment(-conf)
    return float(conf[r, c].sum() / a.size)


def singleton_regions(labels) -> int:
    """Number of 8-connected regions consisting of a single pixel."""
    lab = np.asarray(labels)
    rows, cols = lab.shape
    count = 0
    for r in range(rows):
        for c in range(cols):
            r0, r1, c0, c1 = max(r - 1, 0), min(r + 2, rows), max(c - 1, 0), min(c + 2, cols)
            if np.count_nonzero(lab[r0:r1, c0:c1] == lab[r, c]) == 1:
                count += 1
    return count


def pixel_kmeans(img, k: int, seed: int = 0) -> LabelMap:
    """Baseline: k-means on raw gray values, no spatial information."""
    u = as_gray_image(img)
    labels, _ = kmeans(u.reshape(-1, 1), k, seed=seed)
    return LabelMap(labels.reshape(u.shape))


def estimate_noise(img) -> float:
    """Robust noise level from horizontal and vertical pixel differences (MAD)."""
    u = as_gray_image(img)
    diffs = [np.diff(u, axis=a).ravel() for a in (0, 1) if u.shape[a] > 1]
    if not diffs:
        return 0.0
    d = np.concatenate(diffs)
    mad = np.median(np.abs(d - np.median(d)))
    return float(mad / (0.6744897501960817 * math.sqrt(2.0)))


def gray_drives(u, center: float, params: OscParams = OscParams()) -> np.ndarray:
    """Map gray levels to drives: one gray level per 1/255 of the drive range around ``center``.

    Depends only on ``u - center``, so shifting the image and its center
    together leaves the drives unchanged.
    """
    lo, hi = input_range(params)
    mid = 0.5 * (lo + hi)
    return np.clip(mid + (hi - lo) * (np.asarray(u, dtype=float) - center) / 255.0, lo, hi)


def _duration(periods: float, params: OscParams) -> float:
    return periods * default_period(params)


def _last_periods(traces: TraceBuffer, periods: float, params: OscParams):
    span = min(traces.duration, periods * default_period(params))
    return (traces.duration - span, traces.duration)


# -- point clustering -------------------------------------------------------

def run_point_clustering(points, m_neighbors: int = CLUSTER_M, beta_t: float = CLUSTER_BETA,
                         mode: str = "background", k: int | None = None, seed: int = 0,
                         periods: float = DEFAULT_PERIODS, gain: float = CLUSTER_GAIN,
                         theta: float = DEFAULT_THETA, dt: float | None = None,
                         params: OscParams = OscParams(), keep_traces: bool = False) -> ClusterResult:
    """Cluster points by concurrent synchronization.

    ``mode="background"`` thresholds trace correlations and marks
    unsynchronized points as ``BACKGROUND``; ``mode="fixed"`` runs k-means
    with ``k`` groups. The peak is the largest number of oscillators spiking
    within one bin of 1% of a period after the transient.
    """
    pts = as_points(points)
    n = len(pts)
    m = min(int(m_neighbors), n - 1)
    g = build_cluster_coupling(pts, m, beta_t).scaled(gain) if m >= 1 else CouplingGraph.empty(n)
    spec = NetworkSpec.random(g, seed=seed, params=params)
    tr = simulate(spec, _duration(periods, params), dt=dt, sample_dt=SAMPLE_DT)
    if mode == "background":
        part = partition_by_threshold(trace_correlation(tr, allow_degenerate=True), theta, background=True)
    elif mode == "fixed":
        if k is None:
            raise ValueError("fixed mode needs k")
        part = kmeans_partition(tr, k, seed=seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    period = default_period(params)
    series = coincidence_series(spike_raster(tr), PEAK_BIN_FRACTION * period,
                                start=TRANSIENT_FRACTION * tr.duration)
    peak = int(series[1].max(initial=0))
    return ClusterResult(part.labels, part.n_groups, peak, series, tr if keep_traces else None)


# -- contour integration ----------------------------------------------------

def _window_components(members, shape, w):
    """Split a set of cells into components connected within Chebyshev distance ``w``."""
    rows, cols = shape
    rc = np.array([(i // cols, i % cols) for i in members])
    if len(rc) == 0:
        return []
    d = np.max(np.abs(rc[:, None, :] - rc[None, :, :]), axis=2)
    _, comp = connected_components(sp.csr_matrix(d <= w), directed=False)
    return [np.asarray(members)[comp == c] for c in range(comp.max() + 1)]


def run_contour_integration(theta, delta: float = math.radians(20), gamma: float = math.radians(10),
                            w: int = 1, seed: int = 0, periods: float = DEFAULT_PERIODS,
                            gain: float = CONTOUR_GAIN, sync_theta: float = DEFAULT_THETA,
                            min_cells: int = MIN_CONTOUR_CELLS, dt: float | None = None,
                            params: OscParams = OscParams(), keep_traces: bool = False) -> ContourResult:
    """Detect smooth contours in an orientation grid.

    Synchronized groups are split into window-connected pieces; pieces with
    at least ``min_cells`` cells are reported, largest first.
    """
    th = as_orientation_grid(theta)
    g = build_contour_coupling(th, delta, gamma, w).scaled(gain)
    spec = NetworkSpec.random(g, seed=seed, params=params)
    tr = simulate(spec, _duration(periods, params), dt=dt, sample_dt=SAMPLE_DT)
    part = partition_by_threshold(trace_correlation(tr, allow_degenerate=True), sync_theta, background=True)
    pieces = []
    for members in part.groups():
        pieces.extend(p for p in _window_components(members, th.shape, w) if len(p) >= min_cells)
    pieces.sort(key=lambda p: (-len(p), int(p.min())))
    masks = []
    for p in pieces:
        mask = np.zeros(th.size, dtype=bool)
        mask[p] = True
        mask = mask.reshape(th.shape)
        mask.setflags(write=False)
        masks.append(mask)
    return ContourResult(tuple(masks), th.shape, tr if keep_traces else None)


# -- segmentation -----------------------------------------------------------

def _segment_network(u, beta_t, w, seed, params):
    g = build_segmentation_coupling(u, beta_t, w).scaled(SEGMENT_GAIN)
    drives = gray_drives(u.ravel(), float(np.median(u)), params)
    return g, NetworkSpec.random(g, seed=seed, params=params, inputs=drives)


def _detect_segments(tr, g, k, theta, seed, params):
    window = _last_periods(tr, DETECT_PERIODS, params)
    if k is None:
        return partition_on_edges(tr, g.rows, g.cols, theta, window=window)
    return kmeans_partition(tr, min(k, tr.n), window=window, seed=seed)


def _resolve_beta(u, beta_t):
    return max(estimate_noise(u), MIN_NOISE_BETA) if beta_t is None else float(beta_t)


def _segment_basic(img, beta_t=None, w=SEGMENT_W, k=None, seed=0, periods=SEGMENT_PERIODS,
                   theta=DEFAULT_THETA, dt=None, params=OscParams(), record_w=False):
    u = as_gray_image(img)
    beta = _resolve_beta(u, beta_t)
    g, spec = _segment_network(u, beta, w, seed, params)
    tr = simulate(spec, _duration(periods, params), dt=dt, sample_dt=SAMPLE_DT, record_w=record_w)
    part = _detect_segments(tr, g, k, theta, seed, params)
    return LabelMap(part.labels.reshape(u.shape)), tr, g, spec


def run_segmentation_basic(img, beta_t: float | None = None, w: int = SEGMENT_W, k: int | None = None,
                           seed: int = 0, periods: float = SEGMENT_PERIODS, theta: float = DEFAULT_THETA,
                           dt: float | None = None, params: OscParams = OscParams()) -> LabelMap:
    """One oscillator per pixel, coupled by gray-level similarity within a window.

    ``beta_t=None`` uses a robust noise estimate. With ``k`` the labels come
    from k-means on the traces, otherwise from correlation thresholding over
    coupled pixel pairs.
    """
    return _segment_basic(img, beta_t, w, k, seed, periods, theta, dt, params)[0]


def build_feedback_matrices(labels, cfg: FeedbackConfig = FeedbackConfig()):
    """Inter-layer matrices for region feedback.

    ``A[m, p]`` is the share of pixel ``p``'s neighborhood (clipped to the
    image) carrying label ``m``; every column of ``A`` sums to one. ``B`` is
    the identity over regions.
    """
    lab = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    rows, cols = lab.shape
    m_regions = int(lab.max()) + 1
    counts = np.zeros((m_regions, rows, cols))
    size = np.zeros((rows, cols))
    for dr, dc in cfg.offsets:
        src_r = slice(max(dr, 0), rows + min(dr, 0))
        dst_r = slice(max(-dr, 0), rows + min(-dr, 0))
        src_c = slice(max(dc, 0), cols + min(dc, 0))
        dst_c = slice(max(-dc, 0), cols + min(-dc, 0))
        shifted = np.full((rows, cols), -1)
        shifted[dst_r, dst_c] = lab[src_r, src_c]
        valid = shifted >= 0
        size += valid
        rr, cc = np.nonzero(valid)
        np.add.at(counts, (shifted[rr, cc], rr, cc), 1.0)
    frac = (counts / size).reshape(m_regions, -1)
    A = sp.csr_matrix(frac)
    A.eliminate_zeros()
    return A, sp.identity(m_regions, format="csr")


def feedback_links(A):
    """Split each entry ``a = A[m, p]`` into its own link row ``sqrt(a) (e_p, e_m)``.

    Returns ``(A_link, B_link)`` with ``A_link^T A_link = diag(column sums of A)``
    and ``A_link^T B_link = A^T``: each pixel is pulled toward every region
    in its neighborhood in proportion to that region's share, rather than
    toward a weighted sum of region states.
    """
    A = sp.coo_matrix(A)
    e = A.nnz
    root = np.sqrt(A.data)
    link = np.arange(e)
    a_link = sp.csr_matrix((root, (link, A.col)), shape=(e, A.shape[1]))
    b_link = sp.csr_matrix((root, (link, A.row)), shape=(e, A.shape[0]))
    return a_link, b_link


def _align(new, prev, k):
    """Permute ``new`` labels to agree best with ``prev``."""
    conf = np.zeros((k, k))
    np.add.at(conf, (new, prev), 1)
    r, c = linear_sum_assignment(-conf)
    mapping = np.arange(k)
    mapping[r] = c
    return mapping[new]


def run_segmentation_feedback(img, beta_t: float | None = None, w: int = SEGMENT_W, k: int = 3,
                              cfg: FeedbackConfig = FeedbackConfig(), seed: int = 0,
                              periods: float = SEGMENT_PERIODS, dt: float | None = None,
                              params: OscParams = OscParams()) -> FeedbackResult:
    """Basic segmentation followed by per-period region feedback.

    A second layer holds one oscillator per region, driven by the region's
    mean gray level. Each period the inter-layer links are rebuilt from the
    current labels, both layers run for one period, and labels are
    re-detected. Stops when the label map is unchanged between consecutive
    periods; warns with NonConvergenceWarning otherwise.
    """
    u = as_gray_image(img)
    first, tr, g, spec = _segment_basic(u, beta_t, w, k, seed, periods, DEFAULT_THETA, dt, params,
                                        record_w=True)
    period = default_period(params)
    n_window = int(round(DETECT_PERIODS * period / tr.dt))
    recent = [np.asarray(tr.v[-n_window:])]
    v, w_state = tr.v[-1].copy(), tr.w[-1].copy()
    flat = first.labels.ravel().copy()
    k_eff = int(flat.max()) + 1
    center = float(np.median(u))
    history = [first]
    converged = False
    for _ in range(cfg.max_periods):
        A, _ = build_feedback_matrices(flat.reshape(u.shape), cfg)
        a_link, b_link = feedback_links(A)
        counts = np.bincount(flat, minlength=k_eff).astype(float)
        means = np.bincount(flat, weights=u.ravel(), minlength=k_eff) / counts
        layer1 = NetworkSpec(g, spec.inputs, v, w_state, params)
        layer2 = NetworkSpec(
            CouplingGraph.empty(k_eff),
            gray_drives(means, center, params),
            np.bincount(flat, weights=v, minlength=k_eff) / counts,
            np.bincount(flat, weights=w_state, minlength=k_eff) / counts,
            params,
        )
        h = HierarchySpec(layer1, layer2, a_link, b_link, cfg.k1, cfg.k2)
        t1, _ = simulate_hierarchy(h, period, dt=dt, sample_dt=SAMPLE_DT, record_w=True)
        v, w_state = t1.v[-1].copy(), t1.w[-1].copy()
        recent.append(np.asarray(t1.v[1:]))
        window = np.vstack(recent)[-n_window:]
        recent = [window]
        raw, _ = kmeans(standardize(window).T, k_eff, seed=seed)
        new = _align(raw, flat, k_eff)
        changed = not np.array_equal(new, flat)
        flat = new
        history.append(LabelMap(flat.reshape(u.shape)))
        if not changed:
            converged = True
            break
    if not converged:
        warnings.warn(f"labels still changing after {cfg.max_periods} feedback periods",
                      NonConvergenceWarning, stacklevel=2)
    return FeedbackResult(history[-1], tuple(history), converged, len(history) - 1)


# -- multi-layer ------------------------------------------------------------

def split_tiles(shape, tiles):
    """Row/column slices of equal disjoint tiles; TileError if sizes do not divide."""
    rows, cols = shape
    tr, tc = (int(t) for t in tiles)
    if tr < 1 or tc < 1:
        raise TileError("tile counts must be positive")
    if rows % tr or cols % tc:
        raise TileError(f"image {rows}x{cols} is not divisible into {tr}x{tc} tiles")
    h, w = rows // tr, cols // tc
    return [(slice(i * h, (i + 1) * h), slice(j * w, (j + 1) * w)) for i in range(tr) for j in range(tc)]


def globalize_tile_labels(labels, tiles=(1, 1)) -> np.ndarray:
    """Make per-tile dense labels unique across tiles (tile-major offsets)."""
    lab = np.asarray(labels)
    out = np.empty_like(lab)
    offset = 0
    for rs, cs in split_tiles(lab.shape, tiles):
        part = lab[rs, cs]
        out[rs, cs] = part + offset
        offset += int(part.max()) + 1
    return out


def region_adjacency(labels, tiles=(1, 1)) -> list[tuple[int, int]]:
    """Pairs ``(a, b)``, ``a < b``, of regions sharing a 4-connected pixel edge.

    With ``tiles`` other than 1x1 the labels are per-tile ids and are made
    globally unique first. Diagonal-only contact does not count.
    """
    lab = globalize_tile_labels(labels, tiles)
    pairs = set()
    for a, b in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        diff = a != b
        lo = np.minimum(a[diff], b[diff])
        hi = np.maximum(a[diff], b[diff])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return sorted(pairs)


def run_segmentation_multilayer(img, tiles=(2, 2), beta_t: float | None = None, w: int = SEGMENT_W,
                                k: int | None = None, seed: int = 0, periods: float = SEGMENT_PERIODS,
                                theta: float = DEFAULT_THETA, beta_2: float | None = None,
                                workers: int = 1, dt: float | None = None,
                                params: OscParams = OscParams()) -> LabelMap:
    """Segment tiles independently, then merge regions with a second oscillator layer.

    Tiles are segmented in threshold mode. Layer 2 has one oscillator per
    tile region, driven by the region's mean gray level and coupled to
    4-adjacent regions with Gaussian gains on mean gray (``beta_2``
    defaults to the first layer's beta). A 1x1 tiling is the basic pipeline.
    """
    u = as_gray_image(img)
    slices = split_tiles(u.shape, tiles)
    if len(slices) == 1:
        return run_segmentation_basic(u, beta_t, w, k, seed, periods, theta, dt, params)
    beta = _resolve_beta(u, beta_t)
    beta_2 = beta if beta_2 is None else float(beta_2)
    center = float(np.median(u))

    def tile_labels(idx):
        rs, cs = slices[idx]
        tile = u[rs, cs]
        g = build_segmentation_coupling(tile, beta, w).scaled(SEGMENT_GAIN)
        spec = NetworkSpec.random(g, seed=seed + idx, params=params,
                                  inputs=gray_drives(tile.ravel(), center, params))
        tr = simulate(spec, _duration(periods, params), dt=dt, sample_dt=SAMPLE_DT)
        return _detect_segments(tr, g, None, theta, seed, params).labels.reshape(tile.shape)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(tile_labels, range(len(slices))))
    else:
        parts = [tile_labels(i) for i in range(len(slices))]
    local = np.empty(u.shape, dtype=np.int64)
    for (rs, cs), part in zip(slices, parts):
        local[rs, cs] = part
    regions = globalize_tile_labels(local, tiles)
    n_regions = int(regions.max()) + 1
    flat = regions.ravel()
    means = np.bincount(flat, weights=u.ravel(), minlength=n_regions) / np.bincount(flat, minlength=n_regions)

    pairs = region_adjacency(regions)
    if pairs:
        a, b = np.array(pairs).T
        gains = np.array([gaussian_gain(means[i], means[j], beta_2) for i, j in pairs])
        keep = gains > 0
        g2 = CouplingGraph(n_regions, a[keep], b[keep], gains[keep])
    else:
        g2 = CouplingGraph.empty(n_regions)
    spec2 = NetworkSpec.random(g2, seed=seed, params=params, inputs=gray_drives(means, center, params))
    tr2 = simulate(spec2, _duration(periods, params), dt=dt, sample_dt=SAMPLE_DT)
    window = _last_periods(tr2, DETECT_PERIODS, params)
    if k is not None and k <= n_regions:
        merged = kmeans_partition(tr2, k, window=window, seed=seed)
    else:
        merged = partition_by_threshold(trace_correlation(tr2, window, allow_degenerate=True), theta)
    return LabelMap(merged.labels[regions])


__all__ = [
    "BACKGROUND",
    "ClusterResult",
    "ContourResult",
    "FeedbackConfig",
    "FeedbackResult",
    "LabelMap",
    "build_feedback_matrices",
    "estimate_noise",
    "feedback_links",
    "globalize_tile_labels",
    "gray_drives",
    "label_accuracy",
    "pixel_kmeans",
    "region_adjacency",
    "run_contour_integration",
    "run_point_clustering",
    "run_segmentation_basic",
    "run_segmentation_feedback",
    "run_segmentation_multilayer",
    "singleton_regions",
    "split_tiles",
]
