"""Simulation of diffusively coupled oscillator networks and two-layer hierarchies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from oscgroup import kernels
from oscgroup.coupling import CouplingGraph, laplacian
from oscgroup.errors import DimensionError, DivergenceError
from oscgroup.oscillator import DEFAULT_DT, TRANSIENT_FRACTION, OscParams, input_range, natural_period

DEFAULT_PERIODS = 20
# initial states are drawn uniformly from these boxes (near the limit cycle)
INITIAL_V = (-1.0, 1.0)
INITIAL_W = (0.5, 5.0)
# largest |d(dv)/dv| on the attractor, used for the explicit step-size bound
_INTRINSIC_STIFFNESS = 30.0
_RK4_SAFE_REAL_EXTENT = 2.5


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """A flat network: shared parameters, per-oscillator drive and initial state."""

    graph: CouplingGraph
    inputs: np.ndarray
    v0: np.ndarray
    w0: np.ndarray
    params: OscParams = field(default_factory=OscParams)
    seed: int | None = None

    def __post_init__(self):
        for name in ("inputs", "v0", "w0"):
            arr = np.array(getattr(self, name), dtype=np.float64).ravel()
            if arr.shape != (self.graph.n,):
                raise DimensionError(f"{name} has length {arr.size}, graph has {self.graph.n} nodes")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.graph.n

    @classmethod
    def random(cls, graph: CouplingGraph, seed: int = 0, params: OscParams = OscParams(),
               inputs=None, drive_range: tuple[float, float] | None = None) -> "NetworkSpec":
        """Seeded drives and initial states.

        Uses ``numpy.random.default_rng(seed)`` (PCG64) and draws, in order:
        drives uniform on ``drive_range`` (skipped if ``inputs`` is given),
        ``v0`` uniform on ``INITIAL_V``, ``w0`` uniform on ``INITIAL_W``.
        """
        rng = np.random.default_rng(seed)
        n = graph.n
        if inputs is None:
            lo, hi = drive_range if drive_range is not None else input_range(params)
            inputs = rng.uniform(lo, hi, n)
        v0 = rng.uniform(*INITIAL_V, n)
        w0 = rng.uniform(*INITIAL_W, n)
        return cls(graph, inputs, v0, w0, params, seed)

    def permuted(self, perm) -> "NetworkSpec":
        """Same network with node ``i`` relabelled ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        return NetworkSpec(self.graph.permuted(perm), self.inputs[inv], self.v0[inv], self.w0[inv],
                           self.params, self.seed)


@dataclass(frozen=True, eq=False)
class HierarchySpec:
    """Two networks joined by generalized diffusive connections."""

    layer1: NetworkSpec
    layer2: NetworkSpec
    A: sp.csr_matrix
    B: sp.csr_matrix
    k1: float
    k2: float

    def __post_init__(self):
        a = sp.csr_matrix(self.A, dtype=np.float64)
        b = sp.csr_matrix(self.B, dtype=np.float64)
        if a.shape[0] != b.shape[0]:
            raise DimensionError(f"A has {a.shape[0]} rows, B has {b.shape[0]}")
        if a.shape[1] != self.layer1.n or b.shape[1] != self.layer2.n:
            raise DimensionError("A/B column counts must match the layer sizes")
        for name, m in (("A", a), ("B", b)):
            if m.nnz and (not np.all(np.isfinite(m.data)) or m.data.min() < 0):
                raise ValueError(f"{name} entries must be finite and non-negative")
        if not (self.k1 >= 0 and self.k2 >= 0 and math.isfinite(self.k1) and math.isfinite(self.k2)):
            raise ValueError("k1 and k2 must be finite and non-negative")
        if self.layer1.params != self.layer2.params:
            raise ValueError("both layers must share oscillator parameters")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)


@dataclass(frozen=True, eq=False)
class TraceBuffer:
    """Time-major samples; row ``k`` is time ``k * dt``."""

    dt: float
    v: np.ndarray
    w: np.ndarray | None = None
    step_dt: float | None = None

    def __post_init__(self):
        for name in ("v", "w"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.v.shape[1]

    @property
    def n_samples(self) -> int:
        return self.v.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def window_slice(self, window: tuple[float, float] | None = None) -> slice:
        """Sample slice for ``window``; default drops the first quarter."""
        if window is None:
            window = (TRANSIENT_FRACTION * self.duration, self.duration)
        t0, t1 = window
        if t0 < -1e-9 or t1 > self.duration + 1e-9 or t1 < t0:
            raise ValueError(f"window {window} outside [0, {self.duration}]")
        start = int(math.ceil(t0 / self.dt - 1e-9))
        stop = int(math.floor(t1 / self.dt + 1e-9)) + 1
        return slice(start, stop)

    def to_csv(self, path) -> None:
        from oscgroup.io import write_traces

        write_traces(path, self)


def laplacian_lambda_max(graph: CouplingGraph) -> float:
    """Largest Laplacian eigenvalue (ARPACK, Gershgorin on failure)."""
    if graph.n_edges == 0:
        return 0.0
    gersh = 2.0 * float(graph.degree().max())
    if graph.n <= 64:
        return float(np.linalg.eigvalsh(laplacian(graph, dense=True))[-1])
    start = np.random.default_rng(0).uniform(-1, 1, graph.n)
    try:
        lam = eigsh(laplacian(graph), k=1, which="LA", v0=start, tol=1e-4,
                    return_eigenvectors=False)[0]
    except ArpackNoConvergence:
        return gersh
    return min(gersh, 1.02 * float(lam))


def stable_dt(coupling_extent: float, dt_max: float = DEFAULT_DT) -> float:
    """Step size keeping explicit RK4 inside its stability region."""
    return min(dt_max, _RK4_SAFE_REAL_EXTENT / (coupling_extent + _INTRINSIC_STIFFNESS))


def default_period(params: OscParams = OscParams()) -> float:
    """Solo period at the centre of the default drive range."""
    lo, hi = input_range(params)
    return natural_period(0.5 * (lo + hi), params)


def default_duration(params: OscParams = OscParams(), periods: float = DEFAULT_PERIODS) -> float:
    return periods * default_period(params)


def _steps(duration, dt, sample_dt):
    if duration <= 0 or dt <= 0:
        raise ValueError("duration and dt must be positive")
    n_steps = int(math.floor(duration / dt + 1e-9))
    sample_every = 1 if sample_dt is None else max(1, int(round(sample_dt / dt)))
    n_steps -= n_steps % sample_every
    return n_steps, sample_every


def _raise_divergence(failure, dt, offset=0):
    step_index, index = failure
    t = (step_index + 1) * dt
    raise DivergenceError(f"oscillator {index - offset} diverged at t={t:.4g}", index=index - offset, time=t)


def simulate(spec: NetworkSpec, duration: float, dt: float | None = None, sample_dt: float | None = None,
             record_w: bool = False, backend: str | None = None) -> TraceBuffer:
    """Integrate a flat network with fixed-step RK4.

    Coupling ``sum_j k_ij (x_j - x_i)`` acts on both state components.
    ``dt=None`` picks the largest stable step not exceeding ``DEFAULT_DT``.
    ``sample_dt`` thins the stored trace (rounded to a multiple of ``dt``).
    """
    if dt is None:
        dt = stable_dt(laplacian_lambda_max(spec.graph))
    n_steps, every = _steps(duration, dt, sample_dt)
    _, _, out_v, out_w, failure = kernels.integrate(
        spec.v0, spec.w0, spec.inputs, spec.graph.adjacency(), spec.params, dt, n_steps,
        sample_every=every, record_w=record_w, backend=backend,
    )
    if failure is not None:
        _raise_divergence(failure, dt)
    return TraceBuffer(dt * every, out_v, out_w, step_dt=dt)


def _stacked(spec: HierarchySpec):
    n1, n2 = spec.layer1.n, spec.layer2.n
    adj = sp.block_diag([spec.layer1.graph.adjacency(), spec.layer2.graph.adjacency()], format="csr")
    adj.sort_indices()
    proj = sp.hstack([-spec.A, spec.B], format="csr")
    knode = np.concatenate([np.full(n1, float(spec.k1)), np.full(n2, float(spec.k2))])
    return adj, proj, knode


def hierarchy_extent(spec: HierarchySpec) -> float:
    """Upper estimate of the coupling operator's spectral extent."""
    lam = max(laplacian_lambda_max(spec.layer1.graph), laplacian_lambda_max(spec.layer2.graph))
    _, proj, knode = _stacked(spec)
    gram = abs(proj.T @ proj)
    row = np.asarray(gram.sum(axis=1)).ravel()
    return lam + float((knode * row).max(initial=0.0))


def simulate_hierarchy(spec: HierarchySpec, duration: float, dt: float | None = None,
                       sample_dt: float | None = None, record_w: bool = False,
                       backend: str | None = None) -> tuple[TraceBuffer, TraceBuffer]:
    """Integrate two layers joined by ``k1 A^T (B x2 - A x1)`` and ``k2 B^T (A x1 - B x2)``."""
    n1 = spec.layer1.n
    if dt is None:
        dt = stable_dt(hierarchy_extent(spec))
    n_steps, every = _steps(duration, dt, sample_dt)
    adj, proj, knode = _stacked(spec)
    v0 = np.concatenate([spec.layer1.v0, spec.layer2.v0])
    w0 = np.concatenate([spec.layer1.w0, spec.layer2.w0])
    drive = np.concatenate([spec.layer1.inputs, spec.layer2.inputs])
    _, _, out_v, out_w, failure = kernels.integrate(
        v0, w0, drive, adj, spec.layer1.params, dt, n_steps, sample_every=every,
        projection=proj, knode=knode, record_w=record_w, backend=backend,
    )
    if failure is not None:
        _raise_divergence(failure, dt)
    sdt = dt * every
    t1 = TraceBuffer(sdt, out_v[:, :n1], None if out_w is None else out_w[:, :n1], step_dt=dt)
    t2 = TraceBuffer(sdt, out_v[:, n1:], None if out_w is None else out_w[:, n1:], step_dt=dt)
    return t1, t2


def coupling_residual(spec: HierarchySpec, x1, x2) -> float:
    """Max-norm of ``A x1 - B x2``; states may be ``(n,)`` or ``(n, 2)``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape[0] != spec.A.shape[1] or x2.shape[0] != spec.B.shape[1]:
        raise DimensionError("state lengths do not match A/B column counts")
    r = spec.A @ x1 - spec.B @ x2
    return float(np.max(np.abs(r), initial=0.0))
