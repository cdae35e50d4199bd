"""Sufficient conditions for global exponential synchronization.

The network synchronizes fully when the smallest eigenvalue of the coupling
Laplacian restricted to the complement of the synchronized subspace exceeds
the largest eigenvalue of the symmetric part of the oscillator Jacobian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space

from oscgroup.coupling import CouplingGraph, gaussian_matrix, laplacian
from oscgroup.errors import RangeError
from oscgroup.oscillator import OscParams

DEFAULT_V_RANGE = (-3.0, 3.0)
DEFAULT_SAMPLES = 10_000

NOT_NECESSARY_NOTE = (
    "sufficient condition only: a failed check does not imply that the network "
    "fails to synchronize concurrently"
)


@dataclass(frozen=True)
class SyncSubspaceBasis:
    """Orthonormal rows spanning the complement of the all-synchronized subspace.

    Stacked states are ordered oscillator-major: ``[v_0, w_0, v_1, w_1, ...]``.
    """

    V: np.ndarray
    n: int
    state_dim: int


@dataclass(frozen=True)
class StabilityReport:
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    n: int
    v_range: tuple[float, float]
    note: str = NOT_NECESSARY_NOTE

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "satisfied": self.satisfied,
            "n": self.n,
            "v_min": self.v_range[0],
            "v_max": self.v_range[1],
            "note": self.note,
        }


def sync_subspace_basis(n: int, state_dim: int = 2) -> SyncSubspaceBasis:
    if n < 2:
        raise ValueError("need at least two oscillators")
    q = null_space(np.ones((1, n))).T  # (n-1, n), orthonormal rows orthogonal to 1
    V = np.kron(q, np.eye(state_dim))
    return SyncSubspaceBasis(V, n, state_dim)


def _sym_jacobian_lambda_max(v, params: OscParams) -> np.ndarray:
    """Largest eigenvalue of the symmetric Jacobian part at each ``v``."""
    v = np.asarray(v, dtype=float)
    a = 3.0 - 3.0 * v**2 - 7.0 * v**6
    sech2 = 1.0 / np.cosh(np.clip(params.beta_s * v, -350, 350)) ** 2
    off = 0.5 * (-1.0 + params.c * params.alpha * params.beta_s * sech2)
    d = -params.c
    return 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + off**2)


def jacobian_sup(params: OscParams = OscParams(), v_range=DEFAULT_V_RANGE,
                 samples: int = DEFAULT_SAMPLES) -> float:
    """Sampled sup over ``v`` of lambda_max of the symmetric Jacobian part."""
    v = np.linspace(v_range[0], v_range[1], samples)
    if v_range[0] <= 0.0 <= v_range[1]:
        v = np.append(v, 0.0)
    return float(_sym_jacobian_lambda_max(v, params).max())


def restricted_lambda_min(g: CouplingGraph, state_dim: int = 2) -> float:
    """lambda_min of ``V (L kron I) V^T``."""
    if g.n < 2:
        return math.inf
    basis = sync_subspace_basis(g.n, state_dim)
    lift = np.kron(laplacian(g, dense=True), np.eye(state_dim))
    m = basis.V @ lift @ basis.V.T
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def check_sync_condition(g: CouplingGraph, params: OscParams = OscParams(),
                         v_range=DEFAULT_V_RANGE, traces=None,
                         samples: int = DEFAULT_SAMPLES) -> StabilityReport:
    """Evaluate the sufficient synchronization condition for graph ``g``.

    If ``traces`` (a TraceBuffer or array of v-values) leave ``v_range`` the
    sampled supremum does not cover the attractor and RangeError is raised.
    """
    lo, hi = map(float, v_range)
    if traces is not None:
        vals = np.asarray(getattr(traces, "v", traces))
        if vals.size and (vals.min() < lo or vals.max() > hi):
            raise RangeError(f"traces span [{vals.min():.3g}, {vals.max():.3g}], outside {v_range}")
    lhs = restricted_lambda_min(g)
    rhs = jacobian_sup(params, (lo, hi), samples)
    margin = lhs - rhs
    return StabilityReport(lhs, rhs, bool(margin > 0), margin, g.n, (lo, hi))


def metric_gain_bound(params: OscParams = OscParams()) -> float:
    """Pairwise gain above which the metric-transformed coupled Jacobian is negative definite."""
    return 3.0 + params.alpha * params.beta_s / 4.0


def metric_transform(params: OscParams = OscParams()) -> np.ndarray:
    return np.diag([math.sqrt(params.c * params.alpha * params.beta_s), 1.0])


def transformed_lambda_max(v, k: float, params: OscParams = OscParams()) -> np.ndarray:
    """lambda_max of the symmetric part of ``Theta J(v) Theta^-1 - diag(k, 0)``."""
    from oscgroup.oscillator import OscState, jacobian

    theta = metric_transform(params)
    theta_inv = np.linalg.inv(theta)
    out = []
    for vi in np.atleast_1d(v):
        m = theta @ jacobian(OscState(float(vi), 0.0), params) @ theta_inv - np.diag([k, 0.0])
        out.append(np.linalg.eigvalsh(0.5 * (m + m.T))[-1])
    return np.array(out)


def generalized_bound(f_prime: float, params: OscParams = OscParams()) -> float:
    """Bound ``f'(v) + alpha beta / 4`` for ``dv = f(v) - w + I`` with sigmoid slope <= 1."""
    return f_prime + params.alpha * params.beta_s / 4.0


def schoenberg_pd_check(stimuli, beta_t: float, tol: float = 0.0) -> tuple[bool, float]:
    """Positive definiteness of the full Gaussian gain matrix. Returns ``(is_pd, lambda_min)``."""
    k = gaussian_matrix(stimuli, beta_t)
    lam = float(np.linalg.eigvalsh(k)[0])
    return lam > tol, lam
