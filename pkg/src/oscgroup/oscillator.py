"""Single-oscillator dynamics: a modified FitzHugh-Nagumo unit.

    dv/dt = 3v - v^3 - v^7 + 2 - w + I
    dw/dt = c * (alpha * (1 + tanh(beta_s * v)) - w)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from oscgroup import kernels
from oscgroup.errors import DivergenceError, NotBracketedError

DEFAULT_DT = 0.05
SPIKE_THRESHOLD = 1.0
TRANSIENT_FRACTION = 0.25
# inputs are drawn from [I* + lo, I* + hi]
INPUT_OFFSETS = (0.2, 0.7)


@dataclass(frozen=True)
class OscParams:
    alpha: float = 12.0
    c: float = 0.04
    beta_s: float = 4.0

    def __post_init__(self):
        for name in ("alpha", "c", "beta_s"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class OscState:
    v: float
    w: float

    def is_finite(self) -> bool:
        return math.isfinite(self.v) and math.isfinite(self.w)


def derivative(state: OscState, drive: float, params: OscParams = OscParams()) -> OscState:
    """Time derivative ``(dv, dw)`` of one oscillator, returned as an OscState."""
    v, w = state.v, state.w
    v2 = v * v
    v3 = v2 * v
    v7 = v3 * v3 * v
    dv = 3.0 * v - v3 - v7 + 2.0 - w + drive
    dw = params.c * (params.alpha * (1.0 + math.tanh(params.beta_s * v)) - w)
    return OscState(dv, dw)


def jacobian(state: OscState, params: OscParams = OscParams()) -> np.ndarray:
    """Analytic 2x2 Jacobian d(dv, dw)/d(v, w). Independent of ``w``."""
    v = state.v
    sech2 = 1.0 / math.cosh(params.beta_s * v) ** 2 if abs(params.beta_s * v) < 350 else 0.0
    return np.array(
        [
            [3.0 - 3.0 * v * v - 7.0 * v**6, -1.0],
            [params.c * params.alpha * params.beta_s * sech2, -params.c],
        ]
    )


def step(state: OscState, drive: float, params: OscParams = OscParams(), dt: float = DEFAULT_DT) -> OscState:
    """One classical RK4 step of size ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    v, w = state.v, state.w
    k1 = derivative(state, drive, params)
    k2 = derivative(OscState(v + 0.5 * dt * k1.v, w + 0.5 * dt * k1.w), drive, params)
    k3 = derivative(OscState(v + 0.5 * dt * k2.v, w + 0.5 * dt * k2.w), drive, params)
    k4 = derivative(OscState(v + dt * k3.v, w + dt * k3.w), drive, params)
    h6 = dt / 6.0
    out = OscState(
        v + h6 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
        w + h6 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w),
    )
    if not out.is_finite():
        raise DivergenceError(f"non-finite state after step from {state}", index=0)
    return out


def solo_trace(drive: float, params: OscParams = OscParams(), duration: float = 400.0,
               dt: float = DEFAULT_DT, initial: OscState = OscState(0.0, 0.0)) -> np.ndarray:
    """v-trace of one uncoupled oscillator, sampled every ``dt``."""
    n_steps = int(math.floor(duration / dt + 1e-9))
    _, _, out_v, _, failure = kernels.integrate(
        [initial.v], [initial.w], [drive], sp.csr_matrix((1, 1)), params, dt, n_steps
    )
    if failure is not None:
        raise DivergenceError("solo oscillator diverged", index=0, time=(failure[0] + 1) * dt)
    return out_v[:, 0]


def upward_crossings(trace: np.ndarray, threshold: float = SPIKE_THRESHOLD) -> np.ndarray:
    """Fractional sample positions where ``trace`` crosses ``threshold`` upward."""
    trace = np.asarray(trace)
    k = np.nonzero((trace[:-1] < threshold) & (trace[1:] >= threshold))[0]
    return k + (threshold - trace[k]) / (trace[k + 1] - trace[k])


def is_oscillating(drive: float, params: OscParams = OscParams(), duration: float = 400.0,
                   dt: float = DEFAULT_DT, min_spikes: int = 3) -> bool:
    trace = solo_trace(drive, params, duration, dt)
    tail = trace[int(len(trace) * TRANSIENT_FRACTION):]
    return len(upward_crossings(tail)) >= min_spikes


def oscillation_threshold(params: OscParams = OscParams(), interval: tuple[float, float] = (-5.0, 5.0),
                          tol: float = 1e-3, duration: float = 400.0, dt: float = DEFAULT_DT) -> float:
    """Smallest drive at which a solo oscillator keeps spiking, found by bisection.

    Raises NotBracketedError when both ends of ``interval`` behave alike.
    """
    lo, hi = map(float, interval)
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise ValueError(f"bad search interval {interval!r}")
    osc_lo = is_oscillating(lo, params, duration, dt)
    osc_hi = is_oscillating(hi, params, duration, dt)
    if osc_lo == osc_hi:
        raise NotBracketedError(
            f"both ends of {interval} are {'oscillating' if osc_lo else 'quiescent'}"
        )
    # orient so that `hi` is the oscillating end
    flipped = osc_lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_oscillating(mid, params, duration, dt) != flipped:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@lru_cache(maxsize=16)
def default_threshold(params: OscParams = OscParams()) -> float:
    """Cached ``oscillation_threshold`` over [-5, 5]."""
    return oscillation_threshold(params)


def input_range(params: OscParams = OscParams()) -> tuple[float, float]:
    """Drive interval that keeps every oscillator above threshold."""
    base = default_threshold(params)
    return base + INPUT_OFFSETS[0], base + INPUT_OFFSETS[1]


@lru_cache(maxsize=64)
def natural_period(drive: float, params: OscParams = OscParams(), dt: float = DEFAULT_DT) -> float:
    """Median inter-spike interval of a solo oscillator (time units)."""
    trace = solo_trace(drive, params, duration=600.0, dt=dt)
    start = int(len(trace) * TRANSIENT_FRACTION)
    crossings = upward_crossings(trace[start:])
    if len(crossings) < 2:
        raise ValueError(f"drive {drive} does not sustain oscillation")
    return float(np.median(np.diff(crossings)) * dt)
