"""Deterministic reference: master-equation propagation, steady state and correlations.

Propagation uses the classical fourth-order Runge-Kutta map with a fixed step.
For a linear generator ``L`` one RK4 step of size ``h`` is exactly the matrix
``1 + hL + (hL)²/2 + (hL)³/6 + (hL)⁴/24``; that matrix is built once and
applied repeatedly, which is the same arithmetic as stage-wise RK4 but cheaper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DarkChannelError, NonUniqueSteadyStateError, StepSizeError
from .hilbert import DensityMatrix, LindbladGenerator, Operator, left_right, liouvillian

__all__ = [
    "CorrelationCurve",
    "LindbladGenerator",
    "awtd_master",
    "g2_master",
    "integrate",
    "propagate",
    "steady_state",
    "wtd_master",
]

# Integrator step bound in units of the fastest jump rate.
MAX_STEP_RATE = 0.01
DEFAULT_STEP_RATE = 0.005
NULL_TOL = 1e-9


@dataclass(frozen=True)
class CorrelationCurve:
    channel: str
    taus: np.ndarray
    values: np.ndarray
    source: str
    stderr: np.ndarray | None = field(default=None)

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if taus.shape != values.shape or taus.ndim != 1:
            raise ConfigurationError("taus and values must be 1-d arrays of equal length")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("correlation values must be finite")
        if taus.size and (taus[0] < 0 or np.any(np.diff(taus) <= 0)):
            raise ConfigurationError("taus must be nonnegative and strictly increasing")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "values", values)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))


def _rk4_matrix(lv: np.ndarray, h: float) -> np.ndarray:
    a = h * lv
    eye = np.eye(lv.shape[0], dtype=np.complex128)
    return eye + a @ (eye + a @ (eye / 2 + a @ (eye / 6 + a / 24)))


class _Propagator:
    """Fixed-step RK4 propagation of vectorized density matrices."""

    def __init__(self, lv: np.ndarray, dt: float):
        self.lv = lv
        self.dt = dt
        self._cache: dict[tuple[int, float], np.ndarray] = {}
        self._step = _rk4_matrix(lv, dt)

    def over(self, t: float) -> np.ndarray:
        """Map over duration ``t``, using ``ceil(t/dt)`` equal steps."""
        if t == 0:
            return np.eye(self.lv.shape[0], dtype=np.complex128)
        n = max(1, math.ceil(t / self.dt - 1e-9))
        key = (n, t)
        if key not in self._cache:
            h = t / n
            step = self._step if abs(h - self.dt) <= 1e-12 * self.dt else _rk4_matrix(self.lv, h)
            self._cache[key] = np.linalg.matrix_power(step, n)
        return self._cache[key]


def _step_for(gen: LindbladGenerator, dt: float | None) -> float:
    rate = max(gen.rate_scale, 1e-300)
    if dt is None:
        scale = max(rate, np.linalg.norm(gen.h_coherent.matrix, 2), 1.0)
        return DEFAULT_STEP_RATE / scale
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if dt > MAX_STEP_RATE / rate * (1 + 1e-12):
        raise StepSizeError(f"dt={dt} exceeds {MAX_STEP_RATE}/Γ_max = {MAX_STEP_RATE / rate:.4g}")
    return dt


def propagate(gen: LindbladGenerator, rho0: np.ndarray, times: Sequence[float], dt: float | None = None) -> np.ndarray:
    """ρ at each of the increasing ``times`` (starting from ``t=0``) in one forward pass."""
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ConfigurationError("times must be nonnegative and nondecreasing")
    d = gen.dim
    prop = _Propagator(liouvillian(gen), _step_for(gen, dt))
    v = np.asarray(rho0, dtype=np.complex128).reshape(-1)
    out = np.empty((times.size, d, d), dtype=np.complex128)
    t_prev = 0.0
    for i, t in enumerate(times):
        v = prop.over(t - t_prev) @ v
        if not np.all(np.isfinite(v)):
            raise ConfigurationError(f"non-finite density matrix at t={t}")
        out[i] = v.reshape(d, d)
        t_prev = t
    return out


def integrate(gen: LindbladGenerator, rho0: DensityMatrix, t_end: float, dt: float | None = None) -> DensityMatrix:
    if t_end < 0:
        raise ConfigurationError("t_end must be nonnegative")
    rho = propagate(gen, rho0.matrix, [t_end], dt)[0]
    return DensityMatrix(rho, normalized=rho0.normalized)


def steady_state(gen: LindbladGenerator) -> DensityMatrix:
    """Unique stationary state from the null space of the vectorized generator."""
    d = gen.dim
    lv = liouvillian(gen)
    sv = np.linalg.svd(lv, compute_uv=False)
    null_dim = int(np.sum(sv <= NULL_TOL * max(sv[0], 1.0)))
    if null_dim != 1:
        raise NonUniqueSteadyStateError(null_dim)
    # Replace the null direction by the trace condition and solve.
    trace_row = np.eye(d, dtype=np.complex128).reshape(1, -1)
    a = np.vstack([lv, trace_row])
    b = np.zeros(d * d + 1, dtype=np.complex128)
    b[-1] = 1.0
    x, *_ = np.linalg.lstsq(a, b, rcond=None)
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    return DensityMatrix(rho / np.trace(rho).real)


def channel_flux(rho: DensityMatrix, j: Operator) -> float:
    jm = j.matrix
    return float(np.trace(jm @ rho.matrix @ jm.conj().T).real)


def _conditioned(gen: LindbladGenerator, j: Operator, channel: str) -> tuple[np.ndarray, float]:
    rho = steady_state(gen).matrix
    jm = j.matrix
    after = jm @ rho @ jm.conj().T
    flux = float(np.trace(after).real)
    if flux <= 1e-15:
        raise DarkChannelError(f"channel {channel} carries no steady-state flux")
    return after / flux, flux


def g2_master(gen: LindbladGenerator, j: Operator, taus: Sequence[float], channel: str = "?",
              dt: float | None = None) -> CorrelationCurve:
    """Steady-state ``g²(τ)`` of the detections described by jump operator ``j``."""
    taus = np.asarray(taus, dtype=float)
    after, flux = _conditioned(gen, j, channel)
    jm = j.matrix
    rhos = propagate(gen, after, taus, dt)
    values = np.einsum("ij,tjk,ki->t", jm, rhos, jm.conj().T).real / flux
    return CorrelationCurve(channel, taus, values, "master-equation")


def g2_zero(gen: LindbladGenerator, j: Operator) -> float:
    """``Tr{J²ρJ†²} / Tr{JρJ†}²`` without any propagation."""
    rho = steady_state(gen).matrix
    jm = j.matrix
    j2 = jm @ jm
    return float(np.trace(j2 @ rho @ j2.conj().T).real / np.trace(jm @ rho @ jm.conj().T).real ** 2)


def _no_detection(gen: LindbladGenerator, j: Operator) -> np.ndarray:
    jm = j.matrix
    return liouvillian(gen) - left_right(jm, jm.conj().T)


def wtd_master(gen: LindbladGenerator, j: Operator, taus: Sequence[float], channel: str = "?",
               dt: float | None = None) -> CorrelationCurve:
    """Exact steady-state waiting-time density ``W(τ)`` (per unit time) for channel ``j``.

    Between two detections in this channel the state evolves with the generator
    stripped of this channel's jump term; other channels still act.
    """
    taus = np.asarray(taus, dtype=float)
    after, _ = _conditioned(gen, j, channel)
    d = gen.dim
    prop = _Propagator(_no_detection(gen, j), _step_for(gen, dt))
    jm = j.matrix
    v = after.reshape(-1)
    values = np.empty(taus.size)
    t_prev = 0.0
    for i, t in enumerate(taus):
        v = prop.over(t - t_prev) @ v
        x = v.reshape(d, d)
        values[i] = np.trace(jm @ x @ jm.conj().T).real
        t_prev = t
    return CorrelationCurve(channel, taus, values, "master-equation")


def awtd_master(gen: LindbladGenerator, j: Operator, tau1: Sequence[float], tau2: Sequence[float],
                dt: float | None = None) -> np.ndarray:
    """Exact joint density ``A(τ₁, τ₂)`` of two adjacent waits, shape ``(len(tau1), len(tau2))``."""
    tau1 = np.asarray(tau1, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    after, _ = _conditioned(gen, j, "?")
    d = gen.dim
    prop = _Propagator(_no_detection(gen, j), _step_for(gen, dt))
    jm = j.matrix
    sandwich = left_right(jm, jm.conj().T)

    def sweep(v0: np.ndarray, taus: np.ndarray) -> np.ndarray:
        out = np.empty((taus.size, v0.size), dtype=np.complex128)
        v, t_prev = v0, 0.0
        for i, t in enumerate(taus):
            v = prop.over(t - t_prev) @ v
            out[i] = v
            t_prev = t
        return out

    first = sweep(after.reshape(-1), tau1) @ sandwich.T  # unnormalized states after the 2nd detection
    result = np.empty((tau1.size, tau2.size))
    for i, v in enumerate(first):
        second = sweep(v, tau2) @ sandwich.T
        result[i] = np.einsum("ti->t", second.reshape(tau2.size, d, d).diagonal(axis1=1, axis2=2)).real
    return result

