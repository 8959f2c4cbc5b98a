"""Monte-Carlo quantum-jump engine.

Each step of size ``dt``:

1. ``P_R = dt <ψ|J_R†J_R|ψ>`` and ``P_L`` likewise from the current state;
   the trajectory aborts if ``P_R + P_L > 0.1``.
2. Draw ``r`` uniform on ``[0, 1)`` (uniform number ``n`` of the trajectory's
   Philox stream for step ``n``).
3. ``r < P_R`` collapses on ``J_R``; ``r < P_R + P_L`` collapses on ``J_L``;
   otherwise the state is propagated with the no-jump map and renormalized.

Events are stamped with the end time of their step, ``(n + 1) * dt``, and
stored as that integer step.  The hot loop is a numba kernel that runs a
block of trajectories without the GIL, so blocks can run on threads.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numba import njit

from .errors import ConfigurationError, EngineAbort
from .events import CHANNEL_NAMES, DetectionEvent, EventTable
from .hilbert import StateVector, propagator
from .model import DARK_NORM2, MAX_STEP_PROBABILITY, ModelOperators, OneQubitParams
from .rng import check_seed, uniform_pair

SCHEMES = ("exp", "euler")
# Kernel status codes.
OK, STEP_TOO_LARGE, DARK_COLLAPSE = 0, 1, 2
_REASONS = {
    STEP_TOO_LARGE: "jump probability per step exceeded 0.1",
    DARK_COLLAPSE: "selected jump annihilates the state",
}
DT_FRACTION = 0.01
BLOCK = 64


@dataclass(frozen=True)
class TrajectoryConfig:
    """Step size, duration and stream selection of a quantum-jump run.

    Attributes:
        dt: Step size.
        t_end: Duration; the run has ``ceil(t_end / dt)`` steps.
        scheme: ``"exp"`` (exact no-jump map) or ``"euler"`` (``1 - i H_eff dt``).
        record_population: Keep populations every ``sample_stride`` steps.
        master_seed: 64-bit key of the Philox streams.
        sample_stride: Steps between population samples.
    """

    dt: float
    t_end: float
    scheme: str = "exp"
    record_population: bool = False
    master_seed: int = 0
    sample_stride: int = 100

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError("dt must be positive and finite")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ConfigurationError("t_end must be nonnegative and finite")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")
        if self.sample_stride < 1:
            raise ConfigurationError("sample_stride must be at least 1")
        object.__setattr__(self, "master_seed", check_seed(self.master_seed))

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    def validate(self, m: ModelOperators) -> None:
        """Check the step-size bounds against the model's fastest rates."""
        rates = {"Γ": m.gamma_max, "n̄": m.flux, "|gα|": m.drive_max}
        for name, rate in rates.items():
            if rate > 0 and self.dt > DT_FRACTION / rate * (1 + 1e-12):
                raise ConfigurationError(
                    f"dt={self.dt} exceeds {DT_FRACTION}/{name} = {DT_FRACTION / rate:.4g}")


@dataclass(frozen=True)
class TrajectoryRecord:
    trajectory_id: int
    steps: np.ndarray
    channels: np.ndarray
    dt: float
    sample_times: np.ndarray
    populations: np.ndarray
    final_state: StateVector

    @property
    def events(self) -> list[DetectionEvent]:
        return [DetectionEvent(self.trajectory_id, float(s * self.dt), CHANNEL_NAMES[c])
                for s, c in zip(self.steps, self.channels)]


@njit(cache=True, nogil=True)
def _rate(m, psi):
    d = psi.size
    acc = 0.0
    for i in range(d):
        s = 0j
        for j in range(d):
            s += m[i, j] * psi[j]
        acc += (psi[i].conjugate() * s).real
    return max(acc, 0.0)


@njit(cache=True, nogil=True)
def _matvec(m, psi, out):
    d = psi.size
    for i in range(d):
        s = 0j
        for j in range(d):
            s += m[i, j] * psi[j]
        out[i] = s


@njit(cache=True, nogil=True)
def _norm2(v):
    acc = 0.0
    for i in range(v.size):
        acc += v[i].real ** 2 + v[i].imag ** 2
    return acc


@njit(cache=True, nogil=True)
def _run_block(u, jr, jl, mr, ml, psi0, dt, n_steps, seed, tid0, n_traj, stride, max_p,
               dark2, record, ev_traj, ev_step, ev_chan, n_ev, finals, samples, status):
    """Run trajectories ``tid0 .. tid0+n_traj-1``.

    Events are appended to the ``ev_*`` buffers starting at ``n_ev``; the
    return value is the new event count, or ``-1`` if the buffers filled up
    (the caller then retries with larger buffers).  ``status[k]`` holds
    ``(code, step)`` for trajectory ``k``.
    """
    d = psi0.size
    psi = np.empty(d, dtype=np.complex128)
    tmp = np.empty(d, dtype=np.complex128)
    cap = ev_step.size
    for k in range(n_traj):
        tid = tid0 + k
        for i in range(d):
            psi[i] = psi0[i]
        if record:
            for i in range(d):
                samples[k, 0, i] = psi[i].real ** 2 + psi[i].imag ** 2
        status[k, 0] = 0
        status[k, 1] = 0
        r1 = 0.0
        for n in range(n_steps):
            pr = dt * _rate(mr, psi)
            pl = dt * _rate(ml, psi)
            if pr + pl > max_p:
                status[k, 0] = 1
                status[k, 1] = n
                break
            if n % 2 == 0:
                r, r1 = uniform_pair(seed, tid, n // 2)
            else:
                r = r1
            if r < pr + pl:
                if r < pr:
                    _matvec(jr, psi, tmp)
                    ch = 0
                else:
                    _matvec(jl, psi, tmp)
                    ch = 1
                nrm2 = _norm2(tmp)
                if nrm2 < dark2:
                    status[k, 0] = 2
                    status[k, 1] = n
                    break
                if n_ev >= cap:
                    return -1
                ev_traj[n_ev] = tid
                ev_step[n_ev] = n + 1
                ev_chan[n_ev] = ch
                n_ev += 1
            else:
                _matvec(u, psi, tmp)
                nrm2 = _norm2(tmp)
            scale = 1.0 / np.sqrt(nrm2)
            for i in range(d):
                psi[i] = tmp[i] * scale
            if record and (n + 1) % stride == 0:
                row = (n + 1) // stride
                for i in range(d):
                    samples[k, row, i] = psi[i].real ** 2 + psi[i].imag ** 2
        for i in range(d):
            finals[k, i] = psi[i]
    return n_ev


@dataclass
class _Block:
    tid0: int
    n_traj: int
    trajectory: np.ndarray
    steps: np.ndarray
    channels: np.ndarray
    finals: np.ndarray
    samples: np.ndarray
    status: np.ndarray


class _Engine:
    def __init__(self, m: ModelOperators, cfg: TrajectoryConfig, psi0: StateVector | None):
        cfg.validate(m)
        psi0 = m.ground_state if psi0 is None else psi0
        if psi0.dim != m.dim or not psi0.normalized:
            raise ConfigurationError("initial state must be normalized and match the model")
        self.cfg = cfg
        self.m = m
        self.psi0 = np.ascontiguousarray(psi0.amps)
        self.u = np.ascontiguousarray(propagator(m.h_eff, cfg.dt, cfg.scheme))
        self.jr = np.ascontiguousarray(m.j_right.matrix)
        self.jl = np.ascontiguousarray(m.j_left.matrix)
        self.mr = np.ascontiguousarray(m.rate_operator("R").matrix)
        self.ml = np.ascontiguousarray(m.rate_operator("L").matrix)
        self.n_steps = cfg.n_steps
        self.n_samples = self.n_steps // cfg.sample_stride + 1 if cfg.record_population else 1
        # Expected events per trajectory, with headroom.
        self.guess = int(1.5 * (m.flux + m.gamma_max) * cfg.t_end) + 16

    def run(self, tid0: int, n_traj: int) -> _Block:
        cfg = self.cfg
        cap = self.guess * n_traj
        finals = np.empty((n_traj, self.m.dim), dtype=np.complex128)
        samples = np.zeros((n_traj if cfg.record_population else 1, self.n_samples, self.m.dim))
        status = np.zeros((n_traj, 2), dtype=np.int64)
        while True:
            ev_traj = np.empty(cap, dtype=np.int64)
            ev_step = np.empty(cap, dtype=np.int64)
            ev_chan = np.empty(cap, dtype=np.uint8)
            n = _run_block(self.u, self.jr, self.jl, self.mr, self.ml, self.psi0, cfg.dt,
                           self.n_steps, np.uint64(cfg.master_seed), tid0, n_traj,
                           cfg.sample_stride, MAX_STEP_PROBABILITY, DARK_NORM2,
                           cfg.record_population, ev_traj, ev_step, ev_chan, 0,
                           finals, samples, status)
            if n >= 0:
                break
            cap *= 2
        return _Block(tid0, n_traj, ev_traj[:n].copy(), ev_step[:n].copy(), ev_chan[:n].copy(),
                      finals, samples, status)


def _check_status(block: _Block, dt: float) -> None:
    bad = np.nonzero(block.status[:, 0])[0]
    if bad.size:
        k = int(bad[0])
        code, step = block.status[k]
        raise EngineAbort(block.tid0 + k, f"{_REASONS[int(code)]} at t={step * dt:.6g}")


def _blocks(engine: _Engine, n_traj: int, first_id: int, workers: int,
            block_size: int = BLOCK) -> Iterator[_Block]:
    """Blocks in trajectory-id order; at most ``2 * workers`` are in flight."""
    if n_traj < 1:
        raise ConfigurationError("n_traj must be at least 1")
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    starts = list(range(first_id, first_id + n_traj, block_size))
    sizes = [min(block_size, first_id + n_traj - s) for s in starts]
    if workers == 1:
        for s, k in zip(starts, sizes):
            block = engine.run(s, k)
            _check_status(block, engine.cfg.dt)
            yield block
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        jobs = iter(zip(starts, sizes))
        for s, k in jobs:
            pending.append(pool.submit(engine.run, s, k))
            if len(pending) >= 2 * workers:
                break
        while pending:
            block = pending.popleft().result()
            nxt = next(jobs, None)
            if nxt is not None:
                pending.append(pool.submit(engine.run, *nxt))
            _check_status(block, engine.cfg.dt)
            yield block


def _records(engine: _Engine, block: _Block) -> Iterator[TrajectoryRecord]:
    cfg = engine.cfg
    times = np.arange(engine.n_samples) * cfg.sample_stride * cfg.dt if cfg.record_population \
        else np.empty(0)
    bounds = np.searchsorted(block.trajectory, np.arange(block.tid0, block.tid0 + block.n_traj + 1))
    for k in range(block.n_traj):
        lo, hi = bounds[k], bounds[k + 1]
        pops = block.samples[k] if cfg.record_population else np.empty((0, engine.m.dim))
        final = StateVector(block.finals[k], normalized=False).normalize()
        yield TrajectoryRecord(block.tid0 + k, block.steps[lo:hi], block.channels[lo:hi],
                               cfg.dt, times, pops, final)


def run_trajectory(m: ModelOperators, cfg: TrajectoryConfig, psi0: StateVector | None = None,
                   trajectory_id: int = 0) -> TrajectoryRecord:
    """Run one trajectory; ``psi0`` defaults to the ground state."""
    engine = _Engine(m, cfg, psi0)
    block = engine.run(trajectory_id, 1)
    _check_status(block, cfg.dt)
    return next(_records(engine, block))


def run_ensemble(m: ModelOperators, cfg: TrajectoryConfig, n_traj: int,
                 psi0: StateVector | None = None, workers: int = 1,
                 first_id: int = 0) -> Iterator[TrajectoryRecord]:
    """Stream trajectories ``first_id .. first_id+n_traj-1`` in id order.

    The output does not depend on ``workers``: trajectory ``i`` only reads
    stream ``(master_seed, i)``.
    """
    engine = _Engine(m, cfg, psi0)
    for block in _blocks(engine, n_traj, first_id, workers):
        yield from _records(engine, block)


def iter_event_blocks(m: ModelOperators, cfg: TrajectoryConfig, n_traj: int,
                      psi0: StateVector | None = None, workers: int = 1) -> Iterator[EventTable]:
    """Bounded-memory event stream: one :class:`EventTable` per block of trajectories."""
    engine = _Engine(m, cfg, psi0)
    for block in _blocks(engine, n_traj, 0, workers):
        yield EventTable(block.trajectory, block.steps, block.channels, cfg.dt,
                         engine.n_steps, block.n_traj)


def simulate_events(m: ModelOperators, cfg: TrajectoryConfig, n_traj: int,
                    psi0: StateVector | None = None, workers: int = 1) -> EventTable:
    return EventTable.concatenate(iter_event_blocks(m, cfg, n_traj, psi0, workers))


def ensemble_density(m: ModelOperators, cfg: TrajectoryConfig, n_traj: int,
                     psi0: StateVector | None = None, workers: int = 1) -> np.ndarray:
    """Average of ``|ψ(t_end)><ψ(t_end)|`` over ``n_traj`` trajectories."""
    engine = _Engine(m, cfg, psi0)
    acc = np.zeros((m.dim, m.dim), dtype=np.complex128)
    for block in _blocks(engine, n_traj, 0, workers):
        f = block.finals / np.linalg.norm(block.finals, axis=1, keepdims=True)
        acc += np.einsum("ki,kj->ij", f, f.conj())
    return acc / n_traj


def conditional_state_analytics(p: OneQubitParams, psi0: StateVector, t: float) -> StateVector:
    """Closed-form one-qubit state after a jump-free interval ``t``.

    With ``κ = Γ/2 + iΔ`` the amplitude ratio obeys
    ``c_e/c_g (t) = r₀ e^{-κt} - (i gα/κ)(1 - e^{-κt})``, and ``c_g`` carries
    the phase ``e^{iΔt/2}``.  A state with ``c_g = 0`` stays ``|e⟩``.
    """
    if psi0.dim != 2:
        raise ConfigurationError("closed-form conditional state is for one qubit")
    if t < 0:
        raise ConfigurationError("t must be nonnegative")
    cg, ce = psi0.amps
    if cg == 0:
        return psi0.normalize()
    kappa = 0.5 * p.gamma + 1j * p.delta
    decay = np.exp(-kappa * t)
    ratio = ce / cg * decay - 1j * p.g * p.alpha / kappa * (1 - decay)
    phase = np.exp(0.5j * p.delta * t) * cg / abs(cg)
    amps = phase * np.array([1.0, ratio], dtype=np.complex128)
    return StateVector(amps / np.linalg.norm(amps))
