"""Dense complex linear algebra on the small Hilbert spaces of one and two qubits.

States, operators and density matrices are thin immutable wrappers around
numpy arrays.  Everything here is dense: the largest object is the 16x16
vectorized generator of the two-qubit model.

Basis conventions
-----------------
One qubit: ``(|g>, |e>)``.  Two qubits: ``(|gg>, |ge>, |eg>, |ee>)`` where the
first letter is qubit 1, i.e. the index is ``2*q1 + q2`` with ``g=0, e=1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

ONE_QUBIT_LABELS = ("g", "e")
TWO_QUBIT_LABELS = ("gg", "ge", "eg", "ee")

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
DENSITY_TOL = 1e-10
PSD_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ConfigurationError(f"{what} has non-finite entries")


def default_labels(dim: int) -> tuple[str, ...] | None:
    return {2: ONE_QUBIT_LABELS, 4: TWO_QUBIT_LABELS}.get(dim)


@dataclass(frozen=True)
class StateVector:
    """A pure state, possibly unnormalized (``normalized=False``)."""

    amps: np.ndarray
    normalized: bool = True
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        amps = _frozen(self.amps)
        if amps.ndim != 1 or amps.size == 0:
            raise ConfigurationError("state amplitudes must be a non-empty 1-d array")
        _check_finite(amps, "state")
        if self.normalized:
            norm2 = float(np.vdot(amps, amps).real)
            if abs(norm2 - 1.0) > NORM_TOL:
                raise ConfigurationError(f"state flagged normalized has norm^2 = {norm2!r}")
        labels = self.labels if self.labels is not None else default_labels(amps.size)
        if labels is not None and len(labels) != amps.size:
            raise ConfigurationError("basis labels do not match state dimension")
        object.__setattr__(self, "amps", amps)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.amps.size

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def normalize(self) -> StateVector:
        n = self.norm
        if n < 1e-150:
            raise ConfigurationError("cannot normalize the zero vector")
        return StateVector(self.amps / n, normalized=True, labels=self.labels)

    def populations(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def projector(self) -> np.ndarray:
        return np.outer(self.amps, self.amps.conj())


@dataclass(frozen=True)
class Operator:
    """A dense ``dim x dim`` operator; ``hermitian=True`` is checked on construction."""

    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigurationError("operator must be a square matrix")
        _check_finite(m, "operator")
        if self.hermitian and np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ConfigurationError("operator flagged Hermitian is not Hermitian")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dag(self) -> Operator:
        return Operator(self.matrix.conj().T, hermitian=self.hermitian)

    def __matmul__(self, other: Operator) -> Operator:
        return Operator(self.matrix @ other.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """A density matrix, or (``normalized=False``) any Hermitian matrix such as dρ/dt."""

    matrix: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigurationError("density matrix must be square")
        _check_finite(m, "density matrix")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > DENSITY_TOL:
            raise ConfigurationError("density matrix is not Hermitian")
        if self.normalized:
            tr = np.trace(m)
            if abs(tr - 1.0) > DENSITY_TOL:
                raise ConfigurationError(f"density matrix trace is {tr!r}")
            if np.linalg.eigvalsh(m).min() < -PSD_TOL:
                raise ConfigurationError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_state(cls, psi: StateVector) -> DensityMatrix:
        return cls(psi.normalize().projector())

    def expect(self, op: Operator) -> complex:
        return complex(np.trace(op.matrix @ self.matrix))


@dataclass(frozen=True)
class LindbladGenerator:
    """Coherent Hamiltonian plus jump operators of a Lindblad master equation."""

    h_coherent: Operator
    jumps: tuple[Operator, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.h_coherent.hermitian:
            object.__setattr__(self, "h_coherent", Operator(self.h_coherent.matrix, hermitian=True))
        jumps = tuple(self.jumps)
        for j in jumps:
            if j.dim != self.h_coherent.dim:
                raise ConfigurationError("jump operator dimension does not match the Hamiltonian")
        object.__setattr__(self, "jumps", jumps)

    @property
    def dim(self) -> int:
        return self.h_coherent.dim

    @property
    def rate_scale(self) -> float:
        """Largest eigenvalue of the summed jump rates ``Σ J†J``."""
        total = sum((j.matrix.conj().T @ j.matrix for j in self.jumps), np.zeros((self.dim,) * 2))
        return float(np.linalg.eigvalsh(total).max()) if self.jumps else 0.0


def basis_state(index: int | str, dim: int = 2) -> StateVector:
    """Computational basis state by index or label (``"e"``, ``"gg"``, ...)."""
    if isinstance(index, str):
        labels = default_labels(dim)
        if labels is None or index not in labels:
            raise ConfigurationError(f"unknown basis label {index!r} for dim {dim}")
        index = labels.index(index)
    amps = np.zeros(dim, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(amps)


def state(amps: Sequence[complex], normalize: bool = True) -> StateVector:
    v = np.asarray(amps, dtype=np.complex128)
    if normalize:
        return StateVector(v, normalized=False).normalize()
    return StateVector(v, normalized=False)


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise ConfigurationError(f"dimension mismatch: {a} vs {b}")


def apply(op: Operator, psi: StateVector) -> StateVector:
    _check_dims(op.dim, psi.dim)
    return StateVector(op.matrix @ psi.amps, normalized=False, labels=psi.labels)


def expectation(op: Operator, psi: StateVector) -> complex:
    """``<psi|op|psi>`` for a normalized state; exactly real for Hermitian ``op``."""
    _check_dims(op.dim, psi.dim)
    if not psi.normalized:
        raise ConfigurationError("expectation requires a normalized state")
    value = complex(np.vdot(psi.amps, op.matrix @ psi.amps))
    return complex(value.real, 0.0) if op.hermitian else value


# Taylor kernel inside scaling and squaring; after scaling ||A||_1 <= 1/4, so
# the truncation error is below 0.25**19 / 19! ~ 3e-29 relative.
_EXPM_ORDER = 18
_EXPM_THETA = 0.25


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a small dense complex matrix."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError("expm needs a square matrix")
    _check_finite(a, "expm argument")
    norm = np.abs(a).sum(axis=0).max(initial=0.0)
    squarings = 0
    if norm > _EXPM_THETA:
        squarings = int(np.ceil(np.log2(norm / _EXPM_THETA)))
    x = a / 2.0**squarings
    eye = np.eye(a.shape[0], dtype=np.complex128)
    result = eye.copy()
    for k in range(_EXPM_ORDER, 0, -1):
        result = eye + (x @ result) / k
    for _ in range(squarings):
        result = result @ result
    return result


def propagator(h_eff: Operator, dt: float, scheme: str = "exp") -> np.ndarray:
    """One-step no-jump propagator: ``exp(-i h dt)`` or the first-order ``1 - i h dt``."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if scheme == "exp":
        return expm(-1j * dt * h_eff.matrix)
    if scheme == "euler":
        return np.eye(h_eff.dim, dtype=np.complex128) - 1j * dt * h_eff.matrix
    raise ConfigurationError(f"unknown scheme {scheme!r}")


def evolve_nonhermitian(h_eff: Operator, psi: StateVector, dt: float, scheme: str = "exp") -> StateVector:
    """Unnormalized no-jump evolution of ``psi`` over ``dt``."""
    _check_dims(h_eff.dim, psi.dim)
    if not psi.normalized:
        raise ConfigurationError("no-jump evolution starts from a normalized state")
    u = propagator(h_eff, dt, scheme)
    return StateVector(u @ psi.amps, normalized=False, labels=psi.labels)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def lindblad_rhs(gen: LindbladGenerator, rho: np.ndarray) -> np.ndarray:
    """``dρ/dt`` on a raw array (no validation)."""
    out = -1j * commutator(gen.h_coherent.matrix, rho)
    for j in gen.jumps:
        jm = j.matrix
        jdj = jm.conj().T @ jm
        out += jm @ rho @ jm.conj().T - 0.5 * (jdj @ rho + rho @ jdj)
    return out


def superoperator_apply(gen: LindbladGenerator, rho: DensityMatrix) -> DensityMatrix:
    _check_dims(gen.dim, rho.dim)
    return DensityMatrix(lindblad_rhs(gen, rho.matrix), normalized=False)


def left_right(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of ``ρ -> a ρ b`` acting on row-major ``ρ.reshape(-1)``."""
    return np.kron(a, b.T)


def liouvillian(gen: LindbladGenerator) -> np.ndarray:
    """Vectorized generator (row-major convention), shape ``(dim², dim²)``."""
    d = gen.dim
    eye = np.eye(d, dtype=np.complex128)
    h = gen.h_coherent.matrix
    out = -1j * (left_right(h, eye) - left_right(eye, h))
    for j in gen.jumps:
        jm = j.matrix
        jdj = jm.conj().T @ jm
        out += left_right(jm, jm.conj().T) - 0.5 * (left_right(jdj, eye) + left_right(eye, jdj))
    return out
