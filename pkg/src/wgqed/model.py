"""Jump operators and Hamiltonians of one or two qubits side-coupled to a waveguide.

All operators live in the frame rotating at the drive frequency ``k``; only the
detunings and the two propagation phases survive.  The coupling to the
waveguide is fixed by the total decay rate through ``Γ = 4π g²``, and the
coherent input of amplitude ``α`` carries the flux ``n̄ = |α|²/2π``.

The jump operators are the output fields themselves (times ``i``), so the
right-going operator superposes qubit emission and the transmitted drive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DarkStateError, StepSizeError
from .hilbert import (
    LindbladGenerator,
    Operator,
    StateVector,
    expectation,
)

CHANNELS = ("R", "L")

# Beyond this per-step jump probability the one-jump-per-step logic is unreliable.
MAX_STEP_PROBABILITY = 0.1
DARK_NORM2 = 1e-24

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_Z = np.diag([-1.0, 1.0]).astype(np.complex128)
EYE2 = np.eye(2, dtype=np.complex128)


def coupling(gamma: float) -> float:
    """Qubit-waveguide coupling ``g`` for total decay rate ``gamma``."""
    return math.sqrt(gamma / (4 * math.pi))


def photon_flux(alpha: complex) -> float:
    return abs(alpha) ** 2 / (2 * math.pi)


def _finite(name: str, *values) -> None:
    for v in values:
        if not np.isfinite(v):
            raise ConfigurationError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class OneQubitParams:
    gamma: float = 1.0
    alpha: complex = 1.0
    delta: float = 0.0

    def __post_init__(self):
        _finite("parameters", self.gamma, self.alpha, self.delta)
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        object.__setattr__(self, "alpha", complex(self.alpha))

    @property
    def g(self) -> float:
        return coupling(self.gamma)

    @property
    def flux(self) -> float:
        return photon_flux(self.alpha)


@dataclass(frozen=True)
class TwoQubitParams:
    """Two qubits separated by a propagation delay, in the Markov approximation.

    ``phase_k`` is ``kΔt``; ``phase_eg1``/``phase_eg2`` are ``ω_eg Δt`` of each qubit.
    ``gamma2 = 0`` decouples the second qubit.
    """

    gamma1: float = 1.0
    gamma2: float = 1.0
    alpha: complex = 1.0
    delta1: float = 0.0
    delta2: float = 0.0
    phase_k: float = 0.0
    phase_eg1: float = 0.0
    phase_eg2: float = 0.0

    def __post_init__(self):
        _finite(
            "parameters",
            self.gamma1, self.gamma2, self.alpha, self.delta1, self.delta2,
            self.phase_k, self.phase_eg1, self.phase_eg2,
        )
        if not self.gamma1 > 0 or self.gamma2 < 0:
            raise ConfigurationError("need gamma1 > 0 and gamma2 >= 0")
        object.__setattr__(self, "alpha", complex(self.alpha))

    @classmethod
    def from_delay(
        cls,
        delay: float,
        k: float | None = None,
        *,
        phase_k: float | None = None,
        gamma1: float = 1.0,
        gamma2: float = 1.0,
        alpha: complex = 1.0,
        delta1: float = 0.0,
        delta2: float = 0.0,
    ) -> TwoQubitParams:
        """Build the phases from the delay: ``ω_eg,i Δt = kΔt + Δ_i Δt``."""
        if (k is None) == (phase_k is None):
            raise ConfigurationError("give exactly one of k or phase_k")
        pk = k * delay if phase_k is None else phase_k
        return cls(
            gamma1=gamma1, gamma2=gamma2, alpha=alpha, delta1=delta1, delta2=delta2,
            phase_k=pk, phase_eg1=pk + delta1 * delay, phase_eg2=pk + delta2 * delay,
        )

    @classmethod
    def identical(cls, phase: float, gamma: float = 1.0, alpha: complex = 1.0) -> TwoQubitParams:
        """Identical resonant qubits: equal rates, zero detuning, ``ω_eg Δt = kΔt``."""
        return cls(gamma1=gamma, gamma2=gamma, alpha=alpha, phase_k=phase, phase_eg1=phase, phase_eg2=phase)

    @property
    def flux(self) -> float:
        return photon_flux(self.alpha)


@dataclass(frozen=True)
class ModelOperators:
    dim: int
    j_right: Operator
    j_left: Operator
    h_coherent: Operator
    h_eff: Operator
    generator: LindbladGenerator
    flux: float
    gamma_max: float
    drive_max: float

    def jump(self, channel: str) -> Operator:
        if channel == "R":
            return self.j_right
        if channel == "L":
            return self.j_left
        raise ConfigurationError(f"unknown channel {channel!r}")

    def rate_operator(self, channel: str) -> Operator:
        j = self.jump(channel).matrix
        return Operator(j.conj().T @ j, hermitian=True)

    @property
    def ground_state(self) -> StateVector:
        amps = np.zeros(self.dim, dtype=np.complex128)
        amps[0] = 1.0
        return StateVector(amps)


def effective_hamiltonian(h_coherent: np.ndarray, jumps: list[np.ndarray]) -> np.ndarray:
    h = np.array(h_coherent, dtype=np.complex128)
    for j in jumps:
        h = h - 0.5j * (j.conj().T @ j)
    return h


def _assemble(h_coh: np.ndarray, jr: np.ndarray, jl: np.ndarray, flux: float,
              gamma_max: float, drive_max: float) -> ModelOperators:
    h_coherent = Operator(h_coh, hermitian=True)
    j_right, j_left = Operator(jr), Operator(jl)
    return ModelOperators(
        dim=h_coh.shape[0],
        j_right=j_right,
        j_left=j_left,
        h_coherent=h_coherent,
        h_eff=Operator(effective_hamiltonian(h_coh, [jr, jl])),
        generator=LindbladGenerator(h_coherent, (j_right, j_left)),
        flux=flux,
        gamma_max=gamma_max,
        drive_max=drive_max,
    )


def build_one_qubit(p: OneQubitParams) -> ModelOperators:
    g, a = p.g, p.alpha
    drive = 1j * a / math.sqrt(2 * math.pi)
    jr = math.sqrt(p.gamma / 2) * SIGMA_MINUS + drive * EYE2
    jl = math.sqrt(p.gamma / 2) * SIGMA_MINUS
    # Half the drive sits in H; the other half comes from the J_R cross terms.
    h = 0.5 * p.delta * SIGMA_Z + 0.5 * g * (a * SIGMA_PLUS + a.conjugate() * SIGMA_MINUS)
    return _assemble(h, jr, jl, p.flux, p.gamma, abs(g * a))


def undriven_one_qubit_generator(p: OneQubitParams) -> LindbladGenerator:
    """Same dynamics written with full drive ``gα`` in H and pure emission jumps."""
    g, a = p.g, p.alpha
    h = 0.5 * p.delta * SIGMA_Z + g * (a * SIGMA_PLUS + a.conjugate() * SIGMA_MINUS)
    j = Operator(math.sqrt(p.gamma / 2) * SIGMA_MINUS)
    return LindbladGenerator(Operator(h, hermitian=True), (j, j))


def two_qubit_ladders() -> tuple[np.ndarray, np.ndarray]:
    return np.kron(SIGMA_MINUS, EYE2), np.kron(EYE2, SIGMA_MINUS)


def build_two_qubit(p: TwoQubitParams, hamiltonian: str = "cascaded") -> ModelOperators:
    """Two-qubit operators.

    ``hamiltonian="cascaded"`` (default) uses the coherent part implied by the
    jump operators for a two-way cascaded network: the qubit-1 drive carries
    ``½ e^{iΔ₁Δt}`` and the exchange term is ``πg₁g₂(i e^{-iω₂Δt} σ₂⁺σ₁⁻ +
    i e^{-iω₁Δt} σ₁⁺σ₂⁻ + h.c.)``.  ``"symmetric-exchange"`` uses
    ``(1 - ½e^{iΔ₁Δt})`` for the qubit-1 drive and ``σ₂⁺σ₁⁻`` in both exchange
    terms; it is Hermitian and trace preserving but violates steady-state
    photon-flux conservation once ``ω_eg,1 Δt ≠ kΔt``.  The two coincide for identical resonant qubits at
    ``kΔt = π/2``.
    """
    if hamiltonian not in ("cascaded", "symmetric-exchange"):
        raise ConfigurationError(f"unknown two-qubit hamiltonian form {hamiltonian!r}")
    s1, s2 = two_qubit_ladders()
    z1, z2 = np.kron(SIGMA_Z, EYE2), np.kron(EYE2, SIGMA_Z)
    eye = np.eye(4, dtype=np.complex128)
    g1, g2 = coupling(p.gamma1), coupling(p.gamma2)
    a = p.alpha
    e_k, e_1, e_2 = (np.exp(1j * ph) for ph in (p.phase_k, p.phase_eg1, p.phase_eg2))

    jr = math.sqrt(p.gamma1 / 2) * e_1 * s1 + math.sqrt(p.gamma2 / 2) * s2 \
        + 1j * a / math.sqrt(2 * math.pi) * e_k * eye
    jl = math.sqrt(p.gamma1 / 2) * s1 + math.sqrt(p.gamma2 / 2) * e_2 * s2

    e_d1 = np.exp(1j * (p.phase_eg1 - p.phase_k))  # e^{iΔ₁Δt}
    drive1 = 0.5 * e_d1 if hamiltonian == "cascaded" else 1 - 0.5 * e_d1
    drive = drive1 * g1 * a.conjugate() * s1 + 0.5 * np.conj(e_k) * g2 * a.conjugate() * s2
    s21 = s2.conj().T @ s1  # σ₂⁺σ₁⁻
    partner = s1.conj().T @ s2 if hamiltonian == "cascaded" else s21
    exchange = math.pi * g1 * g2 * (1j * np.conj(e_2) * s21 + 1j * np.conj(e_1) * partner)
    h = 0.5 * p.delta1 * z1 + 0.5 * p.delta2 * z2 + drive + drive.conj().T + exchange + exchange.conj().T
    return _assemble(h, jr, jl, p.flux, max(p.gamma1, p.gamma2), max(abs(g1 * a), abs(g2 * a)))


def jump_rate(m: ModelOperators, psi: StateVector, channel: str) -> float:
    """Probability density ``<ψ|J†J|ψ>`` of a detection in ``channel``."""
    return max(expectation(m.rate_operator(channel), psi).real, 0.0)


def jump_probability(m: ModelOperators, psi: StateVector, channel: str, dt: float) -> float:
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    p = dt * jump_rate(m, psi, channel)
    if p > MAX_STEP_PROBABILITY:
        raise StepSizeError(f"jump probability {p:.3g} per step in channel {channel}; reduce dt")
    return min(p, 1.0)


def collapse(m: ModelOperators, psi: StateVector, channel: str) -> StateVector:
    out = m.jump(channel).matrix @ psi.amps
    norm2 = float(np.vdot(out, out).real)
    if norm2 < DARK_NORM2:
        raise DarkStateError(f"channel {channel} annihilates the state (|J psi|^2 = {norm2:.3g})")
    return StateVector(out / math.sqrt(norm2), labels=psi.labels)


def weak_drive_state(p: OneQubitParams) -> StateVector:
    """Fixed point of the one-qubit no-jump evolution, ``c_e/c_g = -i gα/(Γ/2 + iΔ)``."""
    ratio = -1j * p.g * p.alpha / (0.5 * p.gamma + 1j * p.delta)
    amps = np.array([1.0, ratio], dtype=np.complex128)
    return StateVector(amps / np.linalg.norm(amps))


def plus_minus_i_states() -> tuple[StateVector, StateVector]:
    """``|±i> = (|ge> ± i|eg>)/√2``."""
    r = 1 / math.sqrt(2)
    return (
        StateVector(np.array([0, r, 1j * r, 0], dtype=np.complex128)),
        StateVector(np.array([0, r, -1j * r, 0], dtype=np.complex128)),
    )
