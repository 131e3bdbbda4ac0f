"""Truncated Fock-space pure states.

A :class:`StateVector` stores amplitudes ``c_0 .. c_{D-1}`` in the number
basis.  Quadratures follow ``x = Re <a>`` and ``p = Im <a>``, so the position
operator is ``(a + a^dag) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .errors import TruncationError

MIN_DIM = 16
TAIL_LEVELS = 8
TAIL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StateVector:
    """Immutable pure state in a truncated Fock basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def tail_mass(self, levels: int = TAIL_LEVELS) -> float:
        """Probability weight in the top ``levels`` Fock levels."""
        tail = self.amplitudes[-levels:]
        return float(np.vdot(tail, tail).real)

    def check_representable(self, tol: float = TAIL_TOL) -> None:
        mass = self.tail_mass()
        if not mass < tol:
            raise TruncationError(
                f"tail mass {mass:.3e} in the top {TAIL_LEVELS} levels of dim {self.dim} "
                f"exceeds {tol:g}"
            )

    def distance(self, other: "StateVector") -> float:
        """Euclidean distance between amplitude vectors (phase sensitive)."""
        return float(np.linalg.norm(self.amplitudes - other.amplitudes))


def fock_state(n: int, dim: int) -> StateVector:
    amps = np.zeros(dim, dtype=complex)
    amps[n] = 1.0
    return StateVector(amps)


def coherent_tail_mass(alpha: complex, dim: int) -> float:
    """Poisson weight of a coherent state on levels ``n >= dim - 8``."""
    return float(poisson.sf(dim - TAIL_LEVELS - 1, abs(alpha) ** 2))


def check_coherent_representable(alpha: complex, dim: int) -> None:
    if dim < MIN_DIM:
        raise TruncationError(f"dim={dim} is below the minimum {MIN_DIM}")
    if not np.isfinite(alpha):
        raise TruncationError(f"non-finite coherent amplitude {alpha!r}")
    tail = coherent_tail_mass(alpha, dim)
    if not tail < TAIL_TOL:
        raise TruncationError(
            f"coherent state alpha={complex(alpha):.6g} has tail mass {tail:.3e} beyond "
            f"level {dim - TAIL_LEVELS}; increase dim"
        )


def coherent_state(alpha: complex, dim: int) -> StateVector:
    """Coherent state ``|alpha>`` built by the recurrence c_{n+1} = c_n alpha / sqrt(n+1)."""
    check_coherent_representable(alpha, dim)
    alpha = complex(alpha)
    ratios = np.empty(dim, dtype=complex)
    ratios[0] = np.exp(-0.5 * abs(alpha) ** 2)
    ratios[1:] = alpha / np.sqrt(np.arange(1, dim))
    amps = np.cumprod(ratios)
    amps /= np.linalg.norm(amps)
    return StateVector(amps)


def expect_a(state: StateVector) -> complex:
    """Expectation value of the annihilation operator."""
    c = state.amplitudes
    return complex(np.sum(np.conj(c[:-1]) * c[1:] * np.sqrt(np.arange(1, state.dim))))


def fidelity_with_coherent(state: StateVector, alpha: complex) -> float:
    """Overlap probability ``|<alpha|psi>|^2``."""
    ref = coherent_state(alpha, state.dim)
    return float(min(1.0, abs(np.vdot(ref.amplitudes, state.amplitudes)) ** 2))


def overlap_fidelity(a: StateVector, b: StateVector) -> float:
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))


def apply_number_diagonal_phase(state: StateVector, phases) -> StateVector:
    """Return ``c_n exp(-i phi_n)``."""
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (state.dim,):
        raise ValueError(f"expected {state.dim} phases, got shape {phases.shape}")
    return StateVector(state.amplitudes * np.exp(-1j * phases))


def annihilation(dim: int) -> np.ndarray:
    """Truncated annihilation operator as a dense matrix."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
