"""Unitary evolution of pure states under a time-independent Hamiltonian."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import NormDriftError
from .fock import StateVector, expect_a
from .hamiltonian import HamiltonianSpec, matrix, number_diagonal_energies

NORM_TOL = 1e-9
# per-interval budgets used to size the RK4 step
_DRIFT_BUDGET = 1e-10
_PHASE_BUDGET = 1e-10


def rk4_step_count(radius: float, duration: float) -> int:
    """Number of RK4 steps keeping norm drift and phase error under budget.

    ``radius`` is the spectral radius of H/hbar.  Per step the RK4 amplification
    of an eigenmode is ``1 - z^6/72 + O(z^8)`` and its phase error ``~ z^5/120``,
    with ``z = radius * h``.
    """
    rt = radius * duration
    if rt == 0:
        return 1 if duration > 0 else 0
    z_drift = (72 * _DRIFT_BUDGET / rt) ** 0.2
    z_phase = (120 * _PHASE_BUDGET / rt) ** 0.25
    z = min(z_drift, z_phase, 0.2)
    return max(1, math.ceil(rt / z))


def rk4_propagator(h: np.ndarray, hbar: float, dt: float) -> np.ndarray:
    """One classical RK4 step for ``d psi/dt = -i H psi / hbar`` as a matrix."""
    x = (-1j * dt / hbar) * h
    eye = np.eye(h.shape[0], dtype=complex)
    x2 = x @ x
    return eye + x + x2 / 2 + (x2 @ x) / 6 + (x2 @ x2) / 24


def rk4_evolve(h: np.ndarray, hbar: float, psi: np.ndarray, duration: float, steps: int) -> np.ndarray:
    step = rk4_propagator(h, hbar, duration / steps)
    out = psi
    for _ in range(steps):
        out = step @ out
    return out


@dataclass(frozen=True)
class Propagator:
    """Exact propagator for a fixed spec on a truncated space.

    ``mode="diagonal"`` uses exact eigenphases and is only valid for
    number-diagonal specs; ``mode="dense"`` integrates with fixed-step RK4.
    """

    spec: HamiltonianSpec
    dim: int
    mode: str = "auto"
    _energies: np.ndarray | None = field(default=None, init=False, repr=False)
    _matrix: np.ndarray | None = field(default=None, init=False, repr=False)
    _radius: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        mode = self.mode
        if mode == "auto":
            mode = "diagonal" if self.spec.number_diagonal else "dense"
        if mode == "diagonal":
            if not self.spec.number_diagonal:
                raise ValueError("diagonal mode requires a number-diagonal spec")
            object.__setattr__(self, "_energies", number_diagonal_energies(self.spec, self.dim))
        elif mode == "dense":
            h = matrix(self.spec, self.dim)
            object.__setattr__(self, "_matrix", h)
            radius = float(np.max(np.abs(np.linalg.eigvalsh(h)))) / self.spec.hbar
            object.__setattr__(self, "_radius", radius)
        else:
            raise ValueError(f"unknown propagator mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)

    @property
    def energies(self) -> np.ndarray:
        if self._energies is None:
            raise AttributeError("dense propagator has no cached eigenphases")
        return self._energies

    @property
    def hamiltonian(self) -> np.ndarray:
        return self._matrix if self._matrix is not None else np.diag(self._energies).astype(complex)


class RecordedSegment(NamedTuple):
    times: np.ndarray
    centroids: np.ndarray
    final_state: StateVector


def _check_dim(prop: Propagator, state: StateVector) -> None:
    if state.dim != prop.dim:
        raise ValueError(f"state dim {state.dim} does not match propagator dim {prop.dim}")


def evolve(prop: Propagator, state: StateVector, t: float) -> StateVector:
    """Apply ``exp(-i H t / hbar)`` to ``state``."""
    _check_dim(prop, state)
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    if t == 0:
        return state
    psi = state.amplitudes
    if prop.mode == "diagonal":
        return StateVector(psi * np.exp(-1j * prop.energies * (t / prop.spec.hbar)))

    norm0 = np.linalg.norm(psi)
    steps = rk4_step_count(prop._radius, t)
    for attempt in range(2):
        out = rk4_evolve(prop._matrix, prop.spec.hbar, psi, t, steps)
        drift = abs(np.linalg.norm(out) - norm0)
        if drift < NORM_TOL:
            return StateVector(out)
        steps *= 2
    raise NormDriftError(f"norm drift {drift:.3e} after {steps // 2} RK4 steps over t={t}")


def evolve_with_records(prop: Propagator, state: StateVector, tgrid) -> RecordedSegment:
    """Evolve through increasing durations ``tgrid`` recording ``<a>`` at each.

    The returned final state is the state at ``tgrid[-1]`` (or ``state`` itself
    for an empty grid).
    """
    _check_dim(prop, state)
    times = np.asarray(tgrid, dtype=float).ravel()
    if times.size == 0:
        return RecordedSegment(times, np.zeros(0, dtype=complex), state)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("tgrid must be non-negative and non-decreasing")

    if prop.mode == "diagonal":
        c = state.amplitudes
        weights = np.conj(c[:-1]) * c[1:] * np.sqrt(np.arange(1, prop.dim))
        gaps = np.diff(prop.energies) / prop.spec.hbar
        centroids = np.exp(-1j * np.outer(times, gaps)) @ weights
        return RecordedSegment(times, centroids, evolve(prop, state, times[-1]))

    centroids = np.empty(times.size, dtype=complex)
    current, elapsed = state, 0.0
    for i, t in enumerate(times):
        current = evolve(prop, current, t - elapsed)
        elapsed = t
        centroids[i] = expect_a(current)
    return RecordedSegment(times, centroids, current)


def energy_expectation(prop: Propagator, state: StateVector) -> float:
    psi = state.amplitudes
    if prop.mode == "diagonal":
        return float(np.sum(np.abs(psi) ** 2 * prop.energies))
    return float(np.vdot(psi, prop._matrix @ psi).real)
