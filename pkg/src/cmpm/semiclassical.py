"""Semiclassical (coherent-state) linearization of polynomial Hamiltonians.

``H_sc(alpha)`` keeps the classical energy at ``alpha`` and the first-order
variation in ``n - |alpha|^2``, ``a^dag - conj(alpha)`` and ``a - alpha``.  Along
the classical trajectory it generates ``U_sc``, which maps a coherent state to
the coherent state at the classical centroid.  ``delta = H - H_sc`` is the
residual whose interaction-picture integral is the first-order Dyson term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .classical import integrate_classical, _velocity
from .errors import ConvergenceError
from .evolution import Propagator, evolve
from .fock import StateVector, annihilation, fidelity_with_coherent, overlap_fidelity
from .hamiltonian import HamiltonianSpec, matrix

USC_TOL = 1e-8
QUAD_RTOL = 1e-3
QUAD_MIN_INTERVALS = 32
QUAD_MAX_DOUBLINGS = 4


def hsc_coefficients(spec: HamiltonianSpec, alpha: complex) -> tuple[float, complex, float]:
    """Return ``(slope, c_dag, const)`` with ``H_sc = slope n + c_dag a^dag + conj(c_dag) a + const``."""
    alpha = complex(alpha)
    ac = alpha.conjugate()
    r2 = (ac * alpha).real
    slope = spec.hbar * spec.omega
    c_dag = 0j
    energy = 0j
    for (m, n), coeff in spec.coeffs.items():
        energy += coeff * ac**m * alpha**n
        if m == n:
            slope += (m * coeff * r2 ** (m - 1)).real
        elif m:
            c_dag += m * coeff * ac ** (m - 1) * alpha**n
    # expand slope' (n - r2) + c_dag (a^dag - ac) + h.c. around the classical energy
    diag_slope = slope - spec.hbar * spec.omega
    const = energy.real - diag_slope * r2 - 2 * (c_dag * ac).real
    return slope, c_dag, const


def build_hsc(spec: HamiltonianSpec, alpha: complex, dim: int) -> np.ndarray:
    """Semiclassical Hamiltonian linearized about ``alpha`` on ``dim`` levels."""
    slope, c_dag, const = hsc_coefficients(spec, alpha)
    a = annihilation(dim)
    h = np.diag(slope * np.arange(dim) + const).astype(complex)
    h += c_dag * a.conj().T + np.conj(c_dag) * a
    return h


def delta_operator(spec: HamiltonianSpec, alpha: complex, dim: int) -> np.ndarray:
    return matrix(spec, dim) - build_hsc(spec, alpha, dim)


@dataclass(frozen=True)
class SemiclassicalFrame:
    """Classical trajectory from ``alpha0`` on ``[0, t_max]`` plus the truncation.

    ``alpha(t)`` is a cubic Hermite interpolant of an RK4 solution sampled
    finely enough that interpolation error is negligible next to ``USC_TOL``.
    """

    spec: HamiltonianSpec
    alpha0: complex
    dim: int
    t_max: float
    _nodes: np.ndarray = field(init=False, repr=False)
    _values: np.ndarray = field(init=False, repr=False)
    _slopes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        v0 = abs(complex(_velocity(self.spec, self.alpha0)))
        rate = v0 / max(abs(self.alpha0), 1.0) + abs(self.spec.omega)
        count = max(256, math.ceil(self.t_max * rate / 2e-3))
        nodes = np.linspace(0.0, self.t_max, count + 1)
        traj = integrate_classical(self.spec, self.alpha0, nodes)
        object.__setattr__(self, "_nodes", nodes)
        object.__setattr__(self, "_values", traj.alpha)
        object.__setattr__(self, "_slopes", _velocity(self.spec, traj.alpha))

    def alpha(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_max * (1 + 1e-12)):
            raise ValueError(f"time outside frame interval [0, {self.t_max}]")
        nodes = self._nodes
        k = np.clip(np.searchsorted(nodes, t, side="right") - 1, 0, nodes.size - 2)
        h = nodes[k + 1] - nodes[k]
        s = (t - nodes[k]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s**2 * (3 - 2 * s)
        h11 = s**2 * (s - 1)
        out = (h00 * self._values[k] + h10 * h * self._slopes[k]
               + h01 * self._values[k + 1] + h11 * h * self._slopes[k + 1])
        return complex(out) if out.ndim == 0 else out


def _sc_phases(frame: SemiclassicalFrame, t: float) -> np.ndarray:
    """Accumulated phases ``int_0^t E_n^sc dt' / hbar`` for number-diagonal specs."""
    x, w = np.polynomial.legendre.leggauss(24)
    ts = 0.5 * t * (x + 1)
    n = np.arange(frame.dim)
    total = np.zeros(frame.dim)
    for ti, wi in zip(ts, w):
        slope, _, const = hsc_coefficients(frame.spec, frame.alpha(ti))
        total += wi * (slope * n + const)
    return 0.5 * t * total / frame.spec.hbar


def _piecewise_usc(frame: SemiclassicalFrame, times: np.ndarray, pieces: int) -> list[np.ndarray]:
    """``U_sc`` at each of ``times`` with midpoint piecewise-constant exponentials."""
    dim, hbar = frame.dim, frame.spec.hbar
    u = np.eye(dim, dtype=complex)
    out, prev = [], 0.0
    for t in times:
        span = t - prev
        if span > 0:
            dt = span / pieces
            for j in range(pieces):
                mid = prev + (j + 0.5) * dt
                h = build_hsc(frame.spec, frame.alpha(mid), dim)
                u = expm((-1j * dt / hbar) * h) @ u
        out.append(u.copy())
        prev = t
    return out


def usc_operators(frame: SemiclassicalFrame, times) -> list[np.ndarray]:
    """``U_sc(t)`` as dense matrices for increasing ``times``."""
    times = np.asarray(times, dtype=float)
    if frame.spec.number_diagonal:
        return [np.diag(np.exp(-1j * _sc_phases(frame, t))) for t in times]
    pieces = 4
    current = _piecewise_usc(frame, times, pieces)
    for _ in range(12):
        pieces *= 2
        refined = _piecewise_usc(frame, times, pieces)
        if np.max(np.abs(refined[-1] - current[-1])) < USC_TOL:
            return refined
        current = refined
    raise ConvergenceError("semiclassical propagator did not converge under step halving")


def propagate_usc(frame: SemiclassicalFrame, state: StateVector, t: float) -> StateVector:
    """Apply the time-ordered semiclassical propagator over ``[0, t]``."""
    if state.dim != frame.dim:
        raise ValueError(f"state dim {state.dim} does not match frame dim {frame.dim}")
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return state
    if frame.spec.number_diagonal:
        return StateVector(state.amplitudes * np.exp(-1j * _sc_phases(frame, t)))
    pieces = 16
    psi = _apply_pieces(frame, state.amplitudes, t, pieces)
    for _ in range(14):
        pieces *= 2
        refined = _apply_pieces(frame, state.amplitudes, t, pieces)
        if np.linalg.norm(refined - psi) < USC_TOL:
            return StateVector(refined)
        psi = refined
    raise ConvergenceError("semiclassical propagation did not converge under step halving")


def _apply_pieces(frame: SemiclassicalFrame, psi: np.ndarray, t: float, pieces: int) -> np.ndarray:
    dt = t / pieces
    for j in range(pieces):
        h = build_hsc(frame.spec, frame.alpha((j + 0.5) * dt), frame.dim)
        w, v = np.linalg.eigh(h)
        psi = v @ (np.exp(-1j * w * dt / frame.spec.hbar) * (v.conj().T @ psi))
    return psi


@dataclass(frozen=True)
class CorrectionReport:
    tau: float
    first_order_norm: float
    fidelity_gap: float


def _simpson(values: list[np.ndarray], width: float) -> np.ndarray:
    n = len(values) - 1
    h = width / n
    total = values[0] + values[-1]
    total = total + 4 * sum(values[1:-1:2]) + 2 * sum(values[2:-1:2])
    return total * h / 3


def first_order_correction_norm(
    frame: SemiclassicalFrame,
    rho0: StateVector,
    tau: float,
    *,
    norm: str = "fro",
) -> CorrectionReport:
    """Size of ``(i/hbar) int_0^tau [rho0, U_sc^dag delta U_sc] dt`` and the exact/semiclassical gap.

    ``rho0`` is given by its state vector and must be the coherent state at the
    frame's starting point.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if tau > frame.t_max * (1 + 1e-12):
        raise ValueError("tau exceeds the frame interval")
    if fidelity_with_coherent(rho0, frame.alpha0) < 1 - 1e-9:
        raise ValueError("rho0 must be the coherent state at the frame's initial amplitude")
    if norm not in ("fro", "spectral"):
        raise ValueError(f"unknown norm {norm!r}")

    spec, dim = frame.spec, frame.dim
    h_full = matrix(spec, dim)

    def integral(intervals: int) -> np.ndarray:
        times = np.linspace(0.0, tau, intervals + 1)
        us = usc_operators(frame, times)
        vals = []
        for t, u in zip(times, us):
            delta = h_full - build_hsc(spec, frame.alpha(t), dim)
            vals.append(u.conj().T @ delta @ u)
        return _simpson(vals, tau)

    intervals = QUAD_MIN_INTERVALS
    g = integral(intervals)
    for _ in range(QUAD_MAX_DOUBLINGS):
        intervals *= 2
        g2 = integral(intervals)
        size = np.linalg.norm(g2)
        if np.linalg.norm(g2 - g) <= QUAD_RTOL * size or size < 1e-14:
            g = g2
            break
        g = g2
    else:
        raise ConvergenceError(f"Dyson quadrature not converged after {QUAD_MAX_DOUBLINGS} doublings")

    psi = rho0.amplitudes
    rho = np.outer(psi, psi.conj())
    term = (1j / spec.hbar) * (rho @ g - g @ rho)
    size = float(np.linalg.norm(term, "fro" if norm == "fro" else 2))

    exact = evolve(Propagator(spec, dim), rho0, tau)
    approx = propagate_usc(frame, rho0, tau)
    gap = max(0.0, 1.0 - overlap_fidelity(exact, approx))
    return CorrectionReport(tau, size, gap)
