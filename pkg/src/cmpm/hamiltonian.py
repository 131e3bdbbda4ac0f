"""Polynomial oscillator Hamiltonians in normal-ordered form.

A Hamiltonian is ``hbar*omega a^dag a + sum A[m,n] (a^dag)^m a^n``.  The same
coefficient table gives the quantum matrix on a truncated space and the
classical symbol ``H_cls(alpha) = hbar*omega |alpha|^2 + sum A[m,n] conj(alpha)^m alpha^n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import NonHermitianError
from .fock import MIN_DIM, annihilation

MAX_ORDER = 4
HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class HamiltonianSpec:
    """Normal-ordered coefficient table plus the linear frequency."""

    hbar: float = 1.0
    omega: float = 0.0
    coeffs: Mapping[tuple[int, int], complex] = field(default_factory=dict)

    def __post_init__(self):
        if self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        table = {}
        for key, value in dict(self.coeffs).items():
            m, n = (int(k) for k in key)
            if m < 0 or n < 0 or m + n < 1:
                raise ValueError(f"invalid coefficient index {(m, n)}")
            if max(m, n) > MAX_ORDER:
                raise ValueError(
                    f"coefficient {(m, n)} exceeds the supported order {MAX_ORDER}"
                )
            if value != 0:
                table[(m, n)] = complex(value)
        for (m, n), value in table.items():
            partner = table.get((n, m), 0j)
            if abs(partner - np.conj(value)) > HERMITIAN_TOL * max(1.0, abs(value)):
                raise NonHermitianError(
                    f"A[{m},{n}]={value} but A[{n},{m}]={partner}; table must be Hermitian"
                )
        object.__setattr__(self, "coeffs", table)

    @property
    def number_diagonal(self) -> bool:
        """True when every stored term is of the form (a^dag)^m a^m."""
        return all(m == n for m, n in self.coeffs)

    def is_harmonic(self) -> bool:
        """True for a displaced harmonic oscillator (terms n, a, a^dag only).

        These are the Hamiltonians the semiclassical linearization reproduces exactly.
        """
        return set(self.coeffs) <= {(1, 1), (1, 0), (0, 1)}


def kerr_spec(hbar: float, omega: float, lam: float) -> HamiltonianSpec:
    """Quartic oscillator ``hbar*omega n + hbar^2*lam n^2``.

    ``n^2 = (a^dag)^2 a^2 + n``, so the table is ``{(1,1): hbar^2 lam, (2,2): hbar^2 lam}``.
    """
    k = hbar**2 * lam
    coeffs = {(1, 1): k, (2, 2): k} if lam != 0 else {}
    return HamiltonianSpec(hbar=hbar, omega=omega, coeffs=coeffs)


def kerr_classical_spec(hbar: float, omega: float, lam: float, ordering: str = "normal") -> HamiltonianSpec:
    """Spec whose classical symbol is the requested Kerr convention.

    ``"normal"`` substitutes after normal ordering, giving
    ``hbar^2 lam (|alpha|^4 + |alpha|^2)``; ``"naive"`` substitutes ``n -> |alpha|^2``
    directly, dropping the ``hbar^2 lam |alpha|^2`` frequency shift.  Only the
    ``"normal"`` spec represents the quantum operator.
    """
    if ordering == "normal":
        return kerr_spec(hbar, omega, lam)
    if ordering == "naive":
        coeffs = {(2, 2): hbar**2 * lam} if lam != 0 else {}
        return HamiltonianSpec(hbar=hbar, omega=omega, coeffs=coeffs)
    raise ValueError(f"unknown ordering {ordering!r}")


def matrix(spec: HamiltonianSpec, dim: int) -> np.ndarray:
    """Dense matrix of the Hamiltonian in the truncated Fock basis."""
    if dim < MIN_DIM:
        raise ValueError(f"dim must be >= {MIN_DIM}, got {dim}")
    a = annihilation(dim)
    ad = a.conj().T
    a_pow = [np.eye(dim, dtype=complex)]
    ad_pow = [np.eye(dim, dtype=complex)]
    for _ in range(MAX_ORDER):
        a_pow.append(a_pow[-1] @ a)
        ad_pow.append(ad_pow[-1] @ ad)
    h = spec.hbar * spec.omega * np.diag(np.arange(dim, dtype=float)).astype(complex)
    for (m, n), value in spec.coeffs.items():
        h += value * (ad_pow[m] @ a_pow[n])
    return h


def number_diagonal_energies(spec: HamiltonianSpec, dim: int) -> np.ndarray:
    """Eigenvalues ``E_n`` of a number-diagonal Hamiltonian, n = 0..dim-1."""
    if not spec.number_diagonal:
        raise ValueError("spec has off-diagonal terms")
    n = np.arange(dim, dtype=float)
    energies = spec.hbar * spec.omega * n
    for (m, _), value in spec.coeffs.items():
        # (a^dag)^m a^m |n> = n!/(n-m)! |n>
        falling = np.ones(dim)
        for j in range(m):
            falling *= n - j
        energies = energies + value.real * falling
    return energies


def _powers(z, top: int) -> list:
    out = [1.0, z]
    for _ in range(top - 1):
        out.append(out[-1] * z)
    return out


def _symbol_complex(spec: HamiltonianSpec, alpha):
    alpha = np.asarray(alpha, dtype=complex)
    ac = np.conj(alpha)
    top_m = max((m for m, _ in spec.coeffs), default=0)
    top_n = max((n for _, n in spec.coeffs), default=0)
    ap, cp = _powers(alpha, top_n), _powers(ac, top_m)
    value = spec.hbar * spec.omega * (ac * alpha)
    for (m, n), coeff in spec.coeffs.items():
        value = value + coeff * cp[m] * ap[n]
    return value


def classical_symbol(spec: HamiltonianSpec, alpha):
    """Classical energy ``H_cls(alpha)``; accepts scalars or arrays."""
    value = _symbol_complex(spec, alpha)
    residue = np.abs(value.imag)
    if np.any(residue >= 1e-9 * np.maximum(1.0, np.abs(value.real))):
        raise NonHermitianError(f"classical symbol has imaginary residue {np.max(residue):.3e}")
    real = value.real
    return float(real) if real.ndim == 0 else real


def classical_gradient(spec: HamiltonianSpec, alpha):
    """Wirtinger derivative ``dH_cls / d conj(alpha)``."""
    alpha = np.asarray(alpha, dtype=complex)
    ac = np.conj(alpha)
    top_m = max((m for m, _ in spec.coeffs), default=1)
    top_n = max((n for _, n in spec.coeffs), default=0)
    ap, cp = _powers(alpha, top_n), _powers(ac, top_m - 1)
    grad = spec.hbar * spec.omega * alpha
    for (m, n), coeff in spec.coeffs.items():
        if m:
            grad = grad + (m * coeff) * cp[m - 1] * ap[n]
    return complex(grad) if grad.ndim == 0 else grad
