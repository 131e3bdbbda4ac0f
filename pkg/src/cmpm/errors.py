"""Exception types raised by the simulator."""


class CMPMError(Exception):
    """Base class for all simulator errors."""


class TruncationError(CMPMError):
    """The Fock truncation is too small to represent a state."""


class NonHermitianError(CMPMError):
    """A Hamiltonian coefficient table or symbol is not Hermitian."""


class NormDriftError(CMPMError):
    """Fixed-step propagation lost unitarity beyond tolerance."""


class ConvergenceError(CMPMError):
    """An iterative refinement (quadrature, integrator) did not converge."""


class GridMismatchError(CMPMError):
    """Two records that must share a time grid do not."""
