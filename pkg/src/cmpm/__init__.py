"""Simulation of continuous simultaneous position-momentum measurement of an oscillator."""

from .classical import ClassicalBand, ClassicalTrajectory, ensemble_band, integrate_classical
from .errors import (
    CMPMError,
    ConvergenceError,
    GridMismatchError,
    NonHermitianError,
    NormDriftError,
    TruncationError,
)
from .evolution import Propagator, evolve, evolve_with_records
from .fock import (
    StateVector,
    apply_number_diagonal_phase,
    coherent_state,
    expect_a,
    fidelity_with_coherent,
    fock_state,
)
from .hamiltonian import (
    HamiltonianSpec,
    classical_gradient,
    classical_symbol,
    kerr_classical_spec,
    kerr_spec,
    matrix,
)
from .measurement import (
    EnsembleResult,
    MeasurementScheme,
    QuantumTrajectory,
    coverage_fraction,
    run_ensemble,
    run_protocol,
)
from .semiclassical import (
    CorrectionReport,
    SemiclassicalFrame,
    build_hsc,
    delta_operator,
    first_order_correction_norm,
    propagate_usc,
)

__version__ = "0.1.0"
