"""rabitrack: monitor a qubit's Rabi oscillation through weak measurements.

A simulated two-level system is rotated and weakly measured step by step;
an integral-free Bayesian estimator (with a quadrature oracle as an
independent cross-check) reconstructs the oscillating excitation
probability from the outcome record alone.
"""

__version__ = "0.1.0"

from .analysis import (
    FitResult,
    WindowSummary,
    analyze,
    fit_sinusoid,
    wrap_phase,
)
from .estimator import (
    BWeights,
    CoefficientTable,
    MeasurementRecord,
    Observable,
    b_weight,
    estimate_from_table,
    estimate_oracle,
    estimate_single,
    kraus_product,
    table_update,
)
from .exceptions import (
    ConfigError,
    DegenerateOperator,
    DegenerateRecord,
    InsufficientData,
    InvalidBounds,
    NoDecoherence,
    OracleMismatch,
    PrecisionExhausted,
    RabitrackError,
    ZeroProbabilityOutcome,
)
from .qcore import (
    KrausOperator,
    MeasurementModel,
    Outcome,
    QubitState,
    RotationAngle,
    apply_measurement,
    evolve,
    kraus_of,
    make_unitary,
    outcome_probability,
)
from .trajectory import (
    RegimeReport,
    RunConfig,
    TrajectoryPoint,
    classify_mode,
    coherence_decay_factor,
    decoherence_time,
    run_simulation,
    tune_parameters,
)

__all__ = [name for name in dir() if not name.startswith("_")]
