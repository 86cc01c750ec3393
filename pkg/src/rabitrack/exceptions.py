"""Exception hierarchy shared by all rabitrack modules."""


class RabitrackError(Exception):
    """Base class for all rabitrack-specific errors."""


class ConfigError(RabitrackError):
    """A run configuration violates an invariant (CLI exit code 2)."""


class ZeroProbabilityOutcome(RabitrackError):
    """An outcome with probability below the floor was forced on a state."""


class DegenerateOperator(RabitrackError):
    """A Kraus operator with tr[M^dag M] at or below the floor."""


class DegenerateRecord(RabitrackError):
    """A measurement record whose normalization integral vanishes."""


class PrecisionExhausted(RabitrackError):
    """The coefficient recursion ran out of significand bits.

    Raised when the cancellation inside the weighted coefficient sums
    approaches the configured precision budget; the caller must rerun
    with more precision bits.
    """


class OracleMismatch(RabitrackError):
    """Recursion and quadrature estimates disagree beyond tolerance.

    This never fires in a correct build; it signals an implementation bug.
    """


class NoDecoherence(RabitrackError):
    """Measurement with dp = 0 never decoheres; the decay time is infinite."""


class InvalidBounds(RabitrackError):
    """Oscillation-period bounds are empty or inverted."""


class InsufficientData(RabitrackError):
    """An analysis window holds too few trajectory points to fit."""
