"""Exception types raised across the package."""


class DSEError(Exception):
    """Base class for all package errors."""


class CaseError(DSEError):
    """Malformed or inconsistent case / partition data."""


class ObservabilityError(DSEError):
    """The measurement set does not determine the state."""


class NonConvergentSplitError(DSEError):
    """Splitting iteration matrix has spectral radius >= 1."""


class DivergenceError(DSEError):
    """An iterative solver blew up or produced non-finite values."""


class OscillationError(DSEError):
    """Objective kept increasing for too many consecutive iterations."""


class InfeasiblePartitionError(DSEError):
    """No assignment satisfies the area-size constraints."""
