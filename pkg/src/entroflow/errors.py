"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical/simulation failures with 3, failed verification checks with 4.
"""


class EntroflowError(Exception):
    """Base class for all library errors."""


class ConfigError(EntroflowError):
    """Invalid configuration: unknown name, bad parameter, malformed file."""


class NumericError(EntroflowError):
    """A numerical operation produced an unusable result."""


class SolverError(NumericError):
    """The PDE solver detected instability or a violated precondition."""


class SimulationError(NumericError):
    """A particle simulation produced a non-finite state or weight."""


class GridMismatchError(EntroflowError):
    """Two grid-indexed objects do not share the same grid."""


class CoverageError(EntroflowError):
    """A requested time lies outside the stored/covered range."""


class UnsupportedMeasureError(EntroflowError):
    """Operation requires a normalizable reference measure."""
