"""Exception hierarchy shared by every stage of the pipeline."""


class FractalisError(Exception):
    """Base class for all package errors."""


class DataError(FractalisError, ValueError):
    """Input values are unusable (non-finite, empty, ...)."""


class ShapeError(FractalisError, ValueError):
    """Lengths, grids or q-grids do not line up."""


class KindError(FractalisError, ValueError):
    """A quantity series of the wrong kind was passed."""


class TickFormatError(FractalisError, ValueError):
    """Too many malformed lines in a tick file."""


class SpecError(FractalisError, ValueError):
    """Invalid surrogate specification."""


class ConfigError(FractalisError, ValueError):
    """Invalid run or analysis configuration."""


class BatchError(FractalisError, RuntimeError):
    """Every instrument of a batch failed."""
