"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration value or inconsistent field combination."""


class FormatError(ValueError):
    """Malformed file content (dataset, metrics log, checkpoint)."""


class ShapeError(ValueError):
    """Array dimensions do not match the declared architecture."""


class HiddenLabelError(RuntimeError):
    """Training code tried to read labels of an unlabeled client."""


class MissingPrototypeError(RuntimeError):
    """A global class prototype required by a loss is not available."""


class NumericDivergenceError(RuntimeError):
    """Local training produced a non-finite loss or gradient."""
