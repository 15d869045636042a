"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, schedules, graphs or experiment configs."""


class ProtocolError(RuntimeError):
    """A protocol step was asked to combine incompatible objects (e.g. keys)."""


class EncodingError(OverflowError):
    """A real value does not fit the fixed-point headroom of a codec."""


class ConvergencePreconditionError(ConfigurationError):
    """The interaction graph cannot support convergence (e.g. disconnected)."""


class NumericalError(ArithmeticError):
    """An iterate or gradient became non-finite."""
