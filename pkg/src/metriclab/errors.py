"""Exception types raised across metriclab."""


class MetricLabError(Exception):
    """Base class for all library errors."""


class ShapeMismatch(MetricLabError, ValueError):
    pass


class NotPositiveDefinite(MetricLabError, ValueError):
    pass


class NumericalUnderflow(MetricLabError, ArithmeticError):
    pass


class BadMagic(MetricLabError, ValueError):
    pass


class TruncatedFile(MetricLabError, ValueError):
    pass


class CountMismatch(MetricLabError, ValueError):
    pass


class ShapeHeaderMismatch(MetricLabError, ValueError):
    pass


class NonFiniteValue(MetricLabError, ValueError):
    pass


class IndexOutOfRange(MetricLabError, IndexError):
    pass


class InfeasibleBatch(MetricLabError, ValueError):
    """A batch cannot supply the requested positive/negative structure."""


class NonFiniteLoss(MetricLabError, ArithmeticError):
    """Training produced a NaN/Inf loss; ``trace`` holds the epochs completed so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class TooFewClasses(MetricLabError, ValueError):
    pass


class TooFewSamples(MetricLabError, ValueError):
    pass


class DegenerateInput(MetricLabError, ValueError):
    pass


class ConvergenceFailure(MetricLabError, RuntimeError):
    pass


class EmptySet(MetricLabError, ValueError):
    pass


class KTooLarge(MetricLabError, ValueError):
    pass


class ConfigError(MetricLabError, ValueError):
    pass


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass
