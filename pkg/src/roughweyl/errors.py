"""Exception types raised across the package."""


class PreconditionError(ValueError):
    """An input violates an operation's stated precondition."""


class DomainError(ValueError):
    """A point or support lies outside the admissible box."""


class NumericalError(ArithmeticError):
    """A numerical procedure broke down (non-finite values, singular factor)."""


class FramingError(RuntimeError):
    """Pointwise framing V- <= V <= V+ failed at some node."""


class CoverageError(RuntimeError):
    """A cover or partition of unity failed to reach every target node."""


class ResourceError(RuntimeError):
    """A computation would exceed its memory or node budget."""


class FitError(ValueError):
    """Too few usable points for a log-log fit."""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""
