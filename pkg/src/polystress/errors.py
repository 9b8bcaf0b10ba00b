"""Exception hierarchy.

The command-line front end maps these onto exit codes: configuration and
parse problems exit with 2, numeric-domain problems with 3.
"""


class PolystressError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PolystressError, ValueError):
    """Invalid or inconsistent configuration."""


class ExprSyntaxError(ConfigError):
    """Expression text that does not parse.  ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class NumericDomainError(PolystressError, ArithmeticError):
    """A computation left the domain where it is defined."""


class DomainError(NumericDomainError):
    """Elementary function or division evaluated outside its real domain."""


class ChartError(NumericDomainError):
    """A point or map image left the coordinate chart."""

    def __init__(self, message: str, point=None):
        self.point = point
        super().__init__(message if point is None else f"{message} (at {point})")


class SingularMetricError(NumericDomainError):
    """A metric or Jacobian is singular or not positive-definite."""


class JetOrderError(PolystressError, ValueError):
    """Not enough Taylor order left for the requested derivative."""
