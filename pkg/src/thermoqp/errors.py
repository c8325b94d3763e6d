"""Exception hierarchy shared by all thermoqp modules."""


class ThermoQpError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(ThermoQpError, ValueError):
    pass


class ParseError(ThermoQpError, ValueError):
    """Malformed problem/config file.

    ``field`` names the offending key when known, ``line`` the 1-based line
    number reported by the JSON decoder.
    """

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line


class SingularMatrix(ThermoQpError, ArithmeticError):
    pass


class NotConverged(ThermoQpError):
    """Iterative solver hit its iteration cap.

    Carries the best iterate seen so callers may still use it.
    """

    def __init__(self, message, x=None, residual=None, stats=None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.stats = stats


class StaleCache(ThermoQpError):
    pass


class Unstable(ThermoQpError, ArithmeticError):
    """Simulated circuit voltages diverged (input matrix not positive definite)."""


class NonPositiveEigenvalue(ThermoQpError, ValueError):
    pass


class DegenerateLabels(ThermoQpError, ValueError):
    pass


class InfeasibleTarget(ThermoQpError):
    pass


class FloatingNetwork(ThermoQpError, ValueError):
    pass


class ConfigError(ThermoQpError, ValueError):
    pass
