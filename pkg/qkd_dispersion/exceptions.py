class QKDSimError(Exception):
    """
    Base class for every error raised by `qkd_dispersion`.
    """


class DomainError(QKDSimError, ValueError):
    """
    An argument lies outside the domain of a physical formula.
    """


class InvalidMode(QKDSimError, ValueError):
    """
    No sweep adapter is mounted for the requested mode.
    """


class ConfigError(QKDSimError):
    """
    The scenario document is unreadable, ill-typed or holds unknown keys.
    """

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class InputDataError(QKDSimError):
    """
    A time-tag source could not be used.
    """


class TagParseError(InputDataError):
    """
    Malformed record in a time-tag file.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsortedStreamError(InputDataError):
    """
    Time tags are not in ascending timestamp order.
    """


class SimulationCapacityError(QKDSimError):
    """
    A run would generate more events than the configured capacity.
    """


class NumericalError(QKDSimError):
    """
    A fit or optimizer did not produce a usable result.
    """


class FitError(NumericalError):
    """
    Gaussian fit failed; `diagnostics` carries the initial guesses and cause.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class UndefinedQBERError(NumericalError):
    """
    QBER requested for a tally without same-basis coincidences.
    """


class NoKeyError(NumericalError):
    """
    A key-rate curve never rises above the requested floor.
    """
