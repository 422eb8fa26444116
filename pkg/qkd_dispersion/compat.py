import contextlib
import warnings

import numpy as np
from scipy.optimize import OptimizeWarning

from .exceptions import (
    QKDSimError,
    ConfigError,
    InputDataError,
    NumericalError,
    FitError,
    DomainError,
    SimulationCapacityError,
    InvalidMode,
)


@contextlib.contextmanager
def map_numerical_exceptions(diagnostics=None):
    """
    Re-raise numpy/scipy failures as the package's own numerical errors.
    """
    try:
        with warnings.catch_warnings():
            # curve_fit only warns when the covariance can't be estimated;
            # an unusable fit has to surface as an exception instead.
            warnings.simplefilter("error", OptimizeWarning)
            yield
    except QKDSimError:
        raise
    except Exception as exc:  # noqa: PIE-786
        mapped_exc = None

        for from_exc, to_exc in NUMERICAL_EXC_MAP.items():
            if not isinstance(exc, from_exc):
                continue
            # We want to map to the most specific exception we can find.
            # Eg a `FloatingPointError` is also an `ArithmeticError`, and should
            # become a `NumericalError` rather than a generic failure.
            if mapped_exc is None or issubclass(to_exc, mapped_exc):
                mapped_exc = to_exc

        if mapped_exc is None:  # pragma: no cover
            raise

        message = str(exc)
        if issubclass(mapped_exc, FitError):
            raise mapped_exc(message, diagnostics=diagnostics) from exc
        raise mapped_exc(message) from exc


NUMERICAL_EXC_MAP = {
    ArithmeticError: NumericalError,
    FloatingPointError: NumericalError,
    np.linalg.LinAlgError: NumericalError,
    RuntimeError: FitError,
    OptimizeWarning: FitError,
    ValueError: FitError,
}


EXIT_CODES = {
    QKDSimError: 1,
    ConfigError: 2,
    InvalidMode: 2,
    InputDataError: 3,
    DomainError: 3,
    SimulationCapacityError: 3,
    NumericalError: 4,
}


def exit_code_for(exc):
    """Most specific CLI exit code registered for `exc`'s class."""
    code = None
    matched = None
    for exc_class, exc_code in EXIT_CODES.items():
        if not isinstance(exc, exc_class):
            continue
        if matched is None or issubclass(exc_class, matched):
            matched = exc_class
            code = exc_code
    return 1 if code is None else code


def error_payload(exc):
    payload = {
        "error": type(exc).__name__,
        "message": str(exc),
        "exit_code": exit_code_for(exc),
    }
    for attr in ("key", "line", "diagnostics"):
        value = getattr(exc, attr, None)
        if value is not None:
            payload[attr] = value
    return payload
