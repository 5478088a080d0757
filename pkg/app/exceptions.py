"""
Error hierarchy.

Every error carries the exit code used by the command line and the HTTP
status used by the API, so both front ends map failures the same way.
"""
from typing import Iterable


class SpinBathError(Exception):
    """Base class for all errors raised by the toolkit."""

    exit_code = 2
    status_code = 400


class ConfigError(SpinBathError):
    """Run configuration does not validate; ``pointer`` locates the field."""

    status_code = 422

    def __init__(self, message: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}" if pointer else message)


class DispatchError(SpinBathError):
    """Model and method cannot be combined."""


class InvalidCouplingError(SpinBathError):
    pass


class UnsupportedModelError(SpinBathError):
    pass


class InvalidFormError(SpinBathError):
    pass


class SizeLimitError(SpinBathError):
    pass


class InvalidSitesError(SpinBathError):
    pass


class InvalidStateError(SpinBathError):
    pass


class UnsupportedLayoutError(SpinBathError):
    pass


class InvalidScheduleError(SpinBathError):
    pass


class UnsupportedEstimateError(SpinBathError):
    pass


class UnknownRecipeError(SpinBathError):
    status_code = 404

    def __init__(self, name: str, available: Iterable[str]):
        self.available = sorted(available)
        super().__init__(f"unknown recipe {name!r}; available: {', '.join(self.available)}")


class NumericalFailureError(SpinBathError):
    exit_code = 3
    status_code = 500


class InsufficientDataError(SpinBathError):
    exit_code = 3
    status_code = 422


class DegenerateEstimateError(SpinBathError):
    exit_code = 3
    status_code = 422
