"""Exception types shared across the package."""


class HamlearnError(Exception):
    """Base class for all errors raised by hamlearn."""


class DimensionError(HamlearnError, ValueError):
    """Operands act on different numbers of qubits or have mismatched shapes."""


class CapacityError(HamlearnError):
    """A dense or combinatorial object would exceed the configured size limit."""


class ParseError(HamlearnError, ValueError):
    """A plan, dataset or model document is malformed.

    ``location`` names the offending field, e.g. ``steps[0].terms[2].coeff``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
