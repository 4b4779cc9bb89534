"""Exception hierarchy shared across the package.

The CLI maps each family onto its own exit code, so new errors should
subclass one of the four bases below rather than ``Exception`` directly.
"""


class TdbmError(Exception):
    """Base class for every error raised by this package."""


class UsageError(TdbmError):
    """The caller asked for something the API does not allow."""


class InputError(TdbmError):
    """Input data failed parsing or validation."""


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(InputError):
    pass


class LookupFailure(InputError, KeyError):
    """Unknown vehicle, or a vehicle that is not alive at the requested time."""

    def __str__(self):
        return Exception.__str__(self)


class DataError(InputError):
    """Physically inconsistent data, e.g. two vehicles at the same point."""


class MissingFeatureError(InputError):
    def __init__(self, name):
        self.feature = name
        super().__init__(f"required feature {name!r} is missing")


class NumericalError(TdbmError):
    """A numerical procedure could not produce a meaningful result."""


class DegenerateInputError(NumericalError):
    pass


class DegenerateSpreadError(DegenerateInputError):
    def __init__(self, feature, value):
        self.feature = feature
        super().__init__(
            f"feature {feature!r} has zero 5-95 percentile spread (both equal {value!r})"
        )


class FitError(NumericalError):
    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        super().__init__(message)
