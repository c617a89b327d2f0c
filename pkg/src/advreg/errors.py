"""Exception hierarchy shared by the package."""


class AdvRegError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(AdvRegError, ValueError):
    pass


class DegenerateInputError(AdvRegError, ValueError):
    """Input has no usable spread (identical points, collinear pairs, ...)."""


class PointCloudIOError(AdvRegError):
    """Base class for point-cloud reading failures."""


class MissingFileError(PointCloudIOError, FileNotFoundError):
    pass


class MalformedHeaderError(PointCloudIOError, ValueError):
    pass


class UnsupportedFormatError(PointCloudIOError, ValueError):
    pass


class EmptyCloudError(PointCloudIOError, ValueError):
    pass


class NumericalAbort(AdvRegError, FloatingPointError):
    """Training produced a non-finite loss or gradient.

    ``trace`` carries the loss history recorded up to the failure.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
