"""Exception hierarchy shared by every module of the package."""


class Fp8DcimError(Exception):
    """Base class; the CLI turns these into a one-line diagnostic."""

    code = 1


class NonFiniteError(Fp8DcimError, ValueError):
    """An Inf/NaN encoding or value reached a path that only handles finite data."""

    code = 3


class ConfigError(Fp8DcimError, ValueError):
    """Invalid bitwidth, group size, scaling factor or similar parameter."""

    code = 4


class F8TFormatError(Fp8DcimError):
    code = 10


class BadMagicError(F8TFormatError):
    code = 11


class TruncatedError(F8TFormatError):
    code = 12


class EmptyTensorError(F8TFormatError):
    code = 13


class ShapeMismatchError(Fp8DcimError, ValueError):
    code = 5
