"""Exception hierarchy.

Errors fall into two families that map onto CLI exit codes: ``DataError``
(bad input, exit 3) and ``NumericalError`` (a computation failed to reach
its tolerance, exit 4).
"""


class CloudIndexError(Exception):
    exit_code = 1


class DataError(CloudIndexError, ValueError):
    exit_code = 3


class NumericalError(CloudIndexError, ArithmeticError):
    exit_code = 4


# grammage
class IoError(DataError, OSError):
    """An input file could not be read or an output file written."""


class NonPositivePixel(DataError):
    pass


class ZeroVariance(DataError):
    pass


class EmptyInput(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class UnsupportedImage(DataError):
    pass


# spectral / index
class InvalidField(DataError):
    pass


class EmptySector(DataError):
    pass


class OverlappingSectors(DataError):
    pass


class BandOutOfRange(DataError):
    pass


class InsufficientBins(DataError):
    pass


# model
class InvalidParams(DataError):
    pass


class UnitMismatch(DataError):
    pass


class NonPositiveSpectrum(DataError):
    pass


class GridTooCoarse(DataError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class QuadratureFailure(NumericalError):
    pass


# synth
class DegenerateField(DataError):
    pass


class KernelTooSmall(DataError):
    pass


# pyramid
class SigmaUnresolvable(DataError):
    pass


class SupportNotCovered(DataError):
    pass
