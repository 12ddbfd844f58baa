"""Exception hierarchy and warning categories.

Two error families map onto the CLI exit-code contract: InputError for
anything wrong with user-supplied data or flags (exit 2), NumericalError
for failures of the numerics themselves (exit 3).
"""


class LumiphonError(Exception):
    pass


class InputError(LumiphonError):
    """Invalid input data, document, or configuration."""


class NumericalError(LumiphonError):
    """A numerical contract could not be met."""


class DimensionMismatch(InputError):
    pass


class SpeciesMismatch(InputError):
    pass


class HashMismatch(InputError):
    """A checksum no longer matches the data it was bound to."""


class NonFiniteValue(InputError):
    pass


class ParseError(InputError):
    """Malformed document; carries a locus (line/column or JSON pointer)."""

    def __init__(self, message, locus=None):
        self.locus = locus
        super().__init__(f"{message} [at {locus}]" if locus else message)


class UnknownSpecies(InputError):
    pass


class DuplicateEntry(InputError):
    pass


class MissingChemicalPotential(InputError):
    pass


class EqualCharges(InputError):
    pass


class EmptyGroup(InputError):
    pass


class InvalidDielectric(InputError):
    pass


class NegativeFrequency(InputError):
    pass


class TooManyModes(InputError):
    pass


class NonPositiveGamma(InputError):
    pass


class GridTooNarrow(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class IoFailure(InputError):
    pass


class NonConvergence(NumericalError):
    pass


class ImaginaryModePresent(NumericalError):
    pass


class AliasedGrid(NumericalError):
    """Time grid cannot represent the requested spectral content."""


class ZeroFrequencyModeWarning(UserWarning):
    """A near-zero mode was excluded from a force-route projection."""


class CapTooSmallWarning(UserWarning):
    """Enumeration cap leaves more than 1e-6 of the total weight in the tail."""


class FermiRangeWarning(UserWarning):
    """Fermi level outside [0, gap]; evaluation proceeds."""
