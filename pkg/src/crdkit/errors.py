"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: parameter problems exit 1,
file-format and data-validation problems exit 2, numerical failures exit 3.
"""


class CrdError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CrdError):
    """An argument violates a documented precondition."""


class FormatError(CrdError):
    """A file does not conform to the FTB1 / CRD1 / manifest layout."""


class ChecksumError(FormatError):
    """Stored checksum does not match the file contents."""


class ValidationError(CrdError):
    """Data is structurally well formed but violates an invariant."""


class NumericalError(CrdError):
    """A linear-algebra routine failed to produce a usable result."""


class UndefinedMetricError(CrdError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""
