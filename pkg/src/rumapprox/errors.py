"""Exception types shared across the package.

DataError covers malformed inputs (bad CSV cells, rows that do not
normalize, unknown alternatives); NumericError covers solver and
floating-point failures that should never be silently converted into a
categorical answer.
"""


class DataError(ValueError):
    """Input data violates a documented contract."""


class NumericError(RuntimeError):
    """A numerical routine failed; the result would not be trustworthy."""
