"""Exception types shared across the package.

Every error carries a stable machine-readable ``code`` (the class name) so the
CLI and HTTP layers can report failures without string matching.
"""

from __future__ import annotations


class MapperscopeError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- file format errors ---------------------------------------------------

class BadMagic(MapperscopeError):
    pass


class BadHeader(MapperscopeError):
    """Header fields are structurally invalid (e.g. zero rows or columns)."""


class TruncatedPayload(MapperscopeError):
    """Payload byte count does not match the header (short or trailing data)."""


class NonFiniteValue(MapperscopeError):
    def __init__(self, row: int, col: int):
        super().__init__(f"non-finite value at row {row}, col {col}")
        self.row = row
        self.col = col


class IoFailure(MapperscopeError):
    pass


# --- metadata errors -------------------------------------------------------

class MalformedLine(MapperscopeError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateImageId(MapperscopeError):
    def __init__(self, image_id: str):
        super().__init__(f"duplicate image_id {image_id!r}")
        self.image_id = image_id


class UnsortedPredictions(MapperscopeError):
    def __init__(self, line_no: int):
        super().__init__(f"line {line_no}: predictions not sorted by descending confidence")
        self.line_no = line_no


class LengthMismatch(MapperscopeError):
    """Feature matrix row count and metadata record count disagree."""


# --- parameter / math errors ----------------------------------------------

class BadParams(MapperscopeError):
    pass


class DimensionMismatch(MapperscopeError):
    pass


class DegenerateData(MapperscopeError):
    """All rows identical; no principal directions exist."""


class BadK(MapperscopeError):
    pass
