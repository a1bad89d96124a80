"""Exception types raised across the library."""
from __future__ import annotations


class AnonRecError(Exception):
    """Base class for every library-specific error."""


class DuplicateEntry(AnonRecError):
    """Two ratings were supplied for the same (user, item) pair."""

    def __init__(self, user: int, item: int):
        super().__init__(f"duplicate rating for user {user}, item {item}")
        self.user = user
        self.item = item


class IndexOutOfRange(AnonRecError):
    """A user, item, or anonymous identity lies outside the declared range."""


class RatingOutOfScale(AnonRecError):
    """A rating value falls outside the matrix's declared scale."""


class EmptyMatrix(AnonRecError):
    """The operation needs at least one user and one item."""


class InsufficientRatings(AnonRecError):
    """A user's row is too small to be split as requested."""


class InvalidK(AnonRecError):
    """The anonymity parameter k must satisfy 1 <= k <= number of users."""


class EmptyCluster(AnonRecError):
    """A prototype was requested for an empty group of rows."""


class UnknownUser(AnonRecError):
    """A user identity is not covered by the assignment map."""


class MissingAnonymizedMatrix(AnonRecError):
    """The model requires an anonymized matrix it was not given."""


class MissingAssignmentMap(AnonRecError):
    """Resolving a user to an anonymous identity requires the withheld map."""


class EmptyTestSet(AnonRecError):
    """An error metric was requested over zero prediction pairs."""


class NoComparableItems(AnonRecError):
    """No item has a defined mean on both sides of the comparison."""


class MalformedLine(AnonRecError):
    """An input line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_number: int, reason: str = ""):
        msg = f"malformed line {line_number}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.line_number = line_number


class FormatVersionMismatch(AnonRecError):
    """A serialized file declares an unsupported format version."""


class ChecksumMismatch(AnonRecError):
    """A serialized file's checksum does not match its contents."""
