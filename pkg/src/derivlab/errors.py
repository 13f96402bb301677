"""Exception hierarchy.

Every error carries a stable ``code`` (the class name) so CLI output and
experiment logs can report failures in a machine-readable way.
"""

from __future__ import annotations


class DerivLabError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- world / scenario ---------------------------------------------------------


class InvalidScenario(DerivLabError, ValueError):
    pass


class OutOfRange(DerivLabError, IndexError):
    pass


class UnknownHash(DerivLabError, KeyError):
    pass


class UnknownSigner(DerivLabError, KeyError):
    pass


class BloomIntegrityError(DerivLabError):
    """A header bloom is missing bits implied by its own receipts."""


# --- traversal / integrity ----------------------------------------------------


class ReorgDetected(DerivLabError):
    pass


class HeaderIntegrityError(DerivLabError):
    """Header fields (bloom, roots, ...) do not hash to the block hash."""


class DataIntegrityError(DerivLabError):
    """A served block body or receipt list does not match its header root."""


# --- DA / channels ------------------------------------------------------------


class MissingBlob(DerivLabError, KeyError):
    pass


class MalformedFrame(DerivLabError, ValueError):
    pass


# --- nonce discipline ---------------------------------------------------------


class NonceError(DerivLabError):
    """Any violation of batcher (sender, nonce) continuity."""


class SenderMismatchError(NonceError):
    pass


class NonceGapError(NonceError):
    """A batcher transaction with a higher-than-expected nonce: something was skipped."""


class NonceRebaseError(NonceGapError):
    """First observed nonce in a range lies beyond the agreed nonce."""


class NonceMismatchError(NonceError):
    """A lower-than-expected nonce: replay or reordering."""


class BoundaryMismatchError(NonceError):
    pass


# --- proof layer --------------------------------------------------------------


class ContinuityError(DerivLabError):
    def __init__(self, boundary: int, field: str, left, right):
        super().__init__(
            f"range boundary {boundary}: {field} mismatch ({left!r} != {right!r})"
        )
        self.boundary = boundary
        self.field = field


class AnchorMismatchError(DerivLabError):
    pass


# --- adversary ----------------------------------------------------------------


class SearchExhausted(DerivLabError):
    pass


class TooManyTopics(DerivLabError, ValueError):
    pass


# --- experiments --------------------------------------------------------------


class EquivalenceViolation(DerivLabError):
    """Optimized and baseline derivations disagreed on an honest range."""


class PropertyViolation(DerivLabError):
    """An experiment result broke one of its checked properties."""
