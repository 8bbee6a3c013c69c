"""Exception types shared across the toolkit.

Every domain error derives from NoirError so the CLI can map any of them
to exit code 1 while usage errors stay on exit code 2.
"""

from __future__ import annotations


class NoirError(Exception):
    """Base class for all domain errors raised by this package."""


class FormatError(NoirError):
    """A file or byte stream does not match its documented layout."""


class ValidationError(NoirError):
    """Structurally well-formed input violates a semantic invariant."""


class IoError(NoirError):
    """Filesystem read/write failure."""


class ArgumentError(NoirError):
    """An argument violates an operation precondition."""


class UnknownTokenError(NoirError):
    """A token cannot be resolved against the bound vocabulary."""

    def __init__(self, token: str, line: int | None = None):
        self.token = token
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown token {token!r}{where}")


class UnsegmentableError(NoirError):
    """Text cannot be segmented against the vocabulary."""

    def __init__(self, offset: int, text: str = ""):
        self.offset = offset
        super().__init__(f"no token matches input at byte offset {offset}")


class InfeasibleBudget(NoirError):
    """The requested privacy budget is below the feasible minimum.

    ``minimal_feasible`` carries the smallest budget (per-feature or total,
    depending on the raising operation) that would have been accepted.
    ``violations`` lists offending (token, feature) pairs when known.
    """

    def __init__(self, message: str, minimal_feasible: float,
                 violations: list[tuple[int, int]] | None = None):
        self.minimal_feasible = minimal_feasible
        self.violations = violations or []
        super().__init__(f"{message} (minimal feasible: {minimal_feasible:.9g})")


class TooLarge(NoirError):
    """Input exceeds the size guard of an exact/exhaustive operation."""


class ZeroLikelihood(NoirError):
    """An observation is unreachable from every vocabulary token."""


class EmptyCorpus(NoirError):
    """An operation requires at least one corpus record."""


class EmptySequence(NoirError):
    """A metric requires a nonempty token sequence."""


class LengthMismatch(NoirError):
    """Paired inputs must have equal lengths."""


class DimensionMismatch(NoirError):
    """Matrix shapes disagree."""


class DimsMismatch(NoirError):
    """Negotiated protocol dimensions disagree with local model shapes."""


class NonFiniteLoss(NoirError):
    """Training produced a NaN or infinite loss."""


class Truncated(FormatError):
    """A byte stream ended before the declared frame length."""


class Oversize(FormatError):
    """A frame declares a payload larger than the protocol allows."""


class ProtocolError(NoirError):
    """The remote peer answered with an ERROR frame."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"peer error {code}: {message}")


class MissingFixture(NoirError):
    """A reproduction-suite fixture file is absent."""


class DigestMismatch(ValidationError):
    """A randomized vocabulary does not match its recorded source digest."""
