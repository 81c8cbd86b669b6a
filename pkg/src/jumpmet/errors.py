"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` (and subclasses) to exit status 1 and
:class:`CapacityError` / :class:`TruncationError` to exit status 2.
"""


class JumpMetError(Exception):
    """Base class for all library errors."""


class ValidationError(JumpMetError, ValueError):
    """An input violates a documented precondition."""


class CompletenessError(ValidationError):
    """A Kraus set fails the completeness relation."""

    def __init__(self, defect: float, tolerance: float):
        self.defect = defect
        self.tolerance = tolerance
        super().__init__(
            f"Kraus operators are not complete: defect {defect!r} exceeds tolerance {tolerance!r}"
        )


class DomainError(ValidationError):
    """A parameter lies outside the domain where the quantity is defined."""


class DegenerateModelError(ValidationError):
    """Every conditioning history has negligible probability."""


class UnidentifiableError(DomainError):
    """The parameter cannot be estimated at this point (zero sensitivity)."""


class CapacityError(JumpMetError):
    """The requested exact computation exceeds the hard size cap."""


class TruncationError(JumpMetError):
    """Photon-number truncation discards too much probability mass."""


class TruncationWarning(UserWarning):
    """Truncation mass is noticeable but below the error threshold."""
