"""Exception and warning types shared across the package."""

from __future__ import annotations


class RejectedParameter(ValueError):
    """A model parameter violates one of the admissibility constraints.

    The message names the constraint that failed and the offending value.
    """


class DegenerateSpectrum(ArithmeticError):
    """The interior root pair coincides (balanced walk at z = 1), so the
    reciprocal square-root normalizer is undefined.  Balanced-branch callers
    must use the polynomial forms instead."""


class BalancedUnsupported(ValueError):
    """The requested closed form exists only for walks with drift (p != q)."""


class StartNotBarrier(ValueError):
    """Per-barrier absorption times are defined for walks started on a
    barrier site (i0 = 0)."""


class SingularSystem(ArithmeticError):
    """A truncated linear system could not be solved.  Cannot happen for a
    valid model with positive absorption at z <= 1; kept as a defensive
    diagnostic."""


class TruncationInsufficient(ValueError):
    """The requested accuracy is below the geometric tail bound of the
    chosen truncation."""


class IllConditioned(ArithmeticError):
    """Stages of a difference-quotient extrapolation tableau disagree beyond
    the requested tolerance."""


class FormulaDiscrepancy(UserWarning):
    """Two evaluation paths for the same quantity disagree beyond tolerance.

    Emitted when a verbatim display-form evaluation deviates from the
    authoritative boundary-system / chain-rule path.  Carries both values in
    the message; never fatal unless the caller opts in (CLI
    ``--strict-formulas``).
    """


class ConsistencyFailure(UserWarning):
    """Two branch expressions that must coincide at a shared index do not."""


class ExcessCensoring(UserWarning):
    """A simulation hit its step cap on more than 0.1% of the walks; the
    returned statistics are still valid but flagged."""
