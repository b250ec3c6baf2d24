"""Exception hierarchy for the solver.

Errors are split by origin: data/layout problems, numerical-kernel
failures, and algorithm-level failures that callers may want to retry
or report distinctly (exit codes in the CLI depend on these classes).
"""


class SdoError(Exception):
    """Base class for all solver errors."""


class LayoutMismatch(SdoError):
    """Vector length or block layout inconsistent with the declared layout."""


class DimMismatch(SdoError):
    """Operands have incompatible dimensions or block structures."""


class NoConvergence(SdoError):
    """An iterative kernel (eigensolver) hit its iteration cap."""


class NotPositiveDefinite(SdoError):
    """A matrix required to be positive definite is not.

    Carries ``min_eigenvalue`` for diagnostics.
    """

    def __init__(self, msg, min_eigenvalue=None):
        super().__init__(msg)
        self.min_eigenvalue = min_eigenvalue


class Singular(SdoError):
    """Matrix numerically singular (smallest singular value below floor)."""


class SingularScaling(SdoError):
    """Scaling matrix too ill-conditioned to invert reliably."""


class RankDeficient(SdoError):
    """Constraint matrices are linearly dependent."""


class FormError(SdoError):
    """Problem is not in the form an operation requires."""


class NonConverged(SdoError):
    """Iterative linear solve stopped without meeting its tolerance.

    Carries the partial ``report`` so callers can decide whether to
    retry with a direct solve.
    """

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class InvalidParameters(SdoError):
    """Interior-point parameters violate the convergence conditions."""


class NeighborhoodEscape(SdoError):
    """An iterate left the central-path neighborhood (invariant breach)."""


class MaxIterations(SdoError):
    """Iteration cap reached before the target gap."""


class OracleFailure(SdoError):
    """A limited-precision oracle returned a worse gap than requested."""


class NotStrictlyFeasible(SdoError):
    """A point required to be strictly feasible is not."""


class ParseError(SdoError):
    """Malformed input file. Carries the offending line number."""

    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class IndexOutOfBlock(ParseError):
    """Entry references a block or index outside the declared structure."""


class NonSymmetricDuplicate(ParseError):
    """Conflicting values given for an (i, j)/(j, i) entry pair."""


class IoError(SdoError):
    """Failed to read or write an artifact file."""
