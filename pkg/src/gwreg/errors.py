"""Exception hierarchy shared across the package.

``GwregError`` splits into two broad families that the CLI maps onto exit
codes: ``InputError`` (malformed or inconsistent user input, exit 2) and
``NumericalError`` (degeneracy or convergence failure, exit 3).
"""


class GwregError(Exception):
    """Base class for all package errors."""


class InputError(GwregError):
    """Invalid or inconsistent input (CLI exit code 2)."""


class NumericalError(GwregError):
    """Numerical degeneracy or convergence failure (CLI exit code 3)."""


class DimensionMismatch(InputError):
    """Operands have incompatible dimensions."""


class LengthMismatch(InputError):
    """Paired sequences have different lengths."""


class EmptyInput(InputError):
    """An operation received an empty data sequence."""


class EmptyBlock(InputError):
    """An observation block contains no rows."""


class NotPositiveSemidefinite(NumericalError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class NotPositiveDefinite(NumericalError):
    """Matrix has an eigenvalue at or below the SPD tolerance."""


class OutOfRange(NumericalError):
    """Tangent element falls outside the admissible set (V + I not PSD)."""


class NoConvergence(NumericalError):
    """Iteration exceeded its maximum step count without converging."""


class DegenerateInput(NumericalError):
    """Inputs are collectively too degenerate to process."""


class DegenerateReference(NumericalError):
    """An estimated reference measure failed the SPD requirement."""


class SingularHessian(NumericalError):
    """Empirical Hessian too ill-conditioned to invert."""


class ConvergenceWarning(UserWarning):
    """Post-hoc optimality check failed while the iteration converged."""
