"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or out-of-range input (dimensions, parameter ranges, config)."""


class DomainError(InputError):
    """Point lies outside the domain an operation requires (e.g. the cut locus)."""


class NumericalFailure(RuntimeError):
    """A numerical routine could not reach its accuracy target.

    Carries a ``payload`` dict with diagnostics (the offending point,
    residuals, iteration counts) for post-mortem inspection.
    """

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = payload


class UnresolvedDistanceError(NumericalFailure):
    """No multistart branch of the distance solver converged."""


class AsymptoticsError(NumericalFailure):
    """A small-time fit did not converge."""


class ScanError(NumericalFailure):
    """Too many samples of a scan had to be skipped."""
