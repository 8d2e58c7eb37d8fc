"""Error types shared across the package."""


class PssmpError(Exception):
    """Base class for all package-specific errors."""


class NotASubordinator(PssmpError):
    """Operation requires -xi to be a subordinator and it is not."""


class InvalidMeasure(PssmpError):
    """Jump measure fails an integrability or monotonicity requirement."""


class EmptyTail(PssmpError):
    """Jump sampling requested from a measure with no mass above the cutoff."""


class MayDiverge(PssmpError):
    """Exponential functional is not guaranteed finite for this spec."""


class RareEvent(PssmpError):
    """Rejection sampling acceptance rate fell below the configured floor."""


class NoConvergence(PssmpError):
    """Fixed-point density solve failed to reach tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NonConvergence(PssmpError):
    """Root bracketing failed within the configured search range."""


class OutOfDomain(PssmpError):
    """Argument lies outside the domain of the requested transform."""


class NoYaglomRegime(PssmpError):
    """No quasi-stationary / Yaglom regime is known for this spec."""


class TooFewExceedances(PssmpError):
    """Tail estimator received fewer exceedances than its minimum."""


class Inconclusive(PssmpError):
    """Numeric regime verdict landed inside the configured margin band."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class TiltDiverges(PssmpError):
    """Exponential change of measure does not produce a valid spec."""


class SeriesDivergence(PssmpError):
    """Series evaluation left its reliable parameter range."""


class NotFactorizableError(PssmpError):
    """Requested factor law does not exist for this spec."""


class MalformedSpec(PssmpError):
    """JSON input does not parse into a valid spec."""
