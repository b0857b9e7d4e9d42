"""Exception hierarchy shared by all modules."""


class QnodynError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(QnodynError, ValueError):
    """Physical parameters violate a model invariant."""


class NonPositiveFrequency(ValidationError):
    pass


class NegativeNonlinearity(ValidationError):
    pass


class NegativeDamping(ValidationError):
    pass


class NegativeCoupling(ValidationError):
    """g < 0; the doublet eigenvector convention assumes Delta(j) <= 0."""


class GroundLevelUndefined(QnodynError, ValueError):
    """Relative error of level j=0 is 0/0."""


class NumericError(QnodynError, ArithmeticError):
    """Base class for failures of a numeric procedure."""


class TruncationLeak(NumericError):
    pass


class DegenerateMatchAmbiguity(NumericError):
    def __init__(self, label, candidates, overlaps):
        self.label = label
        self.candidates = tuple(candidates)
        self.overlaps = tuple(overlaps)
        super().__init__(
            f"state {label}: oracle candidates {self.candidates} have overlaps "
            f"{self.overlaps} that differ by less than 1e-6"
        )


class ResonantDenominator(NumericError):
    pass


class StepSizeTooLarge(NumericError):
    pass


class DegenerateRateDenominator(NumericError):
    pass


class ZeroDiscriminant(NumericError):
    pass


class WindowTooShort(NumericError):
    pass


class ConfigError(QnodynError):
    """Configuration file could not be parsed."""
