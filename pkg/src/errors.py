"""
Exception hierarchy for t1track
"""

from typing import Optional


class T1TrackError(Exception):
    """Base class for all t1track errors"""


class ConfigError(T1TrackError):
    """Invalid or unresolvable experiment configuration"""


class UnknownPreset(ConfigError, KeyError):
    """Requested parameter preset does not exist"""

    def __str__(self) -> str:
        return Exception.__str__(self)


class NumericalError(T1TrackError):
    """A computation could not produce a finite, meaningful result"""


class ZeroEvidence(NumericalError):
    """Observed outcome has zero probability under the current belief"""


class DomainError(NumericalError, ValueError):
    """Argument outside the mathematical domain of an operation"""


class NoMinimum(NumericalError):
    """Objective is monotone on the search bracket"""

    def __init__(self, message: str, boundary_tau: Optional[float] = None,
                 boundary_value: Optional[float] = None):
        super().__init__(message)
        self.boundary_tau = boundary_tau
        self.boundary_value = boundary_value


class FitDiverged(NumericalError):
    """Least-squares fit failed to converge to a valid solution"""


class InsufficientData(NumericalError):
    """Not enough data points for the requested estimate"""


class TooManyShots(NumericalError, ValueError):
    """Exact mixture expansion requested for too many records"""


class QuadratureFailure(NumericalError):
    """Adaptive quadrature did not reach the requested tolerance"""


class TraceTooShort(NumericalError, ValueError):
    """Trace has too few samples for the requested spectral operation"""


class MomentMatchingError(NumericalError):
    """Moment equations for an approximating family have no solution"""


class ModelSelectionAmbiguous(UserWarning):
    """An extra Lorentzian component barely improves the noise fit"""
