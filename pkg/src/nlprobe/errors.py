"""Exception hierarchy shared by every nlprobe module."""


class ProbeError(Exception):
    """Base class for all errors raised by nlprobe."""


class InvalidDimension(ProbeError, ValueError):
    pass


class DimensionMismatch(ProbeError, ValueError):
    pass


class InvalidObservable(ProbeError, ValueError):
    pass


class InvalidHamiltonian(ProbeError, ValueError):
    pass


class DegenerateOperator(ProbeError, ValueError):
    pass


class UnsupportedExponent(ProbeError, ValueError):
    pass


class UnscalableProcess(ProbeError, ValueError):
    pass


class InvalidAmplitude(ProbeError, ValueError):
    pass


class EnergyConstraintViolated(ProbeError, ValueError):
    pass


class RegimeError(ProbeError, ValueError):
    """Probe parameters fall outside beta <= omega, beta*t <= 0.05."""


class ConfigError(ProbeError, ValueError):
    pass


class TruncationError(ProbeError, RuntimeError):
    """The Fock truncation cannot hold the state to the required accuracy.

    ``tail_mass`` carries the offending probability mass and ``dim`` the
    truncation at which it was measured (``None`` when not applicable).
    """

    def __init__(self, message, tail_mass=float("nan"), dim=None):
        super().__init__(message)
        self.tail_mass = tail_mass
        self.dim = dim


class NumericalInstability(ProbeError, RuntimeError):
    """Two routes to the same quantity disagree beyond tolerance."""

    def __init__(self, message, first=float("nan"), second=float("nan")):
        super().__init__(message)
        self.first = first
        self.second = second


class GridCoverageError(ProbeError, RuntimeError):
    def __init__(self, message, norm=float("nan")):
        super().__init__(message)
        self.norm = norm
