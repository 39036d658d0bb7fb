"""Exception hierarchy shared by all modules."""


class TunnelingError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(TunnelingError, ValueError):
    """A physical or numerical parameter violates a precondition."""


class DegenerateThresholdError(TunnelingError):
    """A wavenumber sits on a segment threshold (k**2 == 2U)."""


class DivergentIntegralError(TunnelingError):
    """An overlap integral does not converge on the infinite tail."""


class AccuracyError(TunnelingError):
    """A numerical tolerance could not be met.

    ``achieved`` carries the best residual reached, when known.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class PhaseError(TunnelingError):
    """A time was routed to the wrong (open / closed) evolution phase."""


class InsufficientHorizonError(TunnelingError):
    """A trace ends before the requested feature appears."""


class NoPlateauError(TunnelingError):
    """The flux never stabilizes (expected for transparent barriers)."""


class TruncatedTraceError(TunnelingError):
    """The maximum of a trace sits at one of its endpoints."""


class InvalidMeasurementError(TunnelingError):
    """Two detector readings are mutually inconsistent."""


class OutOfSupportError(TunnelingError):
    """No stationary point exists inside the sampled wavenumber range."""
