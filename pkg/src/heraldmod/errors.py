"""Exception types shared across the simulator."""


class HeraldmodError(Exception):
    """Base class for all simulator errors."""


class InvalidParams(HeraldmodError):
    """A parameter is outside its admissible range."""


class ZeroDensity(HeraldmodError):
    """A delay density integrates to zero and cannot be normalized."""


class NegativeDensity(HeraldmodError):
    """A delay density has negative values."""


class TargetOutOfRange(HeraldmodError):
    """A predistortion target amplitude falls outside [0, 1]."""

    def __init__(self, message: str, tau_ns: float | None = None):
        super().__init__(message)
        self.tau_ns = tau_ns


class UndersampledInput(HeraldmodError):
    """Sample period too coarse for the requested filter bandwidth."""


class ChannelMismatch(HeraldmodError):
    """An operation received a photon from the wrong channel."""


class AmplitudeOutOfRange(HeraldmodError):
    """A transfer amplitude exceeds unit magnitude."""


class ConfigMismatch(HeraldmodError):
    """Histogram range is not commensurate with the bin width."""


class EmptyRun(HeraldmodError):
    """Analysis requested on a run with no heralds or no live time."""


class WindowTooSmall(HeraldmodError):
    """Histogram does not cover the requested integration window."""


class ZeroFactor(HeraldmodError):
    """A loss back-out factor is zero or negative."""


class GridMismatch(HeraldmodError):
    """Two curves are not sampled on the same time grid."""


class ScenarioError(HeraldmodError):
    """Base class for scenario file problems."""


class ParseError(ScenarioError):
    """Scenario file could not be read or parsed."""


class ValidationError(ScenarioError):
    """Scenario content violates the schema; message carries the field path."""
