"""Exception types raised by cineplan."""

from typing import Optional


class CineplanError(Exception):
    """Base class for all cineplan errors."""


class NonFiniteInputError(CineplanError, ValueError):
    """A state, control or parameter contains NaN or Inf."""


class SingularityError(CineplanError, ValueError):
    """Attitude recovery hit the free-fall singularity (a + g e3 = 0)."""


class YawUndefinedError(SingularityError):
    """Horizontal velocity too small to define the UAV yaw."""


class GimbalGeometryError(CineplanError, ValueError):
    """Camera geometry outside its domain (target above or directly below)."""


class ShotCompleteError(CineplanError, ValueError):
    """Desired state queried past the end of a shot."""


class OcpBuildError(CineplanError, ValueError):
    """Inconsistent optimal control problem snapshot."""


class MetricsUndefinedError(CineplanError, ValueError):
    """Not enough samples to compute a metric."""


class ScenarioError(CineplanError, ValueError):
    """
    Malformed scenario file or value.

    Args:
        message: Human readable description
        path: Dotted JSON path of the offending field, if known
        source: File the scenario came from, if any
        line: 1-based line in ``source`` where the field appears, if found
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        source: Optional[str] = None,
        line: Optional[int] = None,
    ):
        self.message = message
        self.path = path
        self.source = source
        self.line = line
        super().__init__(self.describe())

    def describe(self) -> str:
        location = self.source or "<scenario>"
        if self.line is not None:
            location = f"{location}:{self.line}"
        if self.path:
            return f"{location}: {self.path}: {self.message}"
        return f"{location}: {self.message}"
