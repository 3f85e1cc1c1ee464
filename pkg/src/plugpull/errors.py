"""Exception types shared across the package.

Each simulation-level failure maps to a distinct CLI exit code (see ``cli.py``).
"""


class PlugPullError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PlugPullError):
    exit_code = 3


class GimbalLock(PlugPullError):
    """Pitch too close to +-pi/2 for the Z-Y-X Euler-rate map."""

    exit_code = 6


class SingularMass(PlugPullError):
    exit_code = 9


class NonInvertible(PlugPullError):
    exit_code = 10


class DegenerateWindow(PlugPullError):
    exit_code = 13


class NoSeparation(PlugPullError):
    """The wire-pulling guard never fired before the end of the run."""

    exit_code = 4


class EnvelopeExit(PlugPullError):
    """State left the flight envelope (recorded as a crash)."""

    exit_code = 5


class TraceError(PlugPullError):
    exit_code = 7


class TraceMisaligned(TraceError):
    pass


class FitDegenerate(PlugPullError):
    exit_code = 11


class SamplingBudgetExceeded(PlugPullError):
    exit_code = 8


class SectorViolation(PlugPullError):
    exit_code = 12
