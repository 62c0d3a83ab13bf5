"""Exception types shared across the package.

Numerical routines raise these instead of bare ValueError so callers can
distinguish "you gave me garbage" from "the mathematical object you asked
for does not exist" from "the iteration did not settle".
"""


class HarmonicTailsError(Exception):
    """Base class for everything raised on purpose by this package."""


class StateRangeError(HarmonicTailsError):
    """A state outside the represented range was requested and no tail rule covers it."""


class DegenerateRowError(HarmonicTailsError):
    """A kernel row carries no mass (all weight removed by killing or tilting)."""


class NoCramerRootError(HarmonicTailsError):
    """The moment generating function of the step law has no positive unit root."""


class InconsistentRootError(HarmonicTailsError):
    """A tilt was requested at a rate that is not a unit root of the step law."""


class NoPositiveHarmonicError(HarmonicTailsError):
    """No positive harmonic function exists for the given kernel parameters."""


class SolverFailure(HarmonicTailsError):
    """A linear solve produced values that fail a convergence or positivity check.

    ``reason`` is a short machine-readable tag; ``diagnostics`` carries numbers
    useful for debugging (max negative entry, disagreement between truncations,
    residual, ...).
    """

    def __init__(self, message, reason="unknown", diagnostics=None):
        super().__init__(message)
        self.reason = reason
        self.diagnostics = diagnostics or {}


class ConvergenceError(HarmonicTailsError):
    """An iterative scheme hit its cap before reaching the requested tolerance."""


class InternalConsistencyError(HarmonicTailsError):
    """Two independent computations of the same quantity disagree beyond tolerance."""


class UnsupportedInputError(HarmonicTailsError):
    """The input is structurally valid but outside what this routine handles."""


class ConfigError(HarmonicTailsError):
    """An experiment configuration failed validation."""
