"""Exception hierarchy.

Three failure families, mirrored by the command line tool's exit codes:
configuration problems (exit 4), certification failures (exit 2) and
numerical failures (exit 3).  Library code raises the specific subclasses;
callers that only care about the family can catch the three bases.
"""

from __future__ import annotations


class RiccatiNashError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(RiccatiNashError):
    """Invalid input data, shapes, or parameters."""

    exit_code = 4


class CertificationError(RiccatiNashError):
    """A certification step failed; results would be unsupported."""

    exit_code = 2


class NumericalError(RiccatiNashError):
    """The computation itself broke down (blow-up, lost accuracy, ...)."""

    exit_code = 3


# -- configuration ----------------------------------------------------------

class NonSymmetricCost(ConfigError):
    """Cost matrix asymmetric beyond the symmetrization threshold."""


class DimensionMismatch(ConfigError):
    """Arrays with incompatible shapes."""


class EmptyStencil(ConfigError):
    """Cost stencil with no entries."""


class IndexOutOfRange(ConfigError):
    """Player or coefficient index outside the valid range."""


class WindowMismatch(ConfigError):
    """Sequence windows or truncations that do not line up."""


class NonPositiveSequence(ConfigError):
    """Decay sequence with entries <= 0."""


class NonPositiveAlpha(ConfigError):
    """Fourier family parameter must satisfy alpha > 0."""


class TruncationTooSmall(ConfigError):
    """Truncation smaller than the cost stencil."""


class UncertifiedFlow(ConfigError):
    """Operation requires a decay-certified flow."""


class UncertifiedSymbol(ConfigError):
    """Operation requires a certified symbol (gathering + compatibility)."""


class InadmissibleDeviation(ConfigError):
    """Deviation control outside the admissible class."""


class IndefiniteCost(ConfigError):
    """Cost matrix fails a required positive-semidefiniteness floor."""


class TargetInfeasible(ConfigError):
    """Cost generator cannot meet the requested targets."""


class BadStep(ConfigError):
    """Time step too large for the stability heuristics."""


# -- certification ----------------------------------------------------------

class GatheringFailed(CertificationError):
    """Strong gathering check failed.

    Carries the offending point and symbol value when known.
    """

    def __init__(self, message: str, z: complex | None = None,
                 value: complex | None = None) -> None:
        super().__init__(message)
        self.z = z
        self.value = value


class CompatibilityFailed(CertificationError):
    """Compatibility margin check failed."""

    def __init__(self, message: str, t: float | None = None,
                 z: complex | None = None) -> None:
        super().__init__(message)
        self.t = t
        self.z = z


class TailBoundFailure(CertificationError):
    """Extrapolated tail too large relative to the window."""


class DominationViolated(CertificationError):
    """Costs not dominated by the decay gauge."""


class MonotonicityBarrierCrossed(CertificationError):
    """Monitored eigenvalue floor crossed during a mean-field solve."""

    def __init__(self, message: str, t: float | None = None,
                 floor: float | None = None) -> None:
        super().__init__(message)
        self.t = t
        self.floor = floor


# -- numerics ---------------------------------------------------------------

class BlowUpDetected(NumericalError):
    """Solution norm exceeded the blow-up threshold mid-integration."""

    def __init__(self, message: str, t: float | None = None) -> None:
        super().__init__(message)
        self.t = t


class BallEscape(NumericalError):
    """Picard iterate left the contraction ball."""


class NoContraction(NumericalError):
    """Picard iteration failed to contract."""


class NumericalSingularity(NumericalError):
    """Denominator below the safe evaluation threshold."""


class ImaginaryResidue(NumericalError):
    """Extracted coefficients carry a non-negligible imaginary part."""


class AliasingDetected(NumericalError):
    """Contour extraction changed under node doubling."""


class ExplodingState(NumericalError):
    """Simulated state left the stability region."""
