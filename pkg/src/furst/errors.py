"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, PipelineDegenerate -> 3,
InvariantViolation -> 4.
"""


class FurstError(Exception):
    pass


class InvalidParameter(FurstError, ValueError):
    """A parameter outside its documented domain (bad radius, exponent, ...)."""


class RadiusBelowResolution(InvalidParameter):
    """Radius below the grid resolution delta."""


class InvalidRadius(InvalidParameter):
    """Covering radius that is not a dyadic multiple of delta."""


class NoDualRepresentation(InvalidParameter):
    """Lines through the origin have no dual point x.v = 1."""


class NoSlopeIntercept(InvalidParameter):
    """Horizontal lines cannot be written as x = a*y + b."""


class NotInSet(InvalidParameter):
    """A cell query on a cell that is not occupied."""


class ConstructionFailure(FurstError):
    """A generator cannot realize the requested parameters on the grid."""


class InsufficientData(FurstError):
    """Too few samples for a regression."""


class ConfigError(FurstError):
    """Malformed experiment configuration."""


class PipelineDegenerate(FurstError):
    """A proof-pipeline stage came out structurally empty."""

    def __init__(self, stage: str, detail: str = ""):
        self.stage = stage
        msg = f"pipeline degenerate at stage {stage!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InvariantViolation(FurstError):
    """A machine-checked invariant failed."""
