"""Exception types shared across the package.

Plain ValueError is used for malformed arguments (bad shapes, out-of-range
scalars); the classes below mark failure modes a caller may want to handle
separately.
"""


class PlacementError(Exception):
    """Asset placement is out of bounds or outside the eligible region."""


class DirectionMismatchError(PlacementError):
    """Multi-object composition received assets with different light bins."""


class NoEffectError(Exception):
    """Shadow direction is undefined because the effect mask is empty."""


class UndefinedRegionError(ValueError):
    """A region-restricted metric was asked for an empty region."""


class NumericError(Exception):
    """Non-finite values encountered where finite math was required."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""
