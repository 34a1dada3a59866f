"""Exception types shared across the package.

The CLI maps these onto process exit codes: schema/input problems exit 2,
violated numerical assumptions exit 3, internal assertions exit 4.
"""

__all__ = ["ValidationError", "DegenerateMarginalError"]


class ValidationError(ValueError):
    """An input table, dataset, file, or flag combination violates its schema."""


class DegenerateMarginalError(ValueError):
    """A probability that must be strictly positive is zero (or numerically so).

    Raised e.g. for a sensitive group with zero mass, a conditioning class with
    no observed sensitive attributes, or a model that assigns vanishing
    probability to an output class where a positive marginal is required.
    """
