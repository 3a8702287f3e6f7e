"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Raised when array or tensor dimensions do not agree."""


class DegenerateSamplingError(ValueError):
    """Raised when sampling points cannot identify a branch polynomial."""


class UnderSampledError(ValueError):
    """Raised when a sample plan does not reach the maximal Vandermonde rank."""
