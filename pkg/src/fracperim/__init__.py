"""Fractional perimeters of planar and 1-d sets, their renormalized
limit as the order tends to 1, and small polygon shape optimization."""

from . import errors, shapes

__version__ = "0.1.0"

__all__ = ["errors", "shapes", "__version__"]
