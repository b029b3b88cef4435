"""Exception and warning types shared by the whole package.

Fatal conditions are exceptions; conditions that are auto-corrected or
merely reported (orientation fixes, stalled descents, flagged error
estimates) are warnings so that batch runs keep going.
"""


class FracPerimError(Exception):
    """Base class for all package errors."""


# --- shape validation ---

class SelfIntersecting(FracPerimError):
    """Polygon or curve boundary crosses itself."""


class DegenerateEdge(FracPerimError):
    """Zero-length polygon edge."""


class NonPositiveLambda(FracPerimError):
    """Rescaling factor must be > 0."""


class ZeroSpeedNode(FracPerimError):
    """Curve parametrization has |gamma'(t)| = 0 at a node."""


class UnsupportedDimension(FracPerimError):
    """Functional not implemented for this dimension."""


class WrongOrientation(UserWarning):
    """Boundary was oriented clockwise; auto-reversed."""


# --- quadrature ---

class QuadratureFailure(FracPerimError):
    """Adaptive quadrature could not reach the requested tolerance."""


class MaxDepthExceeded(UserWarning):
    """Refinement hit max_depth; best value returned with flagged error."""


class DeltaTooLarge(FracPerimError):
    """Cutoff delta is not smaller than the edge length."""


class NonIntegrableDiagonal(FracPerimError):
    """Same-edge integral with a |x-y|^{-1} kernel and no cutoff."""


class SeedRequired(FracPerimError):
    """Monte Carlo estimators must be seeded explicitly."""


# --- limit functional ---

class DivergentInner(QuadratureFailure):
    """Symmetric-difference inner integral failed to converge."""


class NonConvergentPV(QuadratureFailure):
    """Principal-value bracket sequence is not Cauchy."""


class NotSmooth(FracPerimError):
    """Route requires a C^2 curve, got something else."""


class CornerPoint(FracPerimError):
    """Fractional mean curvature requested at a polygon vertex."""


class NonConvexInput(FracPerimError):
    """Operation is only defined for convex shapes."""


# --- expansion / optimization ---

class InsufficientPoints(FracPerimError):
    """Extrapolation needs at least 3 usable grid points."""


class InfeasibleInit(FracPerimError):
    """Optimizer initial polygon is invalid after projection."""


class StalledDescent(UserWarning):
    """Optimizer made no progress; best iterate still returned."""


class MassMismatch(FracPerimError):
    """Shape area does not match the declared mass."""
