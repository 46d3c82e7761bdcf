"""Exception types raised across the library.

Every error that a caller is expected to catch has a named class here;
all of them derive from :class:`PolyfvError` so a bare ``except
PolyfvError`` catches any library failure without masking bugs.
"""


class PolyfvError(Exception):
    """Base class for all polyfv errors."""


# -- mesh construction ------------------------------------------------------

class DegenerateCell(PolyfvError):
    """Cell with non-positive measure, repeated vertices or non-CCW input."""


class NonStarShaped(PolyfvError):
    """Cell point not strictly inside its cell (some d_{K,sigma} <= 0)."""


class NonConforming(PolyfvError):
    """Edge shared by more than two cells, or cells that do not tile the domain."""


class MeshFormatError(PolyfvError):
    """Malformed mesh file."""


# -- generators --------------------------------------------------------------

class ShiftTooLarge(PolyfvError):
    """Requested cell-point shift would leave the cell."""


class DegenerateTriangle(PolyfvError):
    """Collinear points where a proper triangle is required."""


class NotAcute(PolyfvError):
    """Triangulation has an angle at or above 90 degrees."""


class BoundaryMismatch(PolyfvError):
    """Opposite boundary vertex traces do not match under translation."""


# -- schemes -----------------------------------------------------------------

class NonSymmetricTensor(PolyfvError):
    """Diffusion tensor not symmetric at a quadrature node."""


class NonEllipticTensor(PolyfvError):
    """Diffusion tensor with a non-positive eigenvalue at a quadrature node."""


class InvalidAlpha(PolyfvError):
    """Stabilisation parameter must be positive."""


class SingularSystem(PolyfvError):
    """Linear system could not be factorised."""


class NoConvergence(PolyfvError):
    """Iterative solve did not reach the requested residual."""


class QuadratureFailure(PolyfvError):
    """Source term could not be integrated (non-finite value at a node)."""


class LayoutMismatch(PolyfvError):
    """Discrete field does not match the mesh dof layout."""


class NonPositiveCoefficient(PolyfvError):
    """Scalar diffusion coefficient must be positive."""


class NotAdmissible(PolyfvError):
    """Mesh fails the two-point orthogonality requirements."""


# -- diagnostics -------------------------------------------------------------

class InvalidPatching(PolyfvError):
    """Patches overlap or reference unknown cells."""


class MetadataMissing(PolyfvError):
    """Mesh was not produced by a generator that records patching metadata."""


class SingularMomentMatrix(PolyfvError):
    """Second-moment matrix of a cell is numerically singular."""


# -- harness -----------------------------------------------------------------

class UnknownCase(PolyfvError):
    """No built-in test case with that name."""


class ZeroDenominator(PolyfvError):
    """Relative error undefined: reference norm is zero."""


class InsufficientPoints(PolyfvError):
    """Rate regression needs at least two samples."""


class NonPositiveValue(PolyfvError):
    """Log-log regression requires positive h and error values."""
