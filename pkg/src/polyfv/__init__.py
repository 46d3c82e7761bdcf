"""Finite-volume solvers on 2D polytopal meshes.

Hybrid mimetic mixed scheme (standard and modified source term), the
two-point flux approximation on admissible meshes, flux post-processing,
patching diagnostics and a convergence-study harness.
"""

from . import diagnostics, errors, fluxes, harness, hmm, meshgen, quadrature, tpfa
from .mesh import (PolytopalMesh, RegularityReport, Violation, build_mesh,
                   read_mesh, regularity_theta, validate, write_mesh)

__version__ = "0.1.0"

__all__ = [
    "PolytopalMesh", "RegularityReport", "Violation", "build_mesh",
    "read_mesh", "regularity_theta", "validate", "write_mesh",
    "diagnostics", "errors", "fluxes", "harness", "hmm", "meshgen",
    "quadrature", "tpfa", "__version__",
]
