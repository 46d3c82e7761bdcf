"""Hybrid mimetic mixed scheme: dof layout, local cell operators,
reconstructions, SPD assembly for the standard and modified source terms,
and the linear solve.

Per cell K with m edges, writing delta_sigma = u_K - u_sigma:

    G_K : 2 x m, columns (|sigma|/|K|) n_{K,sigma}
    X_K : m x 2, rows (xbar_sigma - x_K)^T
    R_K = I_m - X_K G_K
    B_K = alpha^2 diag(|sigma|/d_{K,sigma} * A_K n . n)
    W_K = |K| G_K^T A_K G_K + R_K^T B_K R_K

so the cell gradient is -G_K delta, the per-edge stabilisation residual is
-R_K delta, and the local energy is delta(v)^T W_K delta(u).  The global
matrix scatters these forms with boundary edge unknowns eliminated (pinned
to zero); the matrix does not depend on which source-term mode is used.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import (InvalidAlpha, LayoutMismatch, NoConvergence,
                     NonEllipticTensor, NonSymmetricTensor, QuadratureFailure,
                     SingularSystem)
from .quadrature import cell_quadrature, edge_quadrature, triangle_quadrature

_SQRT_D = np.sqrt(2.0)        # space dimension is 2 throughout
_DIRECT_SOLVE_MAX_N = 300_000


# -- degrees of freedom ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DofLayout:
    """One unknown per cell, one per interior edge; boundary edges pinned.

    ``edge_dof[e]`` is -1 for boundary edges, otherwise the global index of
    the edge unknown.  Cell k has global index k.
    """

    n_cells: int
    n_interior_edges: int
    edge_dof: np.ndarray

    @property
    def n_dofs(self):
        return self.n_cells + self.n_interior_edges

    def __eq__(self, other):
        return (isinstance(other, DofLayout)
                and self.n_cells == other.n_cells
                and np.array_equal(self.edge_dof, other.edge_dof))

    @classmethod
    def from_mesh(cls, mesh):
        edge_dof = np.full(mesh.n_edges, -1, dtype=np.int64)
        edge_dof[mesh.interior_edges] = mesh.n_cells + np.arange(
            len(mesh.interior_edges))
        edge_dof.setflags(write=False)
        return cls(mesh.n_cells, len(mesh.interior_edges), edge_dof)


@dataclass
class DiscreteField:
    """Values laid out per :class:`DofLayout`; boundary edges implicitly 0."""

    layout: DofLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.layout.n_dofs,):
            raise LayoutMismatch(
                f"expected {self.layout.n_dofs} values, got {self.values.shape}")

    @property
    def cell_values(self):
        return self.values[:self.layout.n_cells]

    def edge_values(self):
        """Per-edge values including the pinned zeros on boundary edges."""
        out = np.zeros(len(self.layout.edge_dof))
        sel = self.layout.edge_dof >= 0
        out[sel] = self.values[self.layout.edge_dof[sel]]
        return out


# -- diffusion tensors -----------------------------------------------------------

class TensorField:
    """Symmetric positive-definite 2x2 tensor field ``x -> A(x)``."""

    def __init__(self, evaluator):
        self._eval = evaluator

    @classmethod
    def constant(cls, matrix):
        matrix = np.asarray(matrix, dtype=float).reshape(2, 2)
        return cls(lambda x, y: matrix)

    @classmethod
    def identity(cls):
        return cls.constant(np.eye(2))

    @classmethod
    def isotropic(cls, a):
        """Scalar coefficient ``a`` (constant or callable) times identity."""
        if callable(a):
            return cls(lambda x, y: a(x, y) * np.eye(2))
        return cls.constant(float(a) * np.eye(2))

    def __call__(self, x, y):
        return np.asarray(self._eval(x, y), dtype=float).reshape(2, 2)


def project_tensor(tensor, mesh):
    """Per-cell averages A_K of the tensor (degree-5 cell quadrature).

    Exact for constant and affine entries.  Symmetry and ellipticity are
    checked at every quadrature node.
    """
    out = np.empty((mesh.n_cells, 2, 2))
    for k in range(mesh.n_cells):
        pts, wts = cell_quadrature(mesh, k)
        acc = np.zeros((2, 2))
        for p, w in zip(pts, wts):
            a = tensor(p[0], p[1])
            if abs(a[0, 1] - a[1, 0]) > 1e-12 * (1.0 + np.abs(a).max()):
                raise NonSymmetricTensor(f"A({p[0]:.4g}, {p[1]:.4g}) is not symmetric")
            if np.linalg.eigvalsh(0.5 * (a + a.T)).min() <= 0.0:
                raise NonEllipticTensor(
                    f"A({p[0]:.4g}, {p[1]:.4g}) has a non-positive eigenvalue")
            acc += w * a
        out[k] = acc / mesh.cell_measures[k]
    return out


# -- local operators --------------------------------------------------------------

@dataclass(frozen=True)
class LocalCellOperators:
    """The matrices driving assembly and flux extraction on one cell."""

    cell: int
    edges: np.ndarray
    G: np.ndarray
    X: np.ndarray
    R: np.ndarray
    B_diag: np.ndarray
    W: np.ndarray
    A_K: np.ndarray
    alpha: float


def local_operators(mesh, k, A_K, alpha=1.0):
    """Build G_K, X_K, R_K, B_K and W_K for cell ``k``."""
    if not alpha > 0.0:
        raise InvalidAlpha(f"alpha must be positive, got {alpha}")
    A_K = np.asarray(A_K, dtype=float).reshape(2, 2)
    edges = mesh.cell_edges[k]
    normals = mesh.cell_normals[k]
    dists = mesh.cell_edge_dists[k]
    lengths = mesh.edge_lengths[edges]
    measure = mesh.cell_measures[k]

    G = (normals * (lengths / measure)[:, None]).T
    X = mesh.edge_midpoints[edges] - mesh.cell_points[k]
    R = np.eye(len(edges)) - X @ G
    B_diag = alpha ** 2 * (lengths / dists) * np.einsum(
        "ij,jk,ik->i", normals, A_K, normals)
    W = measure * G.T @ A_K @ G + R.T @ (B_diag[:, None] * R)
    return LocalCellOperators(cell=k, edges=edges, G=G, X=X, R=R,
                              B_diag=B_diag, W=W, A_K=A_K, alpha=alpha)


def cell_deltas(mesh, k, cell_values, edge_values):
    """delta_sigma = u_K - u_sigma for the edges of cell ``k``."""
    return cell_values[k] - edge_values[mesh.cell_edges[k]]


def cell_gradient(ops, delta):
    """The constant cell gradient nabla_K u = -G_K delta."""
    return -(ops.G @ delta)


def cone_gradients(ops, mesh, delta):
    """Per-cone gradients: rows are the constant gradient on each cone."""
    grad_k = cell_gradient(ops, delta)
    s = -(ops.R @ delta)
    dists = mesh.cell_edge_dists[ops.cell]
    return grad_k[None, :] + (
        _SQRT_D * ops.alpha * s / dists)[:, None] * mesh.cell_normals[ops.cell]


def cell_energy(ops, mesh, delta_u, delta_v):
    """Independent cone-wise evaluation of the local bilinear form.

    Sums |D_{K,sigma}| A_K g_sigma(u) . g_sigma(v) over the cones; agrees
    with delta_v^T W_K delta_u to roundoff.
    """
    gu = cone_gradients(ops, mesh, delta_u)
    gv = cone_gradients(ops, mesh, delta_v)
    areas = mesh.cone_areas(ops.cell)
    return float(np.sum(areas * np.einsum("ij,jk,ik->i", gu, ops.A_K, gv)))


# -- assembly ----------------------------------------------------------------------

@dataclass
class HmmSystem:
    """Assembled SPD system with its provenance metadata."""

    matrix: sps.csr_matrix
    rhs: np.ndarray | None
    layout: DofLayout
    local_ops: list
    alpha: float
    quadrature_degree: int
    mesh_hash: str

    def with_rhs(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.layout.n_dofs,):
            raise LayoutMismatch("rhs length does not match the dof layout")
        return replace(self, rhs=rhs)


def assemble(mesh, A_cells, alpha=1.0):
    """Assemble the global matrix by scattering delta^T W_K delta.

    Boundary edge unknowns are eliminated (never enter the system), which
    keeps the matrix SPD.  Cells are processed in ascending index order so
    the result is bitwise reproducible; the matrix is independent of the
    source-term mode.
    """
    layout = DofLayout.from_mesh(mesh)
    A_cells = np.asarray(A_cells, dtype=float)
    rows, cols, vals = [], [], []
    ops_list = []
    for k in range(mesh.n_cells):
        ops = local_operators(mesh, k, A_cells[k], alpha)
        ops_list.append(ops)
        m = len(ops.edges)
        # delta = C z with z = (u_K, u_sigma...) and C = [1 | -I].
        C = np.hstack([np.ones((m, 1)), -np.eye(m)])
        local = C.T @ ops.W @ C
        gdofs = np.empty(m + 1, dtype=np.int64)
        gdofs[0] = k
        gdofs[1:] = layout.edge_dof[ops.edges]
        keep = gdofs >= 0
        idx = gdofs[keep]
        sub = local[np.ix_(keep, keep)]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(sub.ravel())
    n = layout.n_dofs
    matrix = sps.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
    return HmmSystem(matrix=matrix, rhs=None, layout=layout,
                     local_ops=ops_list, alpha=alpha, quadrature_degree=5,
                     mesh_hash=mesh.content_hash())


def _integrate_source(mesh, k, f):
    pts, wts = cell_quadrature(mesh, k)
    vals = np.array([f(p[0], p[1]) for p in pts], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureFailure(f"source term non-finite in cell {k}")
    return wts @ vals, pts, wts, vals


def rhs_standard(mesh, f, layout=None):
    """Source vector for the piecewise-constant reconstruction:
    cell entries are the integrals of f, edge entries are zero."""
    layout = layout or DofLayout.from_mesh(mesh)
    b = np.zeros(layout.n_dofs)
    for k in range(mesh.n_cells):
        b[k] = _integrate_source(mesh, k, f)[0]
    return b


def first_moments(mesh, f):
    """Per-cell moments m_K = integral of f(x) (x - x_K) over K.

    Uses the shared cell quadrature, so every consumer (the modified
    source vector, the flux-defect audit) sees bitwise identical numbers.
    """
    out = np.empty((mesh.n_cells, 2))
    for k in range(mesh.n_cells):
        _, pts, wts, vals = _integrate_source(mesh, k, f)
        out[k] = ((pts - mesh.cell_points[k]) * (wts * vals)[:, None]).sum(axis=0)
    return out


def rhs_modified(mesh, f, layout=None, moments=None):
    """Source vector for the affine reconstruction.

    Cell entries are unchanged; each interior edge collects
    (|sigma|/|K|) n_{K,sigma} . m_K from both incident cells, which is the
    pairing of f with the affine part of the reconstruction.
    """
    layout = layout or DofLayout.from_mesh(mesh)
    b = rhs_standard(mesh, f, layout)
    m = first_moments(mesh, f) if moments is None else moments
    for k in range(mesh.n_cells):
        edges = mesh.cell_edges[k]
        dofs = layout.edge_dof[edges]
        contrib = (mesh.edge_lengths[edges] / mesh.cell_measures[k]) * (
            mesh.cell_normals[k] @ m[k])
        for dof, c in zip(dofs, contrib):
            if dof >= 0:
                b[dof] += c
    return b


def solve(system, rhs=None):
    """Solve the assembled system to a residual of 1e-12 relative.

    Uses a sparse direct factorisation by default and diagonally
    preconditioned conjugate gradients beyond 3e5 unknowns.
    """
    if rhs is None:
        rhs = system.rhs
    if rhs is None:
        raise LayoutMismatch("system has no right-hand side")
    rhs = np.asarray(rhs, dtype=float)
    n = system.layout.n_dofs
    if rhs.shape != (n,):
        raise LayoutMismatch("rhs length does not match the dof layout")
    A = system.matrix
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return DiscreteField(system.layout, np.zeros(n))
    if n <= _DIRECT_SOLVE_MAX_N:
        try:
            x = spla.splu(A.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
    else:
        d = A.diagonal()
        M = sps.diags(1.0 / d)
        x, info = spla.cg(A, rhs, rtol=1e-14, atol=0.0, M=M, maxiter=50 * n)
        if info != 0:
            raise NoConvergence(f"conjugate gradients stopped with info={info}")
    residual = np.linalg.norm(A @ x - rhs)
    if not np.isfinite(residual) or residual > 1e-12 * bnorm:
        raise NoConvergence(
            f"solver residual {residual:.3e} exceeds 1e-12 * ||b||")
    return DiscreteField(system.layout, x)


# -- reconstructions ----------------------------------------------------------------

@dataclass
class Reconstruction:
    """Function, affine and gradient reconstructions of a discrete field."""

    pi_d: np.ndarray          # cellwise constants (n_cells,)
    pi_d_star_grad: np.ndarray   # affine slope per cell (n_cells, 2)
    grad_k: np.ndarray        # cellwise constant gradients (n_cells, 2)
    grad_d: list              # per cell: (m, 2) cone gradients
    cell_points: np.ndarray

    def pi_d_star(self, k, points):
        """Evaluate the affine reconstruction of cell k at (n, 2) points."""
        points = np.atleast_2d(points)
        return self.pi_d[k] + (points - self.cell_points[k]) @ self.pi_d_star_grad[k]


def reconstruct(u, mesh, alpha=1.0, local_ops=None):
    """All reconstructions of ``u``: piecewise constants, the cellwise
    affine lift, the constant cell gradients and the cone gradients."""
    layout = DofLayout.from_mesh(mesh)
    if u.layout != layout:
        raise LayoutMismatch("field does not match this mesh")
    cell_vals = u.cell_values
    edge_vals = u.edge_values()
    grad_k = np.empty((mesh.n_cells, 2))
    grad_d = []
    for k in range(mesh.n_cells):
        ops = local_ops[k] if local_ops is not None else local_operators(
            mesh, k, np.eye(2), alpha)
        delta = cell_deltas(mesh, k, cell_vals, edge_vals)
        grad_k[k] = cell_gradient(ops, delta)
        grad_d.append(cone_gradients(ops, mesh, delta))
    return Reconstruction(pi_d=cell_vals.copy(), pi_d_star_grad=grad_k.copy(),
                          grad_k=grad_k, grad_d=grad_d,
                          cell_points=mesh.cell_points)


def interpolate(phi, mesh):
    """Interpolant of a smooth function: point value at x_K per cell,
    3-point Gauss average along each interior edge.  ``phi`` is assumed
    to vanish on the boundary, matching the pinned boundary unknowns."""
    layout = DofLayout.from_mesh(mesh)
    values = np.zeros(layout.n_dofs)
    for k in range(mesh.n_cells):
        values[k] = phi(mesh.cell_points[k][0], mesh.cell_points[k][1])
    for e in mesh.interior_edges:
        va, vb = mesh.vertices[mesh.edge_vertices[e]]
        pts, wts = edge_quadrature(va, vb)
        avg = (wts @ np.array([phi(p[0], p[1]) for p in pts])) / mesh.edge_lengths[e]
        values[layout.edge_dof[e]] = avg
    return DiscreteField(layout, values)


def interpolation_error(phi, grad_phi, field, mesh, alpha):
    """Interpolation quality split into its two orders of approximation.

    Returns ``(function_part, gradient_part, combined)`` where the
    function part is the L2 distance of the affine reconstruction to phi,
    the gradient part is the L2 distance of the cone gradients to
    grad phi, and combined = function_part + alpha * gradient_part.
    """
    rec = reconstruct(field, mesh, alpha)
    func_sq = 0.0
    grad_sq = 0.0
    for k in range(mesh.n_cells):
        ids = mesh.cell_vertices[k]
        coords = mesh.vertices[ids]
        xk = mesh.cell_points[k]
        m = len(ids)
        for i in range(m):
            pts, wts = triangle_quadrature(xk, coords[i], coords[(i + 1) % m])
            vals = rec.pi_d_star(k, pts) - np.array(
                [phi(p[0], p[1]) for p in pts])
            func_sq += wts @ vals ** 2
            gdiff = rec.grad_d[k][i][None, :] - np.array(
                [grad_phi(p[0], p[1]) for p in pts])
            grad_sq += wts @ np.sum(gdiff ** 2, axis=1)
    func = float(np.sqrt(func_sq))
    grad = float(np.sqrt(grad_sq))
    return func, grad, func + alpha * grad
