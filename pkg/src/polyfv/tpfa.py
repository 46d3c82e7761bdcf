"""Two-point flux approximation on admissible meshes, cell unknowns only.

Interior transmissibility uses the harmonic-style average
``tau = |sigma| a_K a_L / (a_K d_{L,sigma} + a_L d_{K,sigma})``; boundary
edges use ``|sigma| a_K / d_{K,sigma}``.  The matrix is a symmetric
M-matrix, so solutions of nonnegative sources are nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import (NonPositiveCoefficient, NotAdmissible, QuadratureFailure,
                     SingularSystem)
from .quadrature import cell_quadrature

ORTHOGONALITY_TOL = 1e-10   # radians


@dataclass(frozen=True)
class AdmissibilityReport:
    """Orthogonality defects per interior edge, boundary projection checks."""

    interior_defects: np.ndarray      # angle in radians per interior edge
    boundary_ok: np.ndarray           # per boundary edge
    passed: bool

    @property
    def max_defect(self):
        return float(self.interior_defects.max()) if len(self.interior_defects) else 0.0


@dataclass(frozen=True)
class Transmissibilities:
    tau: np.ndarray      # per edge
    a_K: np.ndarray      # per cell


def check_admissible(mesh, tol=ORTHOGONALITY_TOL):
    """Angle between (x_K x_L) and the edge normal for interior edges;
    for boundary edges, whether x_K projects orthogonally into the edge."""
    defects = np.zeros(len(mesh.interior_edges))
    for idx, e in enumerate(mesh.interior_edges):
        k, l = mesh.edge_cells[e]
        seg = mesh.cell_points[l] - mesh.cell_points[k]
        n = mesh.cell_normals[k][mesh.edge_side(e, k)]
        cross = abs(seg[0] * n[1] - seg[1] * n[0])
        dot = seg @ n
        defects[idx] = float(np.arctan2(cross, dot))
    boundary_ok = np.zeros(len(mesh.boundary_edges), dtype=bool)
    for idx, e in enumerate(mesh.boundary_edges):
        k = mesh.edge_cells[e, 0]
        va, vb = mesh.vertices[mesh.edge_vertices[e]]
        t = vb - va
        s = (mesh.cell_points[k] - va) @ t / (t @ t)
        boundary_ok[idx] = 0.0 <= s <= 1.0
    passed = bool(np.all(defects <= tol) and np.all(boundary_ok))
    return AdmissibilityReport(defects, boundary_ok, passed)


def _cell_averages(mesh, a):
    if not callable(a):
        value = float(a)
        if value <= 0.0:
            raise NonPositiveCoefficient(f"a = {value}")
        return np.full(mesh.n_cells, value)
    out = np.empty(mesh.n_cells)
    for k in range(mesh.n_cells):
        pts, wts = cell_quadrature(mesh, k)
        vals = np.array([a(p[0], p[1]) for p in pts], dtype=float)
        if not np.all(np.isfinite(vals)):
            raise QuadratureFailure(f"coefficient non-finite in cell {k}")
        if np.any(vals <= 0.0):
            raise NonPositiveCoefficient(f"a <= 0 at a quadrature node of cell {k}")
        out[k] = (wts @ vals) / mesh.cell_measures[k]
    return out


def transmissibilities(mesh, a):
    """Edge transmissibilities from the cell averages of ``a``."""
    a_K = _cell_averages(mesh, a)
    tau = np.empty(mesh.n_edges)
    for e in range(mesh.n_edges):
        k, l = mesh.edge_cells[e]
        dk = mesh.cell_edge_dists[k][mesh.edge_side(e, k)]
        if l < 0:
            tau[e] = mesh.edge_lengths[e] * a_K[k] / dk
        else:
            dl = mesh.cell_edge_dists[l][mesh.edge_side(e, l)]
            tau[e] = mesh.edge_lengths[e] * a_K[k] * a_K[l] / (
                a_K[k] * dl + a_K[l] * dk)
    return Transmissibilities(tau=tau, a_K=a_K)


def assemble_and_solve(mesh, a, f, tol=ORTHOGONALITY_TOL):
    """Solve the two-point scheme; returns the cellwise values u_K.

    Raises :class:`NotAdmissible` when the mesh fails the orthogonality
    check, because transmissibilities are then inconsistent.
    """
    report = check_admissible(mesh, tol)
    if not report.passed:
        raise NotAdmissible(
            f"max orthogonality defect {report.max_defect:.3e} rad")
    trans = transmissibilities(mesh, a)
    n = mesh.n_cells
    rows, cols, vals = [], [], []
    for e in mesh.interior_edges:
        k, l = mesh.edge_cells[e]
        t = trans.tau[e]
        rows.extend([k, l, k, l])
        cols.extend([k, l, l, k])
        vals.extend([t, t, -t, -t])
    for e in mesh.boundary_edges:
        k = mesh.edge_cells[e, 0]
        rows.append(k)
        cols.append(k)
        vals.append(trans.tau[e])
    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    b = np.empty(n)
    for k in range(n):
        pts, wts = cell_quadrature(mesh, k)
        fv = np.array([f(p[0], p[1]) for p in pts], dtype=float)
        if not np.all(np.isfinite(fv)):
            raise QuadratureFailure(f"source term non-finite in cell {k}")
        b[k] = wts @ fv
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n)
    try:
        u = spla.splu(A.tocsc()).solve(b)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    return u
