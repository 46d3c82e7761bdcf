"""Shared quadrature rules.

Cells are integrated by fanning them into the cones with apex at the cell
point (valid by star-shapedness) and applying a degree-5 symmetric 7-point
rule on each sub-triangle.  Edges use 3-point Gauss (degree 5).  These two
rules are the single source of quadrature in the library so that quantities
computed in different modules (source moments, flux defects) agree bitwise.
"""
from __future__ import annotations

import numpy as np

from .errors import QuadratureFailure

_SQRT15 = np.sqrt(15.0)

# Degree-5 rule on the reference triangle, barycentric coordinates and
# weights relative to the triangle area.
_A1 = (6.0 - _SQRT15) / 21.0
_A2 = (6.0 + _SQRT15) / 21.0
_W0 = 9.0 / 40.0
_W1 = (155.0 - _SQRT15) / 1200.0
_W2 = (155.0 + _SQRT15) / 1200.0

TRI5_BARY = np.array([
    [1/3, 1/3, 1/3],
    [1 - 2*_A1, _A1, _A1],
    [_A1, 1 - 2*_A1, _A1],
    [_A1, _A1, 1 - 2*_A1],
    [1 - 2*_A2, _A2, _A2],
    [_A2, 1 - 2*_A2, _A2],
    [_A2, _A2, 1 - 2*_A2],
])
TRI5_WEIGHTS = np.array([_W0, _W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss-Legendre on [-1, 1].
_GAUSS3_NODES = np.array([-np.sqrt(3.0/5.0), 0.0, np.sqrt(3.0/5.0)])
_GAUSS3_WEIGHTS = np.array([5.0/9.0, 8.0/9.0, 5.0/9.0])


def triangle_quadrature(a, b, c):
    """Points (7,2) and weights (7,) integrating over triangle abc.

    Weights include the triangle area, so ``w @ f(points)`` approximates
    the integral; exact for polynomials up to degree 5.
    """
    verts = np.array([a, b, c], dtype=float)
    pts = TRI5_BARY @ verts
    area = 0.5 * abs(
        (verts[1, 0] - verts[0, 0]) * (verts[2, 1] - verts[0, 1])
        - (verts[1, 1] - verts[0, 1]) * (verts[2, 0] - verts[0, 0])
    )
    return pts, TRI5_WEIGHTS * area


def edge_quadrature(a, b):
    """Points (3,2) and weights (3,) integrating along segment ab."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[None, :] + _GAUSS3_NODES[:, None] * half[None, :]
    return pts, _GAUSS3_WEIGHTS * (0.5 * np.linalg.norm(b - a))


def cell_quadrature(mesh, k):
    """Quadrature over cell ``k``: one degree-5 rule per cone."""
    ids = mesh.cell_vertices[k]
    coords = mesh.vertices[ids]
    xk = mesh.cell_points[k]
    pts = []
    wts = []
    m = len(ids)
    for i in range(m):
        p, w = triangle_quadrature(xk, coords[i], coords[(i + 1) % m])
        pts.append(p)
        wts.append(w)
    return np.vstack(pts), np.concatenate(wts)


def integrate_cell(mesh, k, f):
    """Integral of scalar or vector ``f(x, y)`` over cell ``k``."""
    pts, wts = cell_quadrature(mesh, k)
    vals = np.asarray([f(p[0], p[1]) for p in pts], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise QuadratureFailure(f"non-finite integrand value in cell {k}")
    return wts @ vals


def edge_average(mesh, e, f):
    """Average of ``f(x, y)`` along edge ``e`` (3-point Gauss)."""
    va, vb = mesh.vertices[mesh.edge_vertices[e]]
    pts, wts = edge_quadrature(va, vb)
    vals = np.asarray([f(p[0], p[1]) for p in pts], dtype=float)
    return (wts @ vals) / mesh.edge_lengths[e]
