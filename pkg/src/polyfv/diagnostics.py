"""Patchings of cells and their displacement average, the circumcenter
compensation identities for triangulations, and the weighted projection
that reproduces point values of affine functions at the cell points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateTriangle, InvalidPatching, MetadataMissing,
                     NonConforming, SingularMomentMatrix)
from .quadrature import cell_quadrature


@dataclass
class Patching:
    """Disjoint cell groups; cells in no group are reported as uncovered."""

    patches: list            # list of int arrays
    uncovered: np.ndarray

    def coverage(self, mesh):
        covered = sum(float(np.sum(mesh.cell_measures[p])) for p in self.patches)
        return covered, float(np.sum(mesh.cell_measures[self.uncovered]))


@dataclass(frozen=True)
class PatchingQuality:
    e_G: float               # max over patches of |sum |K| e_K| / |U_P|
    mu_estimate: float       # max cardinality + max h_K / diam(inner ball)
    uncovered_area: float
    per_patch_e: np.ndarray


def _check_patching(mesh, patching):
    seen = np.zeros(mesh.n_cells, dtype=np.int8)
    for p in patching.patches:
        p = np.asarray(p, dtype=np.int64)
        if len(p) == 0:
            raise InvalidPatching("empty patch")
        if np.any(p < 0) or np.any(p >= mesh.n_cells):
            raise InvalidPatching("patch references an unknown cell")
        seen[p] += 1
    unc = np.asarray(patching.uncovered, dtype=np.int64)
    if len(unc):
        if np.any(unc < 0) or np.any(unc >= mesh.n_cells):
            raise InvalidPatching("uncovered set references an unknown cell")
        seen[unc] += 1
    if np.any(seen != 1):
        raise InvalidPatching("patches and uncovered cells must partition the mesh")


def _patch_boundary_segments(mesh, cells):
    """Edges of the union boundary: edges used once within the patch."""
    cells = set(int(c) for c in cells)
    segs = []
    for k in cells:
        for i, e in enumerate(mesh.cell_edges[k]):
            other = mesh.edge_cells[e, 1] if mesh.edge_cells[e, 0] == k else mesh.edge_cells[e, 0]
            if other < 0 or int(other) not in cells:
                segs.append(mesh.vertices[mesh.edge_vertices[e]])
    return segs


def _point_segment_distance(p, a, b):
    t = b - a
    denom = t @ t
    s = np.clip(((p - a) @ t) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + s * t)))


def _inner_ball_diameter(mesh, cells):
    """Lower bound on the largest inscribed ball of the patch union,
    sampling cell points and centroids as candidate centers."""
    segs = _patch_boundary_segments(mesh, cells)
    candidates = [mesh.cell_points[k] for k in cells]
    candidates += [mesh.cell_centroids[k] for k in cells]
    w = mesh.cell_measures[list(cells)]
    candidates.append((mesh.cell_centroids[list(cells)] * w[:, None]).sum(axis=0) / w.sum())
    best = 0.0
    for c in candidates:
        r = min(_point_segment_distance(c, a, b) for a, b in segs)
        best = max(best, r)
    return 2.0 * best


def evaluate_patching(mesh, patching):
    """Displacement average e_G, regularity estimate and uncovered area."""
    _check_patching(mesh, patching)
    e_cells = mesh.cell_centroids - mesh.cell_points
    per_patch = np.empty(len(patching.patches))
    mu_card = 0
    mu_ball = 0.0
    for i, p in enumerate(patching.patches):
        p = np.asarray(p, dtype=np.int64)
        w = mesh.cell_measures[p]
        per_patch[i] = np.linalg.norm((e_cells[p] * w[:, None]).sum(axis=0)) / w.sum()
        mu_card = max(mu_card, len(p))
        diam = _inner_ball_diameter(mesh, p)
        mu_ball = max(mu_ball, float(np.max(mesh.cell_diameters[p])) / diam)
    uncovered_area = float(np.sum(mesh.cell_measures[np.asarray(
        patching.uncovered, dtype=np.int64)])) if len(patching.uncovered) else 0.0
    return PatchingQuality(e_G=float(per_patch.max(initial=0.0)),
                           mu_estimate=mu_card + mu_ball,
                           uncovered_area=uncovered_area,
                           per_patch_e=per_patch)


def trivial_patching(mesh):
    """Every cell is its own patch."""
    return Patching([np.array([k]) for k in range(mesh.n_cells)],
                    np.array([], dtype=np.int64))


def pair_patching(mesh):
    """Horizontal neighbour pairs of a checkerboard cartesian grid.

    Pairs cells (2i, j) and (2i+1, j), which carry opposite shifts; an odd
    trailing column is left uncovered.
    """
    meta = mesh.meta
    if meta.get("family") != "cartesian":
        raise MetadataMissing("pair patching needs a cartesian mesh with metadata")
    nx, ny = meta["nx"], meta["ny"]
    patches = []
    uncovered = []
    for j in range(ny):
        for i in range(0, nx - 1, 2):
            patches.append(np.array([j * nx + i, j * nx + i + 1]))
        if nx % 2 == 1:
            uncovered.append(j * nx + nx - 1)
    return Patching(patches, np.array(uncovered, dtype=np.int64))


def tile_patching(mesh):
    """Patches from generator tiles.

    Translation meshes group one patch per tile.  Symmetry meshes group
    2x2 blocks of tiles (the displacement of a reflected tile negates
    componentwise, so a block cancels); with an odd tile count the
    trailing row and column go to the uncovered set.
    """
    meta = mesh.meta
    family = meta.get("family")
    if family not in ("translation", "symmetry") or "tile_of_cell" not in meta:
        raise MetadataMissing("tile patching needs a translation or symmetry mesh")
    tile_of_cell = np.asarray(meta["tile_of_cell"], dtype=np.int64)
    N = meta["N"]
    if family == "translation":
        patches = [np.flatnonzero(tile_of_cell == t) for t in range(N * N)]
        return Patching(patches, np.array([], dtype=np.int64))
    patches = []
    uncovered = []
    half = N // 2
    for bj in range(half):
        for bi in range(half):
            tiles = [(2 * bj + dj) * N + (2 * bi + di)
                     for dj in range(2) for di in range(2)]
            patches.append(np.flatnonzero(np.isin(tile_of_cell, tiles)))
    if N % 2 == 1:
        border = [j * N + i for j in range(N) for i in range(N)
                  if i == N - 1 or j == N - 1]
        uncovered = np.flatnonzero(np.isin(tile_of_cell, border))
    return Patching(patches, np.asarray(uncovered, dtype=np.int64))


# -- circumcenter compensation ---------------------------------------------------

def _bisector_circumcenter(a, b, c):
    """Circumcenter via the two perpendicular bisector equations (kept
    independent of the closed-form generator formula)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    M = np.array([b - a, c - a])
    if abs(np.linalg.det(M)) <= 1e-14 * max(np.linalg.norm(b - a),
                                            np.linalg.norm(c - a)) ** 2:
        raise DegenerateTriangle("collinear points")
    rhs = np.array([(b - a) @ (a + b) / 2.0, (c - a) @ (a + c) / 2.0])
    return np.linalg.solve(M, rhs)


def circumcenter_identity(a, b, c):
    """Both sides of the triangle identity
    ``|T| c_T = sum_sigma |sigma| (|v1|^2 + |v2|^2)/4 n_{T,sigma}``.

    The left side uses the perpendicular-bisector circumcenter, the right
    side only edge data; they agree up to roundoff.
    """
    pts = [np.asarray(p, dtype=float) for p in (a, b, c)]
    area = 0.5 * ((pts[1] - pts[0])[0] * (pts[2] - pts[0])[1]
                  - (pts[1] - pts[0])[1] * (pts[2] - pts[0])[0])
    if area < 0:
        pts = [pts[0], pts[2], pts[1]]
        area = -area
    if area == 0.0:
        raise DegenerateTriangle("zero-area triangle")
    lhs = area * _bisector_circumcenter(*pts)
    rhs = np.zeros(2)
    for i in range(3):
        v1, v2 = pts[i], pts[(i + 1) % 3]
        t = v2 - v1
        n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        rhs += np.linalg.norm(t) * (v1 @ v1 + v2 @ v2) / 4.0 * n
    return lhs, rhs


def boundary_compensation(mesh):
    """Both sides of the compensation identity over a triangulated polygon:
    the sum of |T| (c_T - xbar_T) equals a boundary-only sum built from
    the squared vertex distances to the polygon centroid.
    """
    for ids in mesh.cell_vertices:
        if len(ids) != 3:
            raise NonConforming("compensation identity needs a triangulation")
    total_area = float(np.sum(mesh.cell_measures))
    xq = (mesh.cell_centroids * mesh.cell_measures[:, None]).sum(axis=0) / total_area
    lhs = np.zeros(2)
    for k in range(mesh.n_cells):
        tri = mesh.vertices[mesh.cell_vertices[k]]
        c = _bisector_circumcenter(*tri)
        lhs += mesh.cell_measures[k] * (c - mesh.cell_centroids[k])
    rhs = np.zeros(2)
    for e in mesh.boundary_edges:
        k = mesh.edge_cells[e, 0]
        n = mesh.cell_normals[k][mesh.edge_side(e, k)]
        v1, v2 = mesh.vertices[mesh.edge_vertices[e]]
        w1 = (v1 - xq) @ (v1 - xq)
        w2 = (v2 - xq) @ (v2 - xq)
        rhs += mesh.edge_lengths[e] * (w1 + w2) / 4.0 * n
    return lhs, rhs


# -- weighted projector ------------------------------------------------------------

@dataclass
class WeightedProjector:
    """Affine weights w_K = 1 + xi_K . (x - xbar_K) with moments matching
    the cell point: the weighted average of any affine function is its
    value at x_K."""

    mesh: object
    xi: np.ndarray           # (n_cells, 2)

    def weight(self, k, points):
        points = np.atleast_2d(points)
        return 1.0 + (points - self.mesh.cell_centroids[k]) @ self.xi[k]

    def apply(self, phi):
        """Cellwise weighted averages (1/|K|) integral of phi * w_K."""
        mesh = self.mesh
        out = np.empty(mesh.n_cells)
        for k in range(mesh.n_cells):
            pts, wts = cell_quadrature(mesh, k)
            vals = np.array([phi(p[0], p[1]) for p in pts])
            out[k] = (wts @ (vals * self.weight(k, pts))) / mesh.cell_measures[k]
        return out

    def sup_norms(self):
        """max |w_K| over the vertices and the cell point of each cell
        (affine functions attain extrema at extreme points)."""
        mesh = self.mesh
        out = np.empty(mesh.n_cells)
        for k in range(mesh.n_cells):
            pts = np.vstack([mesh.vertices[mesh.cell_vertices[k]],
                             mesh.cell_points[k][None, :]])
            out[k] = np.abs(self.weight(k, pts)).max()
        return out


def weighted_projector(mesh):
    """Solve the per-cell moment system J_K xi = |K| (x_K - xbar_K)."""
    xi = np.empty((mesh.n_cells, 2))
    for k in range(mesh.n_cells):
        pts, wts = cell_quadrature(mesh, k)
        d = pts - mesh.cell_centroids[k]
        J = (d[:, :, None] * d[:, None, :] * wts[:, None, None]).sum(axis=0)
        rhs = mesh.cell_measures[k] * (mesh.cell_points[k] - mesh.cell_centroids[k])
        try:
            xi[k] = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMomentMatrix(f"cell {k}: {exc}") from exc
    return WeightedProjector(mesh=mesh, xi=xi)
