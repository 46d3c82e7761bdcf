"""Immutable 2D polytopal mesh: cells, shared edges and derived geometry.

A mesh is built from vertex coordinates, per-cell CCW vertex lists and one
point strictly inside each cell.  Edges are deduplicated by endpoint set
and stored once; the per-side data (outward normal, orthogonal distance
``d_{K,sigma}``) lives on the cell side of the incidence so the two sides
of an interior edge never alias.  All arrays are frozen after build.

Geometry conventions:
  * cell measure by the shoelace formula over the CCW vertex loop,
  * ``d_{K,sigma} = (x - x_K) . n_{K,sigma}`` for any x on the edge,
  * the cone of cell K over edge sigma has area ``|sigma| d_{K,sigma} / 2``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCell, MeshFormatError, NonConforming, NonStarShaped

_CLOSURE_RTOL = 1e-12      # polygon closure, relative to perimeter
_CONE_RTOL = 1e-12         # cone areas vs cell measure
_EDGE_DIST_RTOL = 1e-12    # d_{K,sigma} agreement between edge endpoints
_TILING_RTOL = 1e-10       # sum of cell measures vs domain area


@dataclass(frozen=True)
class Violation:
    """One violated mesh invariant, with the entity it concerns."""

    kind: str
    entity: str
    index: int
    magnitude: float
    detail: str = ""

    def __str__(self):
        return f"{self.kind}[{self.entity} {self.index}] {self.detail} ({self.magnitude:.3e})"


@dataclass(frozen=True)
class RegularityReport:
    """Mesh regularity factor and its per-term breakdown."""

    theta: float
    interior_ratio: float
    cell_term: float
    max_h_over_d: float
    max_edge_count: int


class PolytopalMesh:
    """Polytopal mesh with derived edge geometry.  Immutable after build."""

    def __init__(self, vertices, cell_vertices, cell_points, cell_measures,
                 cell_centroids, cell_diameters, cell_edges, cell_normals,
                 cell_edge_dists, edge_vertices, edge_lengths, edge_midpoints,
                 edge_cells, meta=None):
        self.vertices = vertices
        self.cell_vertices = cell_vertices
        self.cell_points = cell_points
        self.cell_measures = cell_measures
        self.cell_centroids = cell_centroids
        self.cell_diameters = cell_diameters
        self.cell_edges = cell_edges
        self.cell_normals = cell_normals
        self.cell_edge_dists = cell_edge_dists
        self.edge_vertices = edge_vertices
        self.edge_lengths = edge_lengths
        self.edge_midpoints = edge_midpoints
        self.edge_cells = edge_cells
        self.meta = dict(meta) if meta else {}

        self.boundary_edges = np.flatnonzero(edge_cells[:, 1] < 0)
        self.interior_edges = np.flatnonzero(edge_cells[:, 1] >= 0)
        self.h_mesh = float(np.max(cell_diameters))

        for arr in (self.vertices, self.cell_points, self.cell_measures,
                    self.cell_centroids, self.cell_diameters,
                    self.edge_vertices, self.edge_lengths,
                    self.edge_midpoints, self.edge_cells,
                    self.boundary_edges, self.interior_edges):
            arr.setflags(write=False)
        for group in (self.cell_vertices, self.cell_edges,
                      self.cell_normals, self.cell_edge_dists):
            for arr in group:
                arr.setflags(write=False)

    @property
    def n_cells(self):
        return len(self.cell_vertices)

    @property
    def n_edges(self):
        return len(self.edge_lengths)

    @property
    def n_vertices(self):
        return len(self.vertices)

    def cone_areas(self, k):
        """Areas of the cones of cell k, one per local edge."""
        e = self.cell_edges[k]
        return 0.5 * self.edge_lengths[e] * self.cell_edge_dists[k]

    def edge_side(self, e, k):
        """Local index of edge ``e`` within cell ``k``."""
        loc = np.flatnonzero(self.cell_edges[k] == e)
        if len(loc) != 1:
            raise NonConforming(f"edge {e} not incident to cell {k} exactly once")
        return int(loc[0])

    def domain_area(self):
        """Area enclosed by the boundary edges (divergence theorem)."""
        total = 0.0
        for e in self.boundary_edges:
            k = self.edge_cells[e, 0]
            n = self.cell_normals[k][self.edge_side(e, k)]
            total += 0.5 * self.edge_lengths[e] * (self.edge_midpoints[e] @ n)
        return total

    def content_hash(self):
        """Hash of the geometric content, for reproducibility metadata."""
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        for ids in self.cell_vertices:
            h.update(ids.tobytes())
        h.update(self.cell_points.tobytes())
        return h.hexdigest()[:16]


def _shoelace(coords):
    # Recentre at the first vertex: translation-invariant in exact
    # arithmetic, and avoids cancellation for small cells far from the origin.
    local = coords - coords[0]
    x = local[:, 0]
    y = local[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _polygon_centroid(coords, area):
    local = coords - coords[0]
    x = local[:, 0]
    y = local[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return coords[0] + np.array([cx, cy])


def _polygon_diameter(coords):
    diff = coords[:, None, :] - coords[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff ** 2, axis=-1))))


def build_mesh(vertices, cells, cell_points, meta=None, strict=True):
    """Build a :class:`PolytopalMesh` from raw arrays.

    Parameters
    ----------
    vertices : (nv, 2) array of vertex coordinates.
    cells : sequence of CCW vertex-id lists, one per cell (>= 3 distinct ids).
    cell_points : (nc, 2) array, one point strictly inside each cell.
    meta : optional dict recorded on the mesh (generator provenance).
    strict : raise on the first violated invariant.  With ``strict=False``
        geometry is derived as far as possible and problems are left for
        :func:`validate`; structurally impossible input (an edge with more
        than two incident cells) still raises.

    Raises
    ------
    DegenerateCell, NonStarShaped, NonConforming
    """
    vertices = np.array(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshFormatError("vertices must be an (n, 2) array")
    if not np.all(np.isfinite(vertices)):
        raise DegenerateCell("non-finite vertex coordinate")
    if len(cells) == 0:
        raise DegenerateCell("mesh must contain at least one cell")
    cell_points = np.array(cell_points, dtype=float)
    if cell_points.shape != (len(cells), 2):
        raise MeshFormatError("cell_points must match the number of cells")
    if strict and not np.all(np.isfinite(cell_points)):
        bad = int(np.flatnonzero(~np.isfinite(cell_points).all(axis=1))[0])
        raise NonStarShaped(f"cell {bad} has a non-finite cell point")

    nc = len(cells)
    cell_vertices = []
    measures = np.empty(nc)
    centroids = np.empty((nc, 2))
    diameters = np.empty(nc)

    for k, ids in enumerate(cells):
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) < 3:
            raise DegenerateCell(f"cell {k} has fewer than 3 vertices")
        if np.any(ids < 0) or np.any(ids >= len(vertices)):
            raise MeshFormatError(f"cell {k} references an unknown vertex")
        if len(np.unique(ids)) != len(ids):
            if strict:
                raise DegenerateCell(f"cell {k} repeats a vertex")
        cell_vertices.append(ids)
        coords = vertices[ids]
        area = _shoelace(coords)
        if strict and area <= 0.0:
            raise DegenerateCell(
                f"cell {k} has measure {area:.3e}; vertices must be distinct and CCW")
        measures[k] = area
        with np.errstate(all="ignore"):
            centroids[k] = _polygon_centroid(coords, area) if area != 0 else coords.mean(axis=0)
        diameters[k] = _polygon_diameter(coords)

    # Deduplicate edges by endpoint set, first-seen order.
    edge_index = {}
    edge_list = []           # canonical (a, b) with a < b
    incidences = []          # per edge: list of (cell, local index, same_dir)
    cell_edge_ids = []
    for k, ids in enumerate(cell_vertices):
        m = len(ids)
        eids = np.empty(m, dtype=np.int64)
        for i in range(m):
            a, b = int(ids[i]), int(ids[(i + 1) % m])
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edge_list)
                edge_index[key] = e
                edge_list.append(key)
                incidences.append([])
            if len(incidences[e]) >= 2:
                raise NonConforming(
                    f"edge {key} is shared by more than two cells")
            incidences[e].append((k, i, a < b))
            eids[i] = e
        cell_edge_ids.append(eids)

    ne = len(edge_list)
    edge_vertices = np.array(edge_list, dtype=np.int64).reshape(ne, 2)
    va = vertices[edge_vertices[:, 0]]
    vb = vertices[edge_vertices[:, 1]]
    edge_lengths = np.linalg.norm(vb - va, axis=1)
    edge_midpoints = 0.5 * (va + vb)
    if strict and np.any(edge_lengths <= 0.0):
        bad = int(np.argmin(edge_lengths))
        raise DegenerateCell(f"edge {tuple(edge_vertices[bad])} has zero length")

    # Unit normal of the canonical direction a->b, rotated to the right;
    # a cell traversing a->b in CCW order has this as its outward normal.
    with np.errstate(all="ignore"):
        tangents = (vb - va) / edge_lengths[:, None]
    canon_normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])

    edge_cells = np.full((ne, 2), -1, dtype=np.int64)
    for e, inc in enumerate(incidences):
        for slot, (k, _, _) in enumerate(inc):
            edge_cells[e, slot] = k

    cell_normals = []
    cell_edge_dists = []
    for k, eids in enumerate(cell_edge_ids):
        m = len(eids)
        normals = np.empty((m, 2))
        dists = np.empty(m)
        for i, e in enumerate(eids):
            same_dir = next(s for (c, li, s) in incidences[e] if c == k and li == i)
            n = canon_normals[e] if same_dir else -canon_normals[e]
            normals[i] = n
            dists[i] = (edge_midpoints[e] - cell_points[k]) @ n
        cell_normals.append(normals)
        cell_edge_dists.append(dists)
        if strict:
            if np.any(dists <= 0.0):
                bad = int(np.argmin(dists))
                raise NonStarShaped(
                    f"cell {k}: cell point gives d_K,sigma = {dists[bad]:.3e} "
                    f"on edge {eids[bad]}")
            _check_cell_geometry(k, vertices, cell_vertices[k], eids,
                                 normals, dists, cell_points[k],
                                 edge_lengths, edge_vertices,
                                 measures[k], diameters[k])

    mesh = PolytopalMesh(
        vertices, tuple(cell_vertices), cell_points, measures, centroids,
        diameters, tuple(cell_edge_ids), tuple(cell_normals),
        tuple(cell_edge_dists), edge_vertices, edge_lengths, edge_midpoints,
        edge_cells, meta=meta)

    if strict:
        total = float(np.sum(measures))
        domain = mesh.domain_area()
        if abs(total - domain) > _TILING_RTOL * abs(domain):
            raise NonConforming(
                f"cells do not tile the domain: sum |K| = {total!r}, "
                f"boundary area = {domain!r}")
    return mesh


def _check_cell_geometry(k, vertices, ids, eids, normals, dists, xk,
                         edge_lengths, edge_vertices, measure, diameter):
    lens = edge_lengths[eids]
    closure = np.linalg.norm(lens @ normals)
    if closure > _CLOSURE_RTOL * np.sum(lens):
        raise DegenerateCell(f"cell {k} boundary does not close ({closure:.3e})")
    cone_sum = 0.5 * np.sum(lens * dists)
    if abs(cone_sum - measure) > _CONE_RTOL * abs(measure):
        raise NonStarShaped(
            f"cell {k}: cone areas sum to {cone_sum!r}, measure is {measure!r}")
    for i, e in enumerate(eids):
        for v in edge_vertices[e]:
            d_v = (vertices[v] - xk) @ normals[i]
            if abs(d_v - dists[i]) > _EDGE_DIST_RTOL * diameter:
                raise NonConforming(
                    f"cell {k} edge {e}: d from endpoint {v} differs "
                    f"by {abs(d_v - dists[i]):.3e}")


def validate(mesh):
    """Re-check every mesh invariant; return the list of violations.

    An empty list means the mesh is valid.  Unlike :func:`build_mesh` this
    never raises, so it can audit meshes built with ``strict=False`` or
    loaded from disk.
    """
    out = []
    for e in range(mesh.n_edges):
        if not mesh.edge_lengths[e] > 0.0:
            out.append(Violation("DegenerateCell", "edge", int(e),
                                 float(mesh.edge_lengths[e]),
                                 "zero-length or non-finite edge"))
    for k in range(mesh.n_cells):
        ids = mesh.cell_vertices[k]
        if len(np.unique(ids)) != len(ids):
            out.append(Violation("DegenerateCell", "cell", k,
                                 float(len(ids) - len(np.unique(ids))),
                                 "repeated vertex"))
            continue
        area = mesh.cell_measures[k]
        if not area > 0.0:
            out.append(Violation("DegenerateCell", "cell", k, float(area),
                                 "non-positive measure (input must be CCW)"))
            continue
        dists = mesh.cell_edge_dists[k]
        if not np.all(np.isfinite(dists)) or not np.all(
                np.isfinite(mesh.cell_points[k])):
            out.append(Violation("NonStarShaped", "cell", k, float("nan"),
                                 "non-finite cell point or edge distance"))
            continue
        if np.any(dists <= 0.0):
            i = int(np.argmin(dists))
            out.append(Violation("NonStarShaped", "cell", k, float(dists[i]),
                                 f"cell point outside (edge {mesh.cell_edges[k][i]})"))
        lens = mesh.edge_lengths[mesh.cell_edges[k]]
        closure = float(np.linalg.norm(lens @ mesh.cell_normals[k]))
        if closure > _CLOSURE_RTOL * float(np.sum(lens)):
            out.append(Violation("DegenerateCell", "cell", k, closure,
                                 "boundary normals do not close"))
        cone_sum = float(0.5 * np.sum(lens * dists))
        if abs(cone_sum - area) > _CONE_RTOL * abs(area):
            out.append(Violation("NonStarShaped", "cell", k,
                                 abs(cone_sum - area) / abs(area),
                                 "cone areas do not sum to the measure"))
    for e in mesh.interior_edges:
        k, l = mesh.edge_cells[e]
        nk = mesh.cell_normals[k][mesh.edge_side(e, k)]
        nl = mesh.cell_normals[l][mesh.edge_side(e, l)]
        defect = float(np.linalg.norm(nk + nl))
        if defect != 0.0:
            out.append(Violation("NonConforming", "edge", int(e), defect,
                                 "interior normals are not exact negations"))
    total = float(np.sum(mesh.cell_measures))
    domain = mesh.domain_area()
    if abs(total - domain) > _TILING_RTOL * abs(domain):
        out.append(Violation("NonConforming", "mesh", 0,
                             abs(total - domain) / abs(domain),
                             "cells do not tile the domain"))
    return out


def regularity_theta(mesh):
    """Regularity factor: interior-edge distance ratio plus the worst
    cell term (max ``h_K / d_{K,sigma}`` plus the edge count).

    The interior-edge term is an empty max when the mesh has no interior
    edges; it is then taken as 0 so single-cell meshes remain usable.
    """
    if mesh.n_cells == 0:
        raise DegenerateCell("regularity factor of an empty mesh")
    ratio = 0.0
    for e in mesh.interior_edges:
        k, l = mesh.edge_cells[e]
        dk = mesh.cell_edge_dists[k][mesh.edge_side(e, k)]
        dl = mesh.cell_edge_dists[l][mesh.edge_side(e, l)]
        ratio = max(ratio, dk / dl, dl / dk)
    cell_term = 0.0
    max_h_over_d = 0.0
    max_card = 0
    for k in range(mesh.n_cells):
        h_over_d = float(mesh.cell_diameters[k] / np.min(mesh.cell_edge_dists[k]))
        card = len(mesh.cell_edges[k])
        cell_term = max(cell_term, h_over_d + card)
        max_h_over_d = max(max_h_over_d, h_over_d)
        max_card = max(max_card, card)
    return RegularityReport(theta=ratio + cell_term, interior_ratio=ratio,
                            cell_term=cell_term, max_h_over_d=max_h_over_d,
                            max_edge_count=max_card)


# -- text format ---------------------------------------------------------------

_HEADER = "polyfv-mesh v1"


def _fmt(x):
    return format(float(x), ".17g")


def write_mesh(mesh, path):
    """Write the line-oriented text format (17-significant-digit floats)."""
    lines = [_HEADER]
    for key in sorted(mesh.meta):
        lines.append(f"meta {key} {json.dumps(mesh.meta[key], separators=(',', ':'))}")
    lines.append(f"vertices {mesh.n_vertices}")
    for v in mesh.vertices:
        lines.append(f"{_fmt(v[0])} {_fmt(v[1])}")
    lines.append(f"cells {mesh.n_cells}")
    for ids in mesh.cell_vertices:
        lines.append(" ".join([str(len(ids))] + [str(int(i)) for i in ids]))
    lines.append(f"cellpoints {mesh.n_cells}")
    for p in mesh.cell_points:
        lines.append(f"{_fmt(p[0])} {_fmt(p[1])}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Parse the text format and rebuild the mesh (all invariants re-derived)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise MeshFormatError(f"missing '{_HEADER}' header")
    pos = 1
    meta = {}
    while pos < len(lines) and lines[pos].startswith("meta "):
        _, key, value = lines[pos].split(" ", 2)
        meta[key] = json.loads(value)
        pos += 1

    def expect_section(name):
        nonlocal pos
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshFormatError(f"expected '{name} <n>' at line {pos + 1}")
        pos += 1
        return int(parts[1])

    nv = expect_section("vertices")
    vertices = np.array([[float(t) for t in lines[pos + i].split()] for i in range(nv)])
    pos += nv
    nc = expect_section("cells")
    cells = []
    for i in range(nc):
        parts = [int(t) for t in lines[pos + i].split()]
        if parts[0] != len(parts) - 1:
            raise MeshFormatError(f"cell line {pos + i + 1}: vertex count mismatch")
        cells.append(parts[1:])
    pos += nc
    np_ = expect_section("cellpoints")
    if np_ != nc:
        raise MeshFormatError("cellpoints count differs from cell count")
    points = np.array([[float(t) for t in lines[pos + i].split()] for i in range(nc)])
    return build_mesh(vertices, cells, points, meta=meta)
