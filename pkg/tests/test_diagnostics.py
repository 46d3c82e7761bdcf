import numpy as np
import pytest

from polyfv import build_mesh, diagnostics, meshgen
from polyfv.errors import (DegenerateTriangle, InvalidPatching,
                           MetadataMissing, NonConforming)


def random_convex_fan(rng, n_sides=None):
    """Conforming fan triangulation of a random star-shaped polygon."""
    n = n_sides or rng.integers(4, 9)
    # evenly spaced directions with bounded jitter keep every angular gap
    # below pi, so the fan from the center is positively oriented
    angles = (np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
              + rng.uniform(-0.3, 0.3, size=n) * (2.0 * np.pi / n))
    radii = rng.uniform(0.5, 1.5, size=n)
    center = rng.uniform(-1.0, 1.0, size=2)
    verts = center + np.column_stack([radii * np.cos(angles),
                                      radii * np.sin(angles)])
    all_verts = np.vstack([verts, center])
    cells = [[i, (i + 1) % n, n] for i in range(n)]
    points = np.array([all_verts[c].mean(axis=0) for c in cells])
    return build_mesh(all_verts, cells, points)


# -- patchings -------------------------------------------------------------------

def test_trivial_patching_centered_grid():
    m = meshgen.cartesian(3, 3)
    q = diagnostics.evaluate_patching(m, diagnostics.trivial_patching(m))
    assert q.e_G == pytest.approx(0.0, abs=1e-15)
    assert q.uncovered_area == 0.0


def test_pair_patching_checkerboard():
    m = meshgen.cartesian(4, 4, meshgen.CheckerboardShift(0.25))
    p = diagnostics.pair_patching(m)
    assert len(p.patches) == 8
    assert len(p.uncovered) == 0
    q = diagnostics.evaluate_patching(m, p)
    assert q.e_G <= 1e-15
    assert q.mu_estimate >= 2.0


def test_uniform_shift_defeats_every_patching():
    m = meshgen.cartesian(4, 4, meshgen.UniformShift((0.25, 0.0)))
    h = 0.25
    for patching in (diagnostics.trivial_patching(m),
                     diagnostics.pair_patching(m)):
        q = diagnostics.evaluate_patching(m, patching)
        assert q.e_G == pytest.approx(0.25 * h, rel=1e-12)


def test_tile_patching_translation():
    m = meshgen.translation_family(meshgen.builtin_unit_square_acute(), 3)
    p = diagnostics.tile_patching(m)
    assert len(p.patches) == 9
    q = diagnostics.evaluate_patching(m, p)
    assert q.e_G <= 1e-13 * m.h_mesh


def test_tile_patching_symmetry_blocks():
    m = meshgen.symmetry_family(meshgen.builtin_unit_square_acute(), 3)
    p = diagnostics.tile_patching(m)
    assert len(p.patches) == 1          # one full 2x2 block
    assert len(p.uncovered) > 0          # border band of tiles
    q = diagnostics.evaluate_patching(m, p)
    assert q.e_G <= 1e-13
    # border band is one tile wide: area 1 - (2/3)^2
    assert q.uncovered_area == pytest.approx(1.0 - 4.0 / 9.0, rel=1e-10)


def test_tile_patching_symmetry_even():
    m = meshgen.symmetry_family(meshgen.builtin_unit_square_acute(), 2)
    p = diagnostics.tile_patching(m)
    assert len(p.patches) == 1
    assert len(p.uncovered) == 0
    q = diagnostics.evaluate_patching(m, p)
    assert q.e_G <= 1e-14


def test_patching_requires_metadata():
    m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]],
                   [[0.5, 0.5]])
    with pytest.raises(MetadataMissing):
        diagnostics.pair_patching(m)
    with pytest.raises(MetadataMissing):
        diagnostics.tile_patching(m)


def test_invalid_patching_rejected():
    m = meshgen.cartesian(2, 2)
    with pytest.raises(InvalidPatching):
        diagnostics.evaluate_patching(
            m, diagnostics.Patching([np.array([0, 1]), np.array([1, 2])],
                                    np.array([3])))
    with pytest.raises(InvalidPatching):
        diagnostics.evaluate_patching(
            m, diagnostics.Patching([np.array([0, 9])], np.array([1, 2, 3])))


def test_e_g_rigid_motion_invariant():
    m = meshgen.cartesian(3, 3, meshgen.CheckerboardShift(0.2))
    patching = diagnostics.pair_patching(m)
    q0 = diagnostics.evaluate_patching(m, patching)
    theta = 0.7
    R = np.array([[np.cos(theta), -np.sin(theta)],
                  [np.sin(theta), np.cos(theta)]])
    shift = np.array([3.0, -1.0])
    moved = build_mesh(m.vertices @ R.T + shift,
                       [list(ids) for ids in m.cell_vertices],
                       m.cell_points @ R.T + shift)
    q1 = diagnostics.evaluate_patching(moved, diagnostics.Patching(
        patching.patches, patching.uncovered))
    assert q1.e_G == pytest.approx(q0.e_G, abs=1e-14)


# -- compensation identities --------------------------------------------------------

def test_circumcenter_identity_right_isoceles():
    lhs, rhs = diagnostics.circumcenter_identity((0, 0), (1, 0), (0, 1))
    assert np.allclose(lhs, [0.25, 0.25], atol=1e-15)
    assert np.allclose(rhs, [0.25, 0.25], atol=1e-14)


def test_circumcenter_identity_centered_equilateral():
    r = 1.0
    pts = [(r * np.cos(a), r * np.sin(a))
           for a in (np.pi / 2, np.pi / 2 + 2 * np.pi / 3, np.pi / 2 + 4 * np.pi / 3)]
    lhs, rhs = diagnostics.circumcenter_identity(*pts)
    assert np.allclose(lhs, 0.0, atol=1e-15)
    assert np.allclose(rhs, 0.0, atol=1e-14)


def test_circumcenter_identity_degenerate():
    with pytest.raises(DegenerateTriangle):
        diagnostics.circumcenter_identity((0, 0), (1, 1), (2, 2))


def test_boundary_compensation_single_triangle():
    tri = build_mesh([[0.2, -0.1], [1.3, 0.4], [0.1, 1.1]], [[0, 1, 2]],
                     [[0.5, 0.45]])
    lhs, rhs = diagnostics.boundary_compensation(tri)
    diam = tri.cell_diameters[0]
    assert np.allclose(lhs, rhs, atol=1e-13 * tri.cell_measures[0] * diam)
    # cross-check against the raw triangle identity recentred at the centroid
    verts = tri.vertices - tri.cell_centroids[0]
    l2, r2 = diagnostics.circumcenter_identity(*verts)
    assert np.allclose(lhs, l2, atol=1e-14)


def test_boundary_compensation_translation_initial_vanishes():
    m = meshgen.builtin_unit_square_acute()
    lhs, rhs = diagnostics.boundary_compensation(m)
    assert np.allclose(lhs, 0.0, atol=1e-14)
    assert np.allclose(rhs, 0.0, atol=1e-13)


def test_boundary_compensation_random_fans():
    rng = np.random.default_rng(31)
    for _ in range(25):
        m = random_convex_fan(rng)
        lhs, rhs = diagnostics.boundary_compensation(m)
        scale = float(np.sum(m.cell_measures)) * m.h_mesh
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale


def test_boundary_compensation_rejects_quads():
    m = meshgen.cartesian(2, 2)
    with pytest.raises(NonConforming):
        diagnostics.boundary_compensation(m)


# -- weighted projector ---------------------------------------------------------------

def test_projector_centroid_points_is_plain_average():
    m = meshgen.cartesian(3, 3)
    w = diagnostics.weighted_projector(m)
    assert np.allclose(w.xi, 0.0, atol=1e-12)
    vals = w.apply(lambda x, y: x * y)
    for k in range(m.n_cells):
        cx, cy = m.cell_centroids[k]
        assert vals[k] == pytest.approx(cx * cy, rel=1e-12)


def test_projector_shifted_square_closed_form():
    delta = 0.1
    m = build_mesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]],
                   [[0.5 + delta, 0.5]])
    w = diagnostics.weighted_projector(m)
    # J = diag(1/12, 1/12) so xi = (12 delta, 0)
    assert np.allclose(w.xi[0], [12.0 * delta, 0.0], rtol=1e-12)
    vals = w.apply(lambda x, y: x)
    assert vals[0] == pytest.approx(0.5 + delta, rel=1e-13)


def test_projector_reproduces_affine_point_values():
    m = meshgen.cartesian(4, 3, meshgen.CheckerboardShift(0.25))
    w = diagnostics.weighted_projector(m)
    fn = lambda x, y: 1.4 * x - 0.3 * y + 0.7
    vals = w.apply(fn)
    expected = np.array([fn(p[0], p[1]) for p in m.cell_points])
    assert np.allclose(vals, expected, rtol=1e-12)


def test_projector_moment_identities():
    for m in (meshgen.cartesian(3, 3, meshgen.CheckerboardShift(0.25)),
              meshgen.translation_family(meshgen.builtin_unit_square_acute(), 2)):
        w = diagnostics.weighted_projector(m)
        ones = w.apply(lambda x, y: 1.0)
        assert np.allclose(ones, 1.0, rtol=1e-12)
        xs = w.apply(lambda x, y: x)
        assert np.allclose(xs, m.cell_points[:, 0], rtol=0, atol=1e-12)


def test_projector_sup_norm_stable_under_refinement():
    sups = []
    for n in (8, 16, 32):
        m = meshgen.cartesian(n, n, meshgen.CheckerboardShift(0.25))
        sups.append(diagnostics.weighted_projector(m).sup_norms().max())
    assert sups[0] == pytest.approx(sups[1], rel=1e-10)
    assert sups[1] == pytest.approx(sups[2], rel=1e-10)
