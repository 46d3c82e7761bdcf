import numpy as np
import pytest
import scipy.sparse as sps

from polyfv import build_mesh, meshgen
from polyfv import hmm
from polyfv.errors import (InvalidAlpha, LayoutMismatch, NonEllipticTensor,
                           NonSymmetricTensor)
from polyfv.harness import builtin_case

UNIT_SQUARE = dict(
    vertices=[[0, 0], [1, 0], [1, 1], [0, 1]],
    cells=[[0, 1, 2, 3]],
    cell_points=[[0.5, 0.5]],
)


def unit_square():
    return build_mesh(**UNIT_SQUARE)


def interpolant_values(mesh, fn):
    """Cell and edge values of fn, edge values at midpoints (exact averages
    for affine fn)."""
    cv = np.array([fn(p[0], p[1]) for p in mesh.cell_points])
    ev = np.array([fn(p[0], p[1]) for p in mesh.edge_midpoints])
    return cv, ev


# -- tensor projection -------------------------------------------------------

def test_project_identity():
    m = meshgen.cartesian(2, 2)
    A = hmm.project_tensor(hmm.TensorField.identity(), m)
    assert np.allclose(A, np.eye(2)[None, :, :], rtol=0, atol=1e-15)


def test_project_affine_coefficient():
    m = unit_square()
    A = hmm.project_tensor(hmm.TensorField.isotropic(lambda x, y: 1.0 + x), m)
    assert np.allclose(A[0], 1.5 * np.eye(2), rtol=1e-14)


def test_project_rejects_indefinite():
    m = unit_square()
    bad = hmm.TensorField.constant([[1.0, 0.0], [0.0, -2.0]])
    with pytest.raises(NonEllipticTensor):
        hmm.project_tensor(bad, m)


def test_project_rejects_nonsymmetric():
    m = unit_square()
    bad = hmm.TensorField.constant([[1.0, 0.5], [-0.5, 1.0]])
    with pytest.raises(NonSymmetricTensor):
        hmm.project_tensor(bad, m)


# -- local operators ----------------------------------------------------------

def test_alpha_must_be_positive():
    with pytest.raises(InvalidAlpha):
        hmm.local_operators(unit_square(), 0, np.eye(2), alpha=0.0)


def test_p1_exactness_on_square():
    m = unit_square()
    ops = hmm.local_operators(m, 0, np.eye(2))
    cv, ev = interpolant_values(m, lambda x, y: x)
    delta = hmm.cell_deltas(m, 0, cv, ev)
    assert np.allclose(hmm.cell_gradient(ops, delta), [1.0, 0.0], atol=1e-14)
    assert np.allclose(ops.R @ delta, 0.0, atol=1e-14)
    stab = (ops.R @ delta) @ (ops.B_diag * (ops.R @ delta))
    assert stab <= 1e-28


def test_constant_field_in_kernel():
    m = unit_square()
    ops = hmm.local_operators(m, 0, np.eye(2))
    delta = hmm.cell_deltas(m, 0, np.array([3.0]), np.full(4, 3.0))
    assert np.allclose(delta, 0.0)
    assert np.allclose(ops.W @ delta, 0.0)


def test_quadratic_form_matches_cone_oracle():
    m = unit_square()
    ops = hmm.local_operators(m, 0, np.eye(2))
    rng = np.random.default_rng(1)
    for _ in range(20):
        du = rng.normal(size=4)
        dv = rng.normal(size=4)
        matrix_form = dv @ ops.W @ du
        cone_form = hmm.cell_energy(ops, m, du, dv)
        assert matrix_form == pytest.approx(cone_form, rel=1e-12)


def test_zeta_ratio_is_alpha_squared():
    # stabilised-vs-raw residual sums differ exactly by alpha^2
    m = meshgen.cartesian(3, 3, meshgen.CheckerboardShift(0.2))
    rng = np.random.default_rng(5)
    alpha = 1.7
    for k in range(m.n_cells):
        ops = hmm.local_operators(m, k, np.eye(2), alpha)
        delta = rng.normal(size=len(ops.edges))
        s = -(ops.R @ delta)
        areas = m.cone_areas(k)
        d = m.cell_edge_dists[k]
        raw = np.sum(areas * (s / d) ** 2)
        stabilised = np.sum(areas * (alpha * s / d) ** 2)
        assert stabilised == pytest.approx(alpha ** 2 * raw, rel=1e-13)
        zeta = max(alpha ** 2, alpha ** -2)
        slack = 1e-12 * max(raw, stabilised)
        assert raw / zeta <= stabilised + slack
        assert stabilised <= zeta * raw + slack


# -- assembly -----------------------------------------------------------------

def test_assemble_single_cell():
    m = unit_square()
    system = hmm.assemble(m, [np.eye(2)])
    assert system.matrix.shape == (1, 1)
    assert system.matrix[0, 0] > 0.0


def test_assemble_two_cells():
    m = build_mesh([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]],
                   [[0, 1, 4, 3], [1, 2, 5, 4]],
                   [[0.5, 0.5], [1.5, 0.5]])
    system = hmm.assemble(m, [np.eye(2)] * 2)
    assert system.layout.n_dofs == 3
    dense = system.matrix.toarray()
    assert np.allclose(dense, dense.T)
    assert np.all(np.linalg.eigvalsh(dense) > 0.0)


def test_assemble_bitwise_reproducible():
    m = meshgen.cartesian(4, 4, meshgen.CheckerboardShift(0.25))
    A = hmm.project_tensor(hmm.TensorField.identity(), m)
    s1 = hmm.assemble(m, A)
    s2 = hmm.assemble(m, A)
    assert np.array_equal(s1.matrix.data, s2.matrix.data)
    assert np.array_equal(s1.matrix.indices, s2.matrix.indices)
    assert np.array_equal(s1.matrix.indptr, s2.matrix.indptr)


def test_coercivity_random_vectors():
    m = meshgen.cartesian(3, 3, meshgen.CheckerboardShift(0.2))
    A = hmm.project_tensor(hmm.TensorField.identity(), m)
    system = hmm.assemble(m, A)
    rng = np.random.default_rng(9)
    for _ in range(100):
        v = rng.normal(size=system.layout.n_dofs)
        v /= np.linalg.norm(v)
        assert v @ (system.matrix @ v) > 0.0


# -- right-hand sides ----------------------------------------------------------

def test_rhs_standard_values():
    m = unit_square()
    assert hmm.rhs_standard(m, lambda x, y: 1.0)[0] == pytest.approx(1.0)
    assert hmm.rhs_standard(m, lambda x, y: x)[0] == pytest.approx(0.5)
    case = builtin_case("paper-6")
    assert hmm.rhs_standard(m, case.f)[0] == pytest.approx(32.0 / 3.0, rel=1e-14)


def test_first_moments():
    m = unit_square()
    assert np.allclose(hmm.first_moments(m, lambda x, y: 1.0)[0], 0.0,
                       atol=1e-16)
    mom = hmm.first_moments(m, lambda x, y: x)[0]
    assert np.allclose(mom, [1.0 / 12.0, 0.0], rtol=1e-13, atol=1e-16)


def test_rhs_modified_centroid_points_match_standard():
    m = meshgen.cartesian(3, 3)
    f = lambda x, y: 1.0
    assert np.allclose(hmm.rhs_modified(m, f), hmm.rhs_standard(m, f),
                       atol=1e-16)


def test_rhs_modified_zero_source():
    m = meshgen.cartesian(2, 2, meshgen.CheckerboardShift(0.2))
    assert np.all(hmm.rhs_modified(m, lambda x, y: 0.0) == 0.0)


def test_rhs_rejects_non_finite_source():
    from polyfv.errors import QuadratureFailure
    m = meshgen.cartesian(2, 2)
    with pytest.raises(QuadratureFailure):
        hmm.rhs_standard(m, lambda x, y: np.nan)


def test_rhs_modified_differs_off_centroid():
    m = meshgen.cartesian(4, 4, meshgen.CheckerboardShift(0.25))
    case = builtin_case("paper-6")
    b_std = hmm.rhs_standard(m, case.f)
    b_mod = hmm.rhs_modified(m, case.f)
    assert np.array_equal(b_std[:m.n_cells], b_mod[:m.n_cells])
    assert not np.allclose(b_std, b_mod)


# -- solve ----------------------------------------------------------------------

def _manual_system(matrix, n):
    layout = hmm.DofLayout(n, 0, np.full(0, -1, dtype=np.int64))
    return hmm.HmmSystem(matrix=sps.csr_matrix(matrix), rhs=None,
                         layout=layout, local_ops=[], alpha=1.0,
                         quadrature_degree=5, mesh_hash="manual")


def test_solve_identity_system():
    system = _manual_system(np.eye(6), 6)
    b = np.arange(6.0)
    x = hmm.solve(system, b)
    assert np.allclose(x.values, b)


def test_solve_mirror_symmetry():
    m = build_mesh([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]],
                   [[0, 1, 4, 3], [1, 2, 5, 4]],
                   [[0.5, 0.5], [1.5, 0.5]])
    system = hmm.assemble(m, [np.eye(2)] * 2)
    u = hmm.solve(system, hmm.rhs_standard(m, lambda x, y: 1.0))
    assert u.values[0] == pytest.approx(u.values[1], rel=1e-13)


def test_solve_against_dense_oracle():
    rng = np.random.default_rng(11)
    Q = rng.normal(size=(50, 50))
    spd = Q @ Q.T + 50.0 * np.eye(50)
    b = rng.normal(size=50)
    expected = np.linalg.solve(spd, b)
    x = hmm.solve(_manual_system(spd, 50), b)
    assert np.allclose(x.values, expected, rtol=1e-10)


def test_solve_zero_rhs():
    system = _manual_system(np.eye(3), 3)
    assert np.all(hmm.solve(system, np.zeros(3)).values == 0.0)


def test_solve_rejects_bad_rhs_length():
    system = _manual_system(np.eye(3), 3)
    with pytest.raises(LayoutMismatch):
        hmm.solve(system, np.ones(4))


# -- reconstructions -------------------------------------------------------------

def test_reconstruct_affine_exact():
    m = meshgen.cartesian(3, 3, meshgen.CheckerboardShift(0.2))
    fn = lambda x, y: 0.75 * x - 0.4 * y + 0.2
    cv, ev = interpolant_values(m, fn)
    # evaluate locally with unpinned edge values so boundary cells count too
    for k in range(m.n_cells):
        ops = hmm.local_operators(m, k, np.eye(2))
        delta = hmm.cell_deltas(m, k, cv, ev)
        assert np.allclose(hmm.cell_gradient(ops, delta), [0.75, -0.4],
                           atol=1e-13)
        assert np.allclose(hmm.cone_gradients(ops, m, delta),
                           [0.75, -0.4], atol=1e-13)


def test_reconstruct_constant():
    m = meshgen.cartesian(2, 2)
    layout = hmm.DofLayout.from_mesh(m)
    values = np.zeros(layout.n_dofs)
    values[:m.n_cells] = 4.0
    values[m.n_cells:] = 4.0
    rec = hmm.reconstruct(hmm.DiscreteField(layout, values), m)
    assert np.allclose(rec.pi_d, 4.0)
    assert rec.pi_d_star(0, m.cell_points[0])[0] == pytest.approx(4.0)


def test_mean_gradient_identity():
    m = meshgen.cartesian(3, 2, meshgen.CheckerboardShift(0.15))
    layout = hmm.DofLayout.from_mesh(m)
    rng = np.random.default_rng(3)
    u = hmm.DiscreteField(layout, rng.normal(size=layout.n_dofs))
    rec = hmm.reconstruct(u, m)
    for k in range(m.n_cells):
        areas = m.cone_areas(k)
        mean = (rec.grad_d[k] * areas[:, None]).sum(axis=0)
        assert np.allclose(mean, m.cell_measures[k] * rec.grad_k[k],
                           rtol=1e-13, atol=1e-16)


def test_reconstruct_layout_mismatch():
    m = meshgen.cartesian(2, 2)
    other = meshgen.cartesian(3, 3)
    u = hmm.DiscreteField(hmm.DofLayout.from_mesh(other),
                          np.zeros(hmm.DofLayout.from_mesh(other).n_dofs))
    with pytest.raises(LayoutMismatch):
        hmm.reconstruct(u, m)


# -- interpolation -----------------------------------------------------------------

def test_interpolate_zero():
    m = meshgen.cartesian(2, 2)
    field = hmm.interpolate(lambda x, y: 0.0, m)
    assert np.all(field.values == 0.0)


def test_interpolate_affine_exact_on_interior_cells():
    # the pinned boundary edges only affect boundary cells
    m = meshgen.cartesian(4, 4)
    fn = lambda x, y: 2.0 * x + y
    field = hmm.interpolate(fn, m)
    rec = hmm.reconstruct(field, m)
    for k in range(m.n_cells):
        if np.all(m.edge_cells[m.cell_edges[k], 1] >= 0):
            assert np.allclose(rec.grad_d[k], [2.0, 1.0], atol=1e-13)


def test_interpolate_edge_average_is_gauss():
    m = unit_square()
    field = hmm.interpolate(lambda x, y: x * x, m)
    assert field.values[0] == pytest.approx(0.25)
