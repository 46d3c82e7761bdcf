"""Manufactured-solution cases, the relative L2 error metrics at cell
points, log-log rate regression, and multi-level convergence studies.

The error metrics compare piecewise-constant data against the exact
solution sampled at the cell points, so the sums are quadrature-free and
bitwise reproducible from a persisted solution.
"""
from __future__ import annotations

import concurrent.futures
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fluxes as fluxmod
from . import hmm, meshgen, tpfa
from .errors import (InsufficientPoints, NonPositiveValue, UnknownCase,
                     ZeroDenominator)

DEFAULT_CARTESIAN_LEVELS = (8, 16, 32, 64)
DEFAULT_FAMILY_LEVELS = (2, 4, 8, 16)


@dataclass(frozen=True)
class TestCase:
    """Exact solution, its gradient, the matching source and coefficient."""

    name: str
    u: Callable
    grad_u: Callable
    f: Callable
    tensor: hmm.TensorField
    a: Callable | float = 1.0
    domain: tuple = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def builtin_case(name):
    """Built-in manufactured cases; currently only ``paper-6``:
    u = 16 x (1-x) y (1-y) on the unit square with identity coefficient."""
    if name != "paper-6":
        raise UnknownCase(f"no built-in case named '{name}'")

    def u(x, y):
        return 16.0 * x * (1.0 - x) * y * (1.0 - y)

    def grad_u(x, y):
        return np.array([16.0 * (1.0 - 2.0 * x) * y * (1.0 - y),
                         16.0 * x * (1.0 - x) * (1.0 - 2.0 * y)])

    def f(x, y):
        return 32.0 * (x * (1.0 - x) + y * (1.0 - y))

    return TestCase(name="paper-6", u=u, grad_u=grad_u, f=f,
                    tensor=hmm.TensorField.identity(), a=1.0)


@dataclass
class ErrorReport:
    level: int
    h_mesh: float
    n_dofs: int
    err_u: float
    err_grad_u: float
    err_u_star: float

    def csv_row(self):
        def fmt(v):
            return format(float(v), ".17g")
        return ",".join([str(self.level), fmt(self.h_mesh), str(self.n_dofs),
                         fmt(self.err_u), fmt(self.err_grad_u),
                         fmt(self.err_u_star)])


CSV_HEADER = "level,h,ndofs,err_u,err_gradu,err_ustar"


def cell_point_error(cell_values, mesh, case):
    """Relative L2 distance of cellwise constants to u(x_K)."""
    exact = np.array([case.u(p[0], p[1]) for p in mesh.cell_points])
    w = mesh.cell_measures
    denom = np.sqrt(np.sum(w * exact ** 2))
    if denom == 0.0:
        raise ZeroDenominator("exact solution vanishes at every cell point")
    return float(np.sqrt(np.sum(w * (np.asarray(cell_values) - exact) ** 2)) / denom)


def gradient_error(rec, mesh, case):
    """Relative L2 distance of the cone gradients to grad u(x_K)."""
    exact = np.array([case.grad_u(p[0], p[1]) for p in mesh.cell_points])
    num = 0.0
    den = 0.0
    for k in range(mesh.n_cells):
        areas = mesh.cone_areas(k)
        diff = rec.grad_d[k] - exact[k][None, :]
        num += np.sum(areas * np.sum(diff ** 2, axis=1))
        den += mesh.cell_measures[k] * (exact[k] @ exact[k])
    if den == 0.0:
        raise ZeroDenominator("exact gradient vanishes at every cell point")
    return float(np.sqrt(num / den))


def errors(solution, mesh, case, scheme_mode="hmm", alpha=1.0, level=0,
           local_ops=None):
    """Error report for one solved field.

    ``solution`` is a :class:`polyfv.hmm.DiscreteField` for the hybrid
    schemes or a cellwise array for the two-point scheme.  For the
    modified scheme the cell-point error is reported in ``err_u_star``.
    """
    if scheme_mode == "tpfa":
        err = cell_point_error(np.asarray(solution), mesh, case)
        return ErrorReport(level=level, h_mesh=mesh.h_mesh,
                           n_dofs=mesh.n_cells, err_u=err,
                           err_grad_u=float("nan"), err_u_star=float("nan"))
    rec = hmm.reconstruct(solution, mesh, alpha, local_ops)
    err_u = cell_point_error(solution.cell_values, mesh, case)
    err_grad = gradient_error(rec, mesh, case)
    n_dofs = solution.layout.n_dofs
    if scheme_mode == "hmm-modified":
        return ErrorReport(level=level, h_mesh=mesh.h_mesh, n_dofs=n_dofs,
                           err_u=err_u, err_grad_u=err_grad, err_u_star=err_u)
    if scheme_mode != "hmm":
        raise ValueError(f"unknown scheme mode '{scheme_mode}'")
    return ErrorReport(level=level, h_mesh=mesh.h_mesh, n_dofs=n_dofs,
                       err_u=err_u, err_grad_u=err_grad,
                       err_u_star=float("nan"))


def rate_regression(points):
    """Least-squares slope of log(err) against log(h)."""
    points = [(float(h), float(e)) for h, e in points]
    if len(points) < 2:
        raise InsufficientPoints("rate regression needs at least two levels")
    if any(h <= 0.0 or e <= 0.0 for h, e in points):
        raise NonPositiveValue("rate regression needs positive h and errors")
    logh = np.log([h for h, _ in points])
    loge = np.log([e for _, e in points])
    slope = np.polyfit(logh, loge, 1)[0]
    return float(slope)


def incremental_rates(points):
    """Consecutive-pair orders, one fewer than the number of levels."""
    out = []
    for (h0, e0), (h1, e1) in zip(points, points[1:]):
        out.append(float(np.log(e1 / e0) / np.log(h1 / h0)))
    return out


@dataclass
class RateReport:
    slopes: dict
    incremental: dict


@dataclass
class StudyResult:
    reports: list
    rates: RateReport
    audits: list = field(default_factory=list)

    def csv(self):
        return "\n".join([CSV_HEADER] + [r.csv_row() for r in self.reports]) + "\n"


def _study_mesh(family, level, placement, initial):
    if family == "cartesian":
        return meshgen.cartesian(level, level, placement or meshgen.Centroid())
    init = initial or meshgen.builtin_unit_square_acute()
    if family == "subdivision":
        return meshgen.subdivision_family(init, level)
    if family == "symmetry":
        return meshgen.symmetry_family(init, level)
    if family == "translation":
        return meshgen.translation_family(init, level)
    raise ValueError(f"unknown family '{family}'")


def _solve_level(family, scheme, level, case, alpha, placement, initial, audit):
    mesh = _study_mesh(family, level, placement, initial)
    audits = []
    if scheme == "tpfa":
        u = tpfa.assemble_and_solve(mesh, case.a, case.f)
        report = ErrorReport(level=level, h_mesh=mesh.h_mesh, n_dofs=mesh.n_cells,
                             err_u=cell_point_error(u, mesh, case),
                             err_grad_u=float("nan"), err_u_star=float("nan"))
        return report, audits
    A_cells = hmm.project_tensor(case.tensor, mesh)
    system = hmm.assemble(mesh, A_cells, alpha)
    b_std = hmm.rhs_standard(mesh, case.f, system.layout)
    b_mod = hmm.rhs_modified(mesh, case.f, system.layout)
    if scheme == "hmm":
        u = hmm.solve(system, b_std)
        u_star = hmm.solve(system, b_mod)
        rec = hmm.reconstruct(u, mesh, alpha, system.local_ops)
        err_u = cell_point_error(u.cell_values, mesh, case)
        err_grad = gradient_error(rec, mesh, case)
        err_star = cell_point_error(u_star.cell_values, mesh, case)
        if audit:
            audits.append(("balance", level, fluxmod.audit_standard(
                u, mesh, case.f, system.local_ops)))
            audits.append(("modified-defect", level, fluxmod.audit_modified(
                u_star, mesh, case.f, system.local_ops)))
    elif scheme == "hmm-modified":
        u_star = hmm.solve(system, b_mod)
        rec = hmm.reconstruct(u_star, mesh, alpha, system.local_ops)
        err_star = cell_point_error(u_star.cell_values, mesh, case)
        err_u = err_star
        err_grad = gradient_error(rec, mesh, case)
        if audit:
            audits.append(("modified-defect", level, fluxmod.audit_modified(
                u_star, mesh, case.f, system.local_ops)))
    else:
        raise ValueError(f"unknown scheme '{scheme}'")
    report = ErrorReport(level=level, h_mesh=mesh.h_mesh,
                         n_dofs=system.layout.n_dofs, err_u=err_u,
                         err_grad_u=err_grad, err_u_star=err_star)
    return report, audits


def run_study(family, scheme, levels, case, alpha=1.0, placement=None,
              initial=None, audit=False):
    """One solve per level, error reports and least-squares rates.

    ``POLYFV_THREADS`` caps the number of levels solved concurrently;
    reports are ordered by level regardless.
    """
    levels = list(levels)
    workers = max(1, int(os.environ.get("POLYFV_THREADS", "1")))
    results = {}
    if workers > 1 and len(levels) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_solve_level, family, scheme, lv, case,
                                   alpha, placement, initial, audit): lv
                       for lv in levels}
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for lv in levels:
            results[lv] = _solve_level(family, scheme, lv, case, alpha,
                                       placement, initial, audit)

    reports = [results[lv][0] for lv in levels]
    audits = [a for lv in levels for a in results[lv][1]]
    slopes = {}
    incr = {}
    for metric in ("err_u", "err_grad_u", "err_u_star"):
        pts = [(r.h_mesh, getattr(r, metric)) for r in reports
               if np.isfinite(getattr(r, metric)) and getattr(r, metric) > 0.0]
        if len(pts) >= 2:
            slopes[metric] = rate_regression(pts)
            incr[metric] = incremental_rates(pts)
    return StudyResult(reports=reports, rates=RateReport(slopes, incr),
                       audits=audits)
