"""Command-line interface.

Exit codes: 0 success, 2 audit failure, 3 invalid input.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import diagnostics, fluxes, harness, hmm, mesh as meshmod, meshgen, tpfa
from .errors import PolyfvError

EXIT_OK = 0
EXIT_AUDIT = 2
EXIT_INVALID = 3


def _load_initial(path):
    return meshmod.read_mesh(path) if path else meshgen.builtin_unit_square_acute()


def cmd_mesh_gen(args):
    if args.family == "cartesian":
        placement = meshgen.parse_placement(args.placement)
        m = meshgen.cartesian(args.n, args.n, placement)
    else:
        initial = _load_initial(args.initial)
        fam = {"subdivision": meshgen.subdivision_family,
               "symmetry": meshgen.symmetry_family,
               "translation": meshgen.translation_family}[args.family]
        m = fam(initial, args.n)
    meshmod.write_mesh(m, args.output)
    print(f"wrote {m.n_cells} cells, {m.n_edges} edges to {args.output}")
    return EXIT_OK


def _solve_hmm(m, case, alpha, modified):
    A_cells = hmm.project_tensor(case.tensor, m)
    system = hmm.assemble(m, A_cells, alpha)
    b = (hmm.rhs_modified if modified else hmm.rhs_standard)(m, case.f, system.layout)
    return system, hmm.solve(system, b)


def cmd_solve(args):
    m = meshmod.read_mesh(args.mesh)
    case = harness.builtin_case(args.case)
    lines = []
    if args.scheme == "tpfa":
        u = tpfa.assemble_and_solve(m, case.a, case.f)
        lines.append("cell_id,value")
        for k, v in enumerate(u):
            lines.append(f"{k},{format(v, '.17g')}")
    else:
        system, u = _solve_hmm(m, case, args.alpha, args.scheme == "hmm-modified")
        lines.append("kind,id,value")
        for k in range(m.n_cells):
            lines.append(f"cell,{k},{format(u.values[k], '.17g')}")
        for e in m.interior_edges:
            dof = system.layout.edge_dof[e]
            lines.append(f"edge,{e},{format(u.values[dof], '.17g')}")
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines) - 1} dof values to {args.output}")
    return EXIT_OK


def cmd_check_fluxes(args):
    m = meshmod.read_mesh(args.mesh)
    case = harness.builtin_case(args.case)
    modified = args.scheme == "hmm-modified"
    system, u = _solve_hmm(m, case, args.alpha, modified)
    auditor = fluxes.audit_modified if modified else fluxes.audit_standard
    audit = auditor(u, m, case.f, system.local_ops)
    rows = ["entity,kind,residual"]
    for k, r in enumerate(audit.balance_residuals):
        rows.append(f"cell {k},balance,{format(r, '.17g')}")
    kind = "defect" if modified else "conservativity"
    for e, r in zip(m.interior_edges, audit.conservativity_defects):
        rows.append(f"edge {e},{kind},{format(r, '.17g')}")
    print("\n".join(rows))
    print(f"flux audit: {'pass' if audit.passed else 'FAIL'}")
    return EXIT_OK if audit.passed else EXIT_AUDIT


def cmd_check_patching(args):
    m = meshmod.read_mesh(args.mesh)
    builder = {"pairs": diagnostics.pair_patching,
               "tiles": diagnostics.tile_patching,
               "trivial": diagnostics.trivial_patching}[args.patching]
    patching = builder(m)
    quality = diagnostics.evaluate_patching(m, patching)
    print("patch,e")
    for i, e in enumerate(quality.per_patch_e):
        print(f"{i},{format(e, '.17g')}")
    print(f"e_G = {quality.e_G:.6e}  mu <= {quality.mu_estimate:.3f}  "
          f"uncovered area = {quality.uncovered_area:.6e}")
    return EXIT_OK


def cmd_check_compensation(args):
    m = meshmod.read_mesh(args.mesh)
    lhs, rhs = diagnostics.boundary_compensation(m)
    scale = float(np.sum(m.cell_measures)) * m.h_mesh
    defect = float(np.linalg.norm(lhs - rhs)) / scale
    print("side,x,y")
    print(f"triangles,{format(lhs[0], '.17g')},{format(lhs[1], '.17g')}")
    print(f"boundary,{format(rhs[0], '.17g')},{format(rhs[1], '.17g')}")
    print(f"relative defect = {defect:.3e}")
    return EXIT_OK if defect < 1e-12 else EXIT_AUDIT


def cmd_study(args):
    case = harness.builtin_case(args.case)
    levels = [int(t) for t in args.levels.split(",")] if args.levels else None
    if levels is None:
        levels = (harness.DEFAULT_CARTESIAN_LEVELS if args.family == "cartesian"
                  else harness.DEFAULT_FAMILY_LEVELS)
    placement = meshgen.parse_placement(args.placement) if args.placement else None
    initial = meshmod.read_mesh(args.initial) if args.initial else None
    result = harness.run_study(args.family, args.scheme, levels, case,
                               alpha=args.alpha, placement=placement,
                               initial=initial, audit=args.audit)
    csv = result.csv()
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)
    for metric, slope in result.rates.slopes.items():
        print(f"slope {metric} = {slope:.4f}")
    failed = [name for name, lv, a in result.audits if not a.passed]
    if failed:
        print(f"audit failures: {failed}")
        return EXIT_AUDIT
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="polyfv")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = p_mesh.add_subparsers(dest="mesh_command", required=True)
    p_gen = mesh_sub.add_parser("gen", help="generate a mesh file")
    p_gen.add_argument("--family", required=True,
                       choices=["cartesian", "subdivision", "symmetry", "translation"])
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--placement", default="centroid")
    p_gen.add_argument("--initial", default=None)
    p_gen.add_argument("-o", "--output", required=True)
    p_gen.set_defaults(func=cmd_mesh_gen)

    p_solve = sub.add_parser("solve", help="solve one problem on a mesh file")
    p_solve.add_argument("--scheme", required=True,
                         choices=["hmm", "hmm-modified", "tpfa"])
    p_solve.add_argument("--mesh", required=True)
    p_solve.add_argument("--case", default="paper-6")
    p_solve.add_argument("--alpha", type=float, default=1.0)
    p_solve.add_argument("-o", "--output", required=True)
    p_solve.set_defaults(func=cmd_solve)

    p_check = sub.add_parser("check", help="audit identities on a mesh")
    check_sub = p_check.add_subparsers(dest="check_command", required=True)
    p_fl = check_sub.add_parser("fluxes")
    p_fl.add_argument("--scheme", required=True, choices=["hmm", "hmm-modified"])
    p_fl.add_argument("--mesh", required=True)
    p_fl.add_argument("--case", default="paper-6")
    p_fl.add_argument("--alpha", type=float, default=1.0)
    p_fl.set_defaults(func=cmd_check_fluxes)
    p_pa = check_sub.add_parser("patching")
    p_pa.add_argument("--mesh", required=True)
    p_pa.add_argument("--patching", required=True, choices=["pairs", "tiles", "trivial"])
    p_pa.set_defaults(func=cmd_check_patching)
    p_co = check_sub.add_parser("compensation")
    p_co.add_argument("--mesh", required=True)
    p_co.set_defaults(func=cmd_check_compensation)

    p_study = sub.add_parser("study", help="multi-level convergence study")
    p_study.add_argument("--family", required=True,
                         choices=["cartesian", "subdivision", "symmetry", "translation"])
    p_study.add_argument("--scheme", required=True,
                         choices=["hmm", "hmm-modified", "tpfa"])
    p_study.add_argument("--levels", default=None)
    p_study.add_argument("--case", default="paper-6")
    p_study.add_argument("--alpha", type=float, default=1.0)
    p_study.add_argument("--placement", default=None)
    p_study.add_argument("--initial", default=None)
    p_study.add_argument("--audit", action="store_true")
    p_study.add_argument("-o", "--output", default=None)
    p_study.set_defaults(func=cmd_study)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (PolyfvError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
