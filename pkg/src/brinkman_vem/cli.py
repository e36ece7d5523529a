"""Command-line driver for convergence and adaptivity studies.

Examples:
    brinkman-vem --case ex61 --mesh square --n 10 --levels 4 --nu 1e-8 \
        --rhs robust --out table.csv
    brinkman-vem --case ex64 --adaptive --delta 0.4 --tol 10000 --out trace.csv
    brinkman-vem --case fibrous --kappa-raster fib.txt --mesh square --n 128 \
        --vtk flow.vtk

Exit codes: 0 success, 1 numerical failure, 2 bad arguments.
"""

import argparse
import sys

import numpy as np

from .assembly import SolverError, solve_problem
from .cases import case_registry, load_kappa_raster
from .estimator import AdaptiveConfig, adaptive_loop, estimate
from .export import export_csv, export_vtk
from .mesh import MeshError, generate_nonconvex_mesh, generate_square_mesh, load_mesh
from .studies import adaptive_study, uniform_study


def _build_parser():
    p = argparse.ArgumentParser(
        prog="brinkman-vem",
        description="Pressure-robust virtual element studies for the 2D "
                    "Brinkman equations on polygonal meshes.")
    p.add_argument("--case", required=True,
                   choices=["ex61", "ex64", "ex65", "ex66", "fibrous", "foam"])
    p.add_argument("--mesh", default=None,
                   help="square | nonconvex | file:<path> (default: square, "
                        "or nonconvex for adaptive runs)")
    p.add_argument("--n", type=int, default=None,
                   help="cells per side of the generated mesh")
    p.add_argument("--levels", type=int, default=1,
                   help="uniform refinement levels for convergence tables")
    p.add_argument("--nu", type=float, default=None, help="viscosity override")
    p.add_argument("--kappa", type=float, default=None,
                   help="constant permeability override")
    p.add_argument("--kappa-raster", default=None,
                   help="kappa^{-1} raster file (fibrous/foam)")
    p.add_argument("--rhs", choices=["robust", "standard"], default="robust")
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--delta", type=float, default=0.4,
                   help="Doerfler marking parameter")
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--tol", type=int, default=10**4,
                   help="stop when the mesh reaches this many nodes")
    p.add_argument("--out", default=None, help="CSV output path")
    p.add_argument("--vtk", default=None, help="VTK output path (final state)")
    p.add_argument("--quad-degree", type=int, choices=[4, 6], default=None)
    return p


def _mesh_spec(args):
    spec = args.mesh
    if spec is None:
        spec = "nonconvex" if args.adaptive else "square"
    if spec.startswith("file:"):
        return load_mesh(spec[5:])
    n = args.n if args.n is not None else (4 if args.adaptive else 8)
    if spec == "square":
        return generate_square_mesh(n)
    if spec == "nonconvex":
        return generate_nonconvex_mesh(n)
    raise ValueError(f"unknown mesh spec {spec!r}")


def _print_table(table):
    cols = table.columns
    print("  ".join(f"{c:>12}" for c in cols))
    for row in table.rows:
        cells = []
        for c in cols:
            v = row.get(c)
            if v is None:
                cells.append(f"{'-':>12}")
            elif isinstance(v, float):
                cells.append(f"{v:>12.4e}")
            else:
                cells.append(f"{v:>12}")
        print("  ".join(cells))


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        mesh = _mesh_spec(args)
        raster = None
        if args.kappa_raster is not None:
            raster = load_kappa_raster(args.kappa_raster)
        case = case_registry(args.case, nu=args.nu, kappa=args.kappa,
                             kappa_raster=raster, mesh=mesh)
        if args.quad_degree is not None:
            case.quad_degree = args.quad_degree
    except (MeshError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.adaptive:
            config = AdaptiveConfig(delta=args.delta,
                                    max_iterations=args.max_iters,
                                    node_tolerance=args.tol)
            table, trace = adaptive_study(case, config, mesh=mesh,
                                          rhs_mode=args.rhs)
            _print_table(table)
            if args.out:
                export_csv(trace, args.out)
            if args.vtk:
                export_vtk(trace.final_system, trace.final_result, args.vtk)
        elif case.has_exact and args.levels > 1:
            n0 = args.n if args.n is not None else 8
            family = "nonconvex" if (args.mesh or "").startswith("non") else "square"
            table = uniform_study(case, family, levels=args.levels, n0=n0,
                                  rhs_mode=args.rhs)
            _print_table(table)
            if args.out:
                export_csv(table, args.out)
        else:
            result, system = solve_problem(mesh, case.problem_data(args.rhs))
            est = estimate(system, result)
            print(f"cells: {mesh.n_cells}  velocity dofs: "
                  f"{system.dofmap.n_velocity}  eta: {est.eta:.6e}  "
                  f"residual: {result.residual:.2e}")
            if case.has_exact:
                from .studies import compute_errors
                rep = compute_errors(system, result, case)
                print(f"err_u: {rep.err_u:.6e}  err_p: {rep.err_p:.6e}")
            if args.vtk:
                export_vtk(system, result, args.vtk)
            if args.out:
                from .studies import ConvergenceTable
                tab = ConvergenceTable(["n", "cells", "dofs", "eta"])
                tab.rows.append({"n": args.n, "cells": mesh.n_cells,
                                 "dofs": system.dofmap.n_velocity,
                                 "eta": est.eta})
                export_csv(tab, args.out)
    except (SolverError, MeshError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
