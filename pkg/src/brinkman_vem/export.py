"""CSV export of tables/traces and legacy-VTK export of solved states."""

import numpy as np

from .assembly import local_velocity_dofs, divergence_field
from .elements import evaluate_projection
from .estimator import AdaptiveTrace
from .studies import ConvergenceTable

_TRACE_COLUMNS = ["iteration", "n_nodes", "n_dofs", "eta", "eta_f", "eta_S",
                  "eta_r", "err_u", "err_p", "total_error", "effectivity",
                  "n_marked", "wall_time"]


def _fmt(value):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def export_csv(obj, path):
    """Write a ConvergenceTable or an AdaptiveTrace as CSV (17 significant
    digits for floats, empty fields for unavailable entries)."""
    if isinstance(obj, ConvergenceTable):
        columns = obj.columns
        rows = [[row.get(c) for c in columns] for row in obj.rows]
    elif isinstance(obj, AdaptiveTrace):
        columns = _TRACE_COLUMNS
        rows = [[getattr(rec, c) for c in columns] for rec in obj.records]
    else:
        raise TypeError(f"cannot export object of type {type(obj).__name__}")
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def export_vtk(system, result, path):
    """Legacy VTK unstructured grid: polygon cells with per-cell pressure and
    divergence, and vertex velocities sampled from the energy projection
    (averaged over incident cells)."""
    mesh = system.mesh
    vel = np.zeros((mesh.n_vertices, 2))
    count = np.zeros(mesh.n_vertices)
    for c, elem in enumerate(system.elements):
        dofs = local_velocity_dofs(system, result, c)
        vals = evaluate_projection(elem, dofs, "nabla", mesh.cell_points(c))
        idx = mesh.cells[c]
        np.add.at(vel, idx, vals)
        np.add.at(count, idx, 1.0)
    vel /= np.maximum(count, 1.0)[:, None]
    div = divergence_field(system, result)

    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("brinkman-vem solution\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} 0\n")
        size = sum(len(cell) + 1 for cell in mesh.cells)
        fh.write(f"CELLS {mesh.n_cells} {size}\n")
        for cell in mesh.cells:
            fh.write(f"{len(cell)} " + " ".join(str(int(i)) for i in cell) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        fh.write("7\n" * mesh.n_cells)  # VTK_POLYGON
        fh.write(f"CELL_DATA {mesh.n_cells}\n")
        fh.write("SCALARS pressure double\nLOOKUP_TABLE default\n")
        for p in result.pressure:
            fh.write(f"{p:.17g}\n")
        fh.write("SCALARS divergence double\nLOOKUP_TABLE default\n")
        for d in div:
            fh.write(f"{d:.17g}\n")
        fh.write(f"POINT_DATA {mesh.n_vertices}\n")
        fh.write("VECTORS velocity double\n")
        for v in vel:
            fh.write(f"{v[0]:.17g} {v[1]:.17g} 0\n")
