"""Error norms against manufactured solutions and convergence studies."""

from dataclasses import dataclass, field

import numpy as np

from .assembly import local_velocity_dofs, solve_problem
from .elements import projection_gradient
from .estimator import AdaptiveConfig, adaptive_loop
from .mesh import generate_nonconvex_mesh, generate_square_mesh, load_mesh
from .quadrature import (integrate_triangles_adaptive, triangle_points,
                         triangle_rule)


@dataclass
class ErrorReport:
    """Computable error quantities of one solve: the velocity energy error
    uses the projections as the accessible substitute for u_h."""

    err_u: float   # (sum ||grad u - grad pi u_h||^2 + ||kinv^{1/2}(u - pi0 u_h)||^2)^{1/2}
    err_p: float


def compute_errors(system, result, case) -> ErrorReport:
    """Degree-6 quadrature of the projected velocity error and the pressure
    error; layer cases split triangles adaptively where the velocity gradient
    varies by orders of magnitude."""
    if not case.has_exact:
        raise ValueError(f"case {case.name!r} has no exact solution")
    rule = triangle_rule(6)
    err_u2 = 0.0
    err_p2 = 0.0
    for c, elem in enumerate(system.elements):
        dofs = local_velocity_dofs(system, result, c)
        G = projection_gradient(elem, dofs)
        coeff_z = elem.pi_zero @ dofs
        kinv = system.kappa_inv[c]
        p_cell = result.pressure[c]
        st = elem.subtri
        tris = st.points[st.triangles]

        def integrand(pts, ids=None):
            gu = np.asarray(case.grad_u(pts))
            mono = elem.basis1.eval(pts)
            uz = np.stack([mono @ coeff_z[:3], mono @ coeff_z[3:]], axis=1)
            du = np.asarray(case.u(pts)) - uz
            dp = np.asarray(case.p(pts)) - p_cell
            return np.stack([
                ((gu - G[None]) ** 2).sum(axis=(1, 2)) + kinv * (du**2).sum(axis=1),
                dp**2,
                # third slot carries the gradient magnitude for the spread test
                np.abs(gu).max(axis=(1, 2)),
            ], axis=1)

        if case.adaptive_quad:
            per_tri = integrate_triangles_adaptive(tris, integrand, 6, max_depth=8)
            vals = per_tri.sum(axis=0)
        else:
            npts = []
            nwts = []
            for tri in tris:
                p, w = triangle_points(tri, rule)
                npts.append(p)
                nwts.append(w)
            allw = np.concatenate(nwts)
            vals = allw @ integrand(np.concatenate(npts))
        err_u2 += vals[0]
        err_p2 += vals[1]
    return ErrorReport(float(np.sqrt(err_u2)), float(np.sqrt(err_p2)))


@dataclass
class ConvergenceTable:
    """Ordered study rows; `columns` names the per-row dict keys."""

    columns: list
    rows: list = field(default_factory=list)

    def column(self, name):
        return np.array([r.get(name) if r.get(name) is not None else np.nan
                         for r in self.rows])


def make_mesh(family, n, path=None):
    if family == "square":
        return generate_square_mesh(n)
    if family == "nonconvex":
        return generate_nonconvex_mesh(n)
    if family == "file":
        return load_mesh(path)
    raise ValueError(f"unknown mesh family {family!r}")


def _rate(prev_err, err, prev_h, h):
    if prev_err is None or err <= 0 or prev_err <= 0:
        return None
    return float(np.log(prev_err / err) / np.log(prev_h / h))


def uniform_study(case, mesh_family="square", levels=4, n0=10,
                  rhs_mode="robust") -> ConvergenceTable:
    """Solve on a family of uniformly refined meshes (n, 2n, 4n, ...) and
    report energy/pressure errors with successive rates."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    table = ConvergenceTable(
        ["n", "h", "dofs", "err_u", "rate_u", "err_p", "rate_p"])
    prev = None
    for lvl in range(levels):
        n = n0 * 2**lvl
        mesh = make_mesh(mesh_family, n)
        result, system = solve_problem(mesh, case.problem_data(rhs_mode))
        rep = compute_errors(system, result, case)
        h = mesh.mesh_size()
        row = {
            "n": n, "h": h, "dofs": system.dofmap.n_velocity,
            "err_u": rep.err_u, "err_p": rep.err_p,
            "rate_u": None, "rate_p": None,
        }
        if prev is not None:
            row["rate_u"] = _rate(prev["err_u"], rep.err_u, prev["h"], h)
            row["rate_p"] = _rate(prev["err_p"], rep.err_p, prev["h"], h)
        table.rows.append(row)
        prev = row
    return table


def adaptive_study(case, config: AdaptiveConfig, mesh=None,
                   mesh_family="nonconvex", n0=4, rhs_mode="robust"):
    """Run the adaptive loop and tabulate eta, the total error
    (nu^2 |e_u|^2 + ||e_p||^2)^{1/2} and the effectivity index per iteration;
    rates are taken against the DOF counts."""
    if mesh is None:
        mesh = make_mesh(mesh_family, n0)
    trace = adaptive_loop(mesh, case, config, rhs_mode=rhs_mode)
    table = ConvergenceTable(
        ["iteration", "nodes", "dofs", "eta", "rate_eta",
         "total_error", "rate_error", "effectivity", "marked"])
    prev = None
    for rec in trace.records:
        row = {
            "iteration": rec.iteration, "nodes": rec.n_nodes,
            "dofs": rec.n_dofs, "eta": rec.eta,
            "total_error": rec.total_error, "effectivity": rec.effectivity,
            "marked": rec.n_marked, "rate_eta": None, "rate_error": None,
        }
        if prev is not None and prev["dofs"] != row["dofs"]:
            ratio = np.log(row["dofs"] / prev["dofs"])
            row["rate_eta"] = float(np.log(row["eta"] / prev["eta"]) / ratio)
            if row["total_error"] and prev["total_error"]:
                row["rate_error"] = float(
                    np.log(row["total_error"] / prev["total_error"]) / ratio)
        table.rows.append(row)
        prev = row
    return table, trace


def fit_slope(dofs, values, tail=3):
    """Least-squares slope of log(values) against log(dofs) over the last
    `tail` points."""
    dofs = np.asarray(dofs, dtype=float)[-tail:]
    values = np.asarray(values, dtype=float)[-tail:]
    if len(dofs) < 2:
        raise ValueError("need at least two points to fit a slope")
    return float(np.polyfit(np.log(dofs), np.log(values), 1)[0])
