"""Divergence-preserving reconstruction into conforming lowest-order
Raviart-Thomas fields on the fan sub-triangulation.

The reconstruction of a velocity DOF vector is determined by its sub-edge
fluxes: boundary fluxes are copied from the edge DOFs, and the interior
fluxes solve the square system equating the constant RT0 divergences of all
fan triangles.  Conformity of the sub-edge fluxes makes normal continuity
across interior sub-edges structural.
"""

from dataclasses import dataclass

import numpy as np

from .quadrature import (integrate_triangles_adaptive, triangle_points,
                         triangle_rule)


@dataclass
class RTReconstruction:
    """Per-element flux map: `flux_map` (n_subedges, 3m) sends velocity DOFs
    to sub-edge fluxes of the reconstructed field w.r.t. the sub-edge fixed
    normals (element-outward on boundary sub-edges)."""

    flux_map: np.ndarray
    subtri: object
    n_boundary: int

    def fluxes(self, dofs):
        return self.flux_map @ dofs


def _divergence_rows(subtri):
    """(nt, n_subedges) matrix taking sub-edge fluxes to per-triangle
    constant divergences (signed flux sum over the triangle area)."""
    nt = len(subtri.triangles)
    ns = subtri.n_polygon_edges + len(subtri.interior_edges)
    rows = np.zeros((nt, ns))
    for t in range(nt):
        for k in range(3):
            rows[t, subtri.tri_subedges[t, k]] += subtri.tri_signs[t, k]
        rows[t] /= subtri.tri_areas[t]
    return rows


def build_reconstruction(element) -> RTReconstruction:
    """Build the flux map for one element.

    For a vertex-anchored fan the divergence-matching system is square and
    nonsingular; for the centroid-fan fallback it is one equation short of
    the unknown count (a flux vortex around the centroid is divergence-free),
    and the minimum-norm solution is taken, which suppresses that mode.
    """
    subtri = element.subtri
    m = subtri.n_polygon_edges
    ni = len(subtri.interior_edges)
    ndof = element.n_dofs

    bdry = np.zeros((m, ndof))
    bdry[np.arange(m), 2 * m + np.arange(m)] = element.geom.edge_lengths

    if ni == 0:
        return RTReconstruction(bdry, subtri, m)

    div = _divergence_rows(subtri)
    diff = div[1:] - div[0]          # equal-divergence conditions
    C_b = diff[:, :m]                # boundary-flux coefficients
    C_i = diff[:, m:]                # interior-flux coefficients
    rhs = -C_b @ bdry
    if C_i.shape[0] == C_i.shape[1]:
        interior = np.linalg.solve(C_i, rhs)
    else:
        interior = np.linalg.lstsq(C_i, rhs, rcond=None)[0]
    return RTReconstruction(np.vstack([bdry, interior]), subtri, m)


def _rt0_basis(tri):
    """RT0 basis on a positively oriented triangle with unit integral flux
    through each edge (w.r.t. the triangle-outward normal):
    w_k(x) = (x - P_opp) / (2|T|) for edge k = (P_k, P_{k+1})."""
    area2 = ((tri[1][0] - tri[0][0]) * (tri[2][1] - tri[0][1])
             - (tri[1][1] - tri[0][1]) * (tri[2][0] - tri[0][0]))

    def basis(points):
        points = np.atleast_2d(points)
        out = np.empty((len(points), 2, 3))
        for k in range(3):
            opp = tri[(k + 2) % 3]
            out[:, :, k] = (points - opp) / area2
        return out

    return basis, area2


def _locate_triangle(subtri, point):
    """Containing fan triangle; points on shared sub-edges go to the one with
    the least-negative barycentric coordinate (roundoff tolerance 1e-8)."""
    best, best_margin = -1, -np.inf
    for t, tri in enumerate(subtri.points[subtri.triangles]):
        v0 = tri[1] - tri[0]
        v1 = tri[2] - tri[0]
        d = point - tri[0]
        det = v0[0] * v1[1] - v0[1] * v1[0]
        a = (d[0] * v1[1] - d[1] * v1[0]) / det
        b = (v0[0] * d[1] - v0[1] * d[0]) / det
        margin = min(a, b, 1.0 - a - b)
        if margin >= -1e-12:
            return t
        if margin > best_margin:
            best, best_margin = t, margin
    return best if best_margin >= -1e-8 else -1


def rt0_eval(recon, dofs, points):
    """Evaluate the reconstructed field at points inside the element."""
    fluxes = recon.fluxes(dofs)
    subtri = recon.subtri
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(points)
    for i, pt in enumerate(points):
        t = _locate_triangle(subtri, pt)
        if t < 0:
            raise ValueError(f"point {pt} lies outside the element")
        tri = subtri.points[subtri.triangles[t]]
        basis, _ = _rt0_basis(tri)
        local = subtri.tri_signs[t] * fluxes[subtri.tri_subedges[t]]
        out[i] = basis(pt)[0] @ local
    return out


def triangle_divergences(recon, dofs):
    """Constant divergence of the reconstruction on each fan triangle."""
    return _divergence_rows(recon.subtri) @ recon.fluxes(dofs)


def load_vector(element, recon, f, degree=4, adaptive=False):
    """Local right-hand side r_j = int_E f . (reconstruction of basis j)."""
    subtri = recon.subtri
    tris = subtri.points[subtri.triangles]
    nt = len(tris)

    if adaptive:
        # opposite vertex of local edge k is vertex (k + 2) mod 3
        opp = tris[:, [2, 0, 1], :]
        e1 = tris[:, 1] - tris[:, 0]
        e2 = tris[:, 2] - tris[:, 0]
        area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

        def integrand(points, ids):
            fv = np.asarray(f(points), dtype=float)
            basis = (points[:, None, :] - opp[ids]) / area2[ids, None, None]
            return np.einsum("nc,nkc->nk", fv, basis)

        per_tri = integrate_triangles_adaptive(tris, integrand, degree)
    else:
        rule = triangle_rule(degree)
        per_tri = np.empty((nt, 3))
        for t, tri in enumerate(tris):
            basis, _ = _rt0_basis(tri)
            pts, wts = triangle_points(tri, rule)
            fv = np.asarray(f(pts), dtype=float)
            per_tri[t] = np.einsum("q,qc,qck->k", wts, fv, basis(pts))

    r = np.zeros(element.n_dofs)
    for t in range(nt):
        rows = subtri.tri_signs[t][:, None] * recon.flux_map[subtri.tri_subedges[t]]
        r += per_tri[t] @ rows
    return r


def standard_load_vector(element, f, degree=4, adaptive=False):
    """Right-hand side of the standard scheme: (f, pi_zero of basis j)."""
    from .quadrature import integrate_polygon

    def moments(points):
        vals = np.asarray(f(points), dtype=float)      # (N, 2)
        mono = element.basis1.eval(points)             # (N, 3)
        return np.concatenate(
            [vals[:, :1] * mono, vals[:, 1:2] * mono], axis=1)

    mom = integrate_polygon(element.subtri, moments, degree, adaptive=adaptive)
    return element.pi_zero.T @ mom


def reconstruction_diagnostics(element, recon, dofs):
    """Per-edge flux and element divergence preservation of the
    reconstruction, plus the spread of its per-triangle divergences."""
    m = element.n_vertices
    fluxes = recon.fluxes(dofs)
    edge_flux_err = np.abs(
        fluxes[:m] - element.geom.edge_lengths * dofs[2 * m:])
    div = triangle_divergences(recon, dofs)
    total_div = float(div @ recon.subtri.tri_areas)
    div_err = abs(total_div - element.geom.area * (element.div_row @ dofs))
    spread = float(div.max() - div.min())
    return {
        "edge_flux_error": edge_flux_err,
        "divergence_error": div_err,
        "divergence_spread": spread,
    }
