import numpy as np
import pytest

from brinkman_vem.elements import LocalElement, dof_interpolate
from brinkman_vem.mesh import generate_square_mesh
from brinkman_vem.quadrature import edge_gauss, triangle_points, triangle_rule
from brinkman_vem.rt0 import (
    build_reconstruction, load_vector, reconstruction_diagnostics, rt0_eval,
    standard_load_vector, triangle_divergences)

from conftest import random_star_polygon

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
G3 = edge_gauss(3)


class TestBuildReconstruction:
    def test_triangle_boundary_identity(self):
        tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        elem = LocalElement(points=tri)
        rec = build_reconstruction(elem)
        assert rec.flux_map.shape == (3, 9)
        dofs = np.zeros(9)
        dofs[6] = 2.0  # bottom edge mean flux
        assert np.allclose(rec.fluxes(dofs), [2.0 * 1.0, 0.0, 0.0])

    def test_square_identity_field_divergence(self):
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        dofs = dof_interpolate(lambda p: p.copy(), elem)
        divs = triangle_divergences(rec, dofs)
        # hand-solved 1x1 interior system: both sub-triangles carry div = 2
        assert np.abs(divs - 2.0).max() < 1e-12

    def test_pentagon_divergence_spread(self):
        rng = np.random.default_rng(31)
        ang = np.linspace(0, 2 * np.pi, 6)[:-1]
        pent = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        elem = LocalElement(points=pent)
        rec = build_reconstruction(elem)
        for _ in range(100):
            dofs = rng.standard_normal(elem.n_dofs)
            divs = triangle_divergences(rec, dofs)
            scale = max(1.0, np.abs(divs).max())
            assert divs.max() - divs.min() <= 1e-12 * scale


class TestRT0Eval:
    def test_constants_reproduced(self):
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        dofs = dof_interpolate(lambda p: np.tile([1.0, 0.0], (len(p), 1)), elem)
        pts = np.array([[0.3, 0.4], [0.7, 0.2], [0.5, 0.9]])
        assert np.abs(rt0_eval(rec, dofs, pts) - [1.0, 0.0]).max() < 1e-13

    def test_linear_radial_field_reproduced(self):
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        dofs = dof_interpolate(lambda p: p.copy(), elem)
        pts = np.array([[0.3, 0.4], [0.7, 0.2], [0.5, 0.9]])
        assert np.abs(rt0_eval(rec, dofs, pts) - pts).max() < 1e-13

    def test_reference_triangle_hypotenuse_basis(self):
        # unit flux through the hypotenuse of the reference triangle:
        # w(x) = (x - origin) / (2|T|) = (x, y), value (0.5, 0.5) at midpoint
        tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        elem = LocalElement(points=tri)
        rec = build_reconstruction(elem)
        dofs = np.zeros(9)
        dofs[7] = 1.0 / np.sqrt(2.0)  # mean flux so integral flux == 1
        vals = rt0_eval(rec, dofs, np.array([[0.5, 0.5], [0.25, 0.25]]))
        assert np.abs(vals - [[0.5, 0.5], [0.25, 0.25]]).max() < 1e-13

    def test_point_outside_raises(self):
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        with pytest.raises(ValueError):
            rt0_eval(rec, np.zeros(12), np.array([[2.0, 2.0]]))


class TestFluxAndDivergencePreservation:
    def test_random_elements_and_dofs(self):
        rng = np.random.default_rng(32)
        for _ in range(20):
            n = int(rng.integers(3, 10))
            elem = LocalElement(points=random_star_polygon(rng, n))
            rec = build_reconstruction(elem)
            for _ in range(5):
                dofs = rng.standard_normal(elem.n_dofs)
                diag = reconstruction_diagnostics(elem, rec, dofs)
                scale = max(1.0, np.abs(rec.fluxes(dofs)).max())
                assert diag["edge_flux_error"].max() <= 1e-12 * scale
                assert diag["divergence_error"] <= 1e-12 * scale
                assert diag["divergence_spread"] <= 1e-12 * scale

    def test_flux_preservation_by_independent_quadrature(self):
        rng = np.random.default_rng(33)
        pts = random_star_polygon(rng, 6)
        elem = LocalElement(points=pts)
        rec = build_reconstruction(elem)
        dofs = rng.standard_normal(elem.n_dofs)
        m = elem.n_vertices
        for e in range(m):
            a, b = elem.points[e], elem.points[(e + 1) % m]
            epts = a + np.outer(G3.points, b - a)
            vals = rt0_eval(rec, dofs, epts)
            flux = elem.geom.edge_lengths[e] * (
                G3.weights * (vals @ elem.geom.normals[e])).sum()
            assert abs(flux - elem.geom.edge_lengths[e] * dofs[2 * m + e]) < 1e-12

    def test_divergence_free_dofs_give_divergence_free_field(self):
        rng = np.random.default_rng(34)
        elem = LocalElement(points=random_star_polygon(rng, 7))
        rec = build_reconstruction(elem)
        dofs = rng.standard_normal(elem.n_dofs)
        # project the edge fluxes onto the zero-divergence constraint
        m = elem.n_vertices
        L = elem.geom.edge_lengths
        dofs[2 * m:] -= L * (L @ dofs[2 * m:]) / (L @ L)
        divs = triangle_divergences(rec, dofs)
        assert np.abs(divs).max() < 1e-12

    def test_interior_normal_continuity(self):
        rng = np.random.default_rng(35)
        elem = LocalElement(points=random_star_polygon(rng, 8))
        rec = build_reconstruction(elem)
        dofs = rng.standard_normal(elem.n_dofs)
        flux = rec.fluxes(dofs)
        st = elem.subtri
        from brinkman_vem.rt0 import _rt0_basis
        for j, (a, b) in enumerate(st.interior_edges):
            mid = (st.points[a] + st.points[b]) / 2.0
            nrm = st.interior_normals[j]
            sub_id = st.n_polygon_edges + j
            incident = [t for t in range(len(st.triangles))
                        if sub_id in st.tri_subedges[t]]
            assert len(incident) == 2
            vals = []
            for t in incident:
                basis, _ = _rt0_basis(st.points[st.triangles[t]])
                local = st.tri_signs[t] * flux[st.tri_subedges[t]]
                vals.append(basis(mid)[0] @ local @ nrm)
            assert abs(vals[0] - vals[1]) < 1e-12 * max(1.0, abs(vals[0]))


class TestLoadVector:
    def test_zero_force(self):
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        r = load_vector(elem, rec, lambda p: np.zeros((len(p), 2)))
        assert np.abs(r).max() == 0.0

    def test_gradient_force_invisible_to_divfree_zero_flux(self):
        # f = grad q, q in P2; v with zero edge fluxes: r . v = 0 exactly
        rng = np.random.default_rng(36)
        for _ in range(5):
            elem = LocalElement(points=random_star_polygon(rng, 6))
            rec = build_reconstruction(elem)
            c = rng.standard_normal(5)

            def gradq(p):
                return np.stack([
                    c[0] + 2 * c[2] * p[:, 0] + c[4] * p[:, 1],
                    c[1] + c[4] * p[:, 0] + 2 * c[3] * p[:, 1]], axis=1)

            r = load_vector(elem, rec, gradq, degree=4)
            dofs = rng.standard_normal(elem.n_dofs)
            dofs[2 * elem.n_vertices:] = 0.0
            scale = max(1.0, np.abs(r).max() * np.abs(dofs).max())
            assert abs(r @ dofs) < 1e-12 * scale

    def test_constant_force_matches_direct_quadrature(self):
        rng = np.random.default_rng(37)
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        f = lambda p: np.tile([1.0, 0.0], (len(p), 1))
        r = load_vector(elem, rec, f, degree=4)
        dofs = rng.standard_normal(elem.n_dofs)
        # independent check: integrate (R_h v)_x with the triangle rule
        rule = triangle_rule(4)
        total = 0.0
        for tri in elem.subtri.points[elem.subtri.triangles]:
            pts, wts = triangle_points(tri, rule)
            total += (wts * rt0_eval(rec, dofs, pts)[:, 0]).sum()
        assert abs(r @ dofs - total) < 1e-13 * max(1.0, abs(total))

    def test_adaptive_matches_plain_for_smooth_force(self):
        elem = LocalElement(points=UNIT_SQUARE)
        rec = build_reconstruction(elem)
        f = lambda p: np.stack([np.sin(p[:, 0]), np.cos(p[:, 1])], axis=1)
        r1 = load_vector(elem, rec, f, degree=6)
        r2 = load_vector(elem, rec, f, degree=6, adaptive=True)
        # agreement within the plain rule's own truncation error
        assert np.abs(r1 - r2).max() < 1e-8 * np.abs(r1).max()


class TestStandardLoad:
    def test_matches_projection_moments_for_linear_force(self):
        # f in P1: (f, pi0 v) = (f, v) would need v, but for v the monomial
        # dof columns the moment identity reduces to D^T applied weights;
        # cross-check against direct quadrature of f . (pi0 basis_j)
        rng = np.random.default_rng(38)
        elem = LocalElement(points=random_star_polygon(rng, 5))
        f = lambda p: np.stack([1.0 + p[:, 0], p[:, 1] - 2.0], axis=1)
        r = standard_load_vector(elem, f, degree=4)
        from brinkman_vem.quadrature import integrate_polygon
        for j in rng.integers(0, elem.n_dofs, size=4):
            basis_dofs = np.zeros(elem.n_dofs)
            basis_dofs[j] = 1.0
            coeff = elem.pi_zero @ basis_dofs

            def integrand(p):
                mono = elem.basis1.eval(p)
                vj = np.stack([mono @ coeff[:3], mono @ coeff[3:]], axis=1)
                return (f(p) * vj).sum(axis=1)

            val = integrate_polygon(elem.subtri, integrand, 4)
            assert abs(r[j] - val) < 1e-13 * max(1.0, abs(val))


class TestApproximationOrder:
    def test_first_order_l2_convergence(self):
        # || R_h(u_I) - u || decays at first order under uniform refinement
        two_pi = 2 * np.pi
        u = lambda p: np.stack([
            np.sin(two_pi * p[:, 0]) * np.cos(two_pi * p[:, 1]),
            -np.cos(two_pi * p[:, 0]) * np.sin(two_pi * p[:, 1])], axis=1)
        errs = []
        rule = triangle_rule(4)
        for n in (4, 8, 16):
            mesh = generate_square_mesh(n)
            total = 0.0
            for c in range(mesh.n_cells):
                elem = LocalElement(mesh, c)
                rec = build_reconstruction(elem)
                dofs = dof_interpolate(u, elem)
                for tri in elem.subtri.points[elem.subtri.triangles]:
                    pts, wts = triangle_points(tri, rule)
                    diff = rt0_eval(rec, dofs, pts) - u(pts)
                    total += (wts * (diff**2).sum(axis=1)).sum()
            errs.append(np.sqrt(total))
        rate1 = np.log2(errs[0] / errs[1])
        rate2 = np.log2(errs[1] / errs[2])
        assert 0.85 < rate1 < 1.3 and 0.85 < rate2 < 1.3
