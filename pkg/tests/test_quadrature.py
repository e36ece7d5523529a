import numpy as np
import pytest
from math import factorial

from brinkman_vem.mesh import fan_triangulate, generate_square_mesh
from brinkman_vem.quadrature import (
    ScaledMonomialBasis, edge_gauss, integrate_edge, integrate_polygon,
    integrate_triangles_adaptive, monomials, triangle_rule)

from conftest import random_star_polygon


def reference_monomial_integral(a, b):
    # int_T x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", [2, 4, 6])
def test_triangle_rules_exact_to_degree(degree):
    rule = triangle_rule(degree)
    assert abs(rule.weights.sum() - 0.5) < 1e-14
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = (rule.weights * rule.points[:, 0] ** a
                   * rule.points[:, 1] ** b).sum()
            exact = reference_monomial_integral(a, b)
            assert abs(val - exact) <= 1e-13 * exact


def test_triangle_rule_unsupported_degree():
    with pytest.raises(ValueError):
        triangle_rule(3)


@pytest.mark.parametrize("npoints,power,exact", [
    (3, 4, 1 / 5), (2, 3, 1 / 4), (2, 0, 1.0), (3, 0, 1.0)])
def test_edge_gauss_values(npoints, power, exact):
    rule = edge_gauss(npoints)
    val = (rule.weights * rule.points**power).sum()
    assert abs(val - exact) < 1e-14


def test_edge_gauss_unsupported():
    with pytest.raises(ValueError):
        edge_gauss(5)


def test_integrate_polygon_basics():
    mesh = generate_square_mesh(1)
    st = mesh.subtriangulation(0)
    assert abs(integrate_polygon(st, lambda p: np.ones(len(p)), 2) - 1.0) < 1e-14
    # odd about the centroid on the square
    xi = lambda p: (p[:, 0] - 0.5) / np.sqrt(2)
    assert abs(integrate_polygon(st, xi, 2)) < 1e-15
    val = integrate_polygon(st, lambda p: p[:, 0] ** 2 * p[:, 1], 4)
    assert abs(val - 1 / 6) < 1e-15


def test_integrate_polygon_anchor_invariant():
    # quintic integrand, degree-6 rule: exact on any valid fan
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal((6, 6))

    def quintic(p):
        out = np.zeros(len(p))
        for a in range(6):
            for b in range(6 - a):
                out += coeffs[a, b] * p[:, 0] ** a * p[:, 1] ** b
        return out

    pts = random_star_polygon(rng, 7)
    vals = []
    for shift in range(7):
        rolled = np.roll(pts, shift, axis=0)
        vals.append(integrate_polygon(fan_triangulate(rolled), quintic, 6))
    vals = np.array(vals)
    assert np.abs(vals - vals[0]).max() <= 1e-12 * abs(vals[0])


def test_adaptive_at_least_as_accurate_on_smooth_integrand():
    mesh = generate_square_mesh(2)
    st = mesh.subtriangulation(1)
    f = lambda p: np.cos(p[:, 0]) * p[:, 1] ** 2
    plain = integrate_polygon(st, f, 6)
    adap = integrate_polygon(st, f, 6, adaptive=True)
    fine = generate_square_mesh(32)
    cells = [c for c in range(fine.n_cells)
             if 0.5 < fine.geometry(c).centroid[0]
             and fine.geometry(c).centroid[1] < 0.5]
    ref = sum(integrate_polygon(fine.subtriangulation(c), f, 6)
              for c in cells)
    assert abs(adap - ref) <= abs(plain - ref) + 1e-15 * abs(ref)
    assert abs(adap - ref) < 1e-12 * abs(ref)


def test_adaptive_resolves_steep_layer():
    # e^{-1000 (x+y-1)^2} over the unit square: compare against a dense
    # composite reference computed with plain high-degree quadrature
    mesh = generate_square_mesh(1)
    f = lambda p: np.exp(-1000.0 * (p[:, 0] + p[:, 1] - 1.0) ** 2)
    adap = integrate_polygon(mesh.subtriangulation(0), f, 6, adaptive=True)
    fine = generate_square_mesh(64)
    ref = sum(integrate_polygon(fine.subtriangulation(c), f, 6)
              for c in range(fine.n_cells))
    assert abs(adap - ref) < 1e-9 * ref
    # the plain rule on one cell misses the layer badly
    plain = integrate_polygon(mesh.subtriangulation(0), f, 6)
    assert abs(plain - ref) > 1e3 * abs(adap - ref)


def test_integrate_edge_adaptive_layer():
    nu = 0.01
    f = lambda p: np.exp((p[:, 1] - 1.0) / nu)
    exact = nu * (1.0 - np.exp(-1.0 / nu))
    val = integrate_edge((1.0, 0.0), (1.0, 1.0), f, adaptive=True)
    assert abs(val - exact) < 1e-12 * exact


def test_monomials_k1():
    basis = monomials((0.5, 0.5), np.sqrt(2.0), 1)
    vals = basis.eval(np.array([[1.0, 0.5]]))
    assert np.allclose(vals, [[1.0, 0.5 / np.sqrt(2), 0.0]])
    grads = basis.grad(np.array([[0.3, 0.9]]))
    assert np.allclose(grads[0, 1], [1 / np.sqrt(2), 0.0])
    assert np.allclose(grads[0, 2], [0.0, 1 / np.sqrt(2)])
    assert np.allclose(grads[0, 0], [0.0, 0.0])


def test_monomials_k2_value():
    basis = monomials((0.5, 0.5), np.sqrt(2.0), 2)
    vals = basis.eval(np.array([[1.0, 1.0]]))
    # xi*eta member at (1,1): (0.5/sqrt(2))^2 = 0.125
    assert abs(vals[0, 4] - 0.125) < 1e-15


def test_monomials_vanish_at_center():
    basis = monomials((0.3, -0.2), 2.0, 2)
    vals = basis.eval(np.array([[0.3, -0.2]]))
    assert vals[0, 0] == 1.0
    assert np.abs(vals[0, 1:]).max() == 0.0


def test_monomials_gradient_exact():
    rng = np.random.default_rng(11)
    basis = monomials((0.2, 0.7), 1.3, 2)
    pts = rng.uniform(-1, 1, (20, 2))
    h = 1e-6
    gx = (basis.eval(pts + [h, 0]) - basis.eval(pts - [h, 0])) / (2 * h)
    gy = (basis.eval(pts + [0, h]) - basis.eval(pts - [0, h])) / (2 * h)
    grads = basis.grad(pts)
    assert np.abs(grads[:, :, 0] - gx).max() < 1e-9
    assert np.abs(grads[:, :, 1] - gy).max() < 1e-9


def test_integrate_triangles_adaptive_vector_valued():
    tris = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]])
    out = integrate_triangles_adaptive(
        tris, lambda p, ids: np.stack([np.ones(len(p)), p[:, 0]], axis=1), 4)
    assert np.allclose(out, [[0.5, 1 / 6]])
