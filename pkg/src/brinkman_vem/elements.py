"""Per-element virtual element machinery at lowest order.

DOF layout on a polygon with m vertices (3m local DOFs):
  dofs 2i, 2i+1   velocity components at vertex V_i,
  dof  2m + i     mean normal flux (1/|e|) int_e v.n on edge i = (V_i, V_{i+1}),
with n the element-outward normal.  Boundary traces are P2 in the normal
component (endpoint values + prescribed mean) and P1 in the tangential one,
which makes the energy and L2 projections onto vector linear polynomials
computable from the DOFs alone.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import MeshError, element_geometry, fan_triangulate
from .quadrature import edge_gauss, integrate_edge, integrate_polygon, monomials

# Vector P1 basis ordering: [(1,0), (xi,0), (eta,0), (0,1), (0,xi), (0,eta)],
# i.e. member 3c + a carries scalar monomial a in component c.

_GAUSS3 = edge_gauss(3)

_COND_WARN = 1e12


def _trace_shapes(s):
    """P2 normal-trace shape functions on [0,1] for (value at 0, value at 1,
    prescribed mean); the tangential trace uses the linear pair (1-s, s)."""
    return 3 * s**2 - 4 * s + 1, 3 * s**2 - 2 * s, 6 * s - 6 * s**2


@dataclass
class EdgeTrace:
    """Boundary trace of a DOF vector on one edge: v.t is P1 through the
    endpoint tangential components, v.n is the P2 fixed by endpoint normal
    components and the edge-mean DOF."""

    normal: np.ndarray     # outward unit normal
    tangent: np.ndarray
    length: float
    t_values: np.ndarray   # (2,) v.t at the endpoints
    n_values: np.ndarray   # (2,) v.n at the endpoints
    n_mean: float          # edge DOF

    def normal_component(self, s):
        na, nb, nm = _trace_shapes(np.asarray(s, dtype=float))
        return self.n_values[0] * na + self.n_values[1] * nb + self.n_mean * nm

    def tangential_component(self, s):
        s = np.asarray(s, dtype=float)
        return self.t_values[0] * (1 - s) + self.t_values[1] * s

    def eval(self, s):
        vn = np.atleast_1d(self.normal_component(s))
        vt = np.atleast_1d(self.tangential_component(s))
        return np.outer(vn, self.normal) + np.outer(vt, self.tangent)


class LocalElement:
    """Geometry, sub-triangulation and projection matrices of one cell."""

    def __init__(self, mesh=None, cell=None, points=None, quad_degree=4):
        if points is not None:
            self.points = np.asarray(points, dtype=float)
            self.geom = element_geometry(self.points)
            self.subtri = fan_triangulate(self.points)
        else:
            self.points = mesh.cell_points(cell)
            self.geom = mesh.geometry(cell)
            self.subtri = mesh.subtriangulation(cell)
        self.cell = cell
        self.quad_degree = quad_degree
        self.n_vertices = len(self.points)
        self.n_dofs = 3 * self.n_vertices
        self.basis1 = monomials(self.geom.centroid, self.geom.diameter, 1)
        self.basis2 = monomials(self.geom.centroid, self.geom.diameter, 2)

    @cached_property
    def monomial_integrals(self):
        """Integrals over E of the six degree<=2 scaled monomials."""
        return integrate_polygon(self.subtri, self.basis2.eval, self.quad_degree)

    @cached_property
    def scalar_p1_mass(self):
        i = self.monomial_integrals
        return np.array([[i[0], i[1], i[2]],
                         [i[1], i[3], i[4]],
                         [i[2], i[4], i[5]]])

    @cached_property
    def vector_p1_mass(self):
        m6 = np.zeros((6, 6))
        m6[:3, :3] = self.scalar_p1_mass
        m6[3:, 3:] = self.scalar_p1_mass
        return m6

    @cached_property
    def dof_matrix(self):
        """D (3m, 6): DOFs of the six vector P1 monomials."""
        m = self.n_vertices
        vals = self.basis1.eval(self.points)          # (m, 3)
        mids = (self.points + np.roll(self.points, -1, axis=0)) / 2.0
        mid_vals = self.basis1.eval(mids)             # (m, 3)
        D = np.zeros((self.n_dofs, 6))
        for c in range(2):
            D[c:2 * m:2, 3 * c:3 * c + 3] = vals
            D[2 * m:, 3 * c:3 * c + 3] = mid_vals * self.geom.normals[:, c:c + 1]
        return D

    @cached_property
    def div_row(self):
        """Constant divergence from the DOFs: (1/|E|) sum |e| dof_e."""
        row = np.zeros(self.n_dofs)
        row[2 * self.n_vertices:] = self.geom.edge_lengths / self.geom.area
        return row

    def _edge_component_integrals(self):
        """(m, 3m) arrays Ix, Iy with int_e of each basis function's x/y
        component, assembled from the trace decomposition."""
        m = self.n_vertices
        out = [np.zeros((m, self.n_dofs)), np.zeros((m, self.n_dofs))]
        for e in range(m):
            le = self.geom.edge_lengths[e]
            n, t = self.geom.normals[e], self.geom.tangents[e]
            va, vb = e, (e + 1) % m
            for c in range(2):
                # int v.n = |e| * edge dof;  int v.t by the trapezoidal rule
                out[c][e, 2 * m + e] += n[c] * le
                for comp in range(2):
                    out[c][e, 2 * va + comp] += t[c] * (le / 2.0) * t[comp]
                    out[c][e, 2 * vb + comp] += t[c] * (le / 2.0) * t[comp]
        return out

    @cached_property
    def pi_nabla(self):
        """Energy projection matrix (6, 3m) onto vector P1, fixed on the
        constants by the vertex average."""
        m = self.n_vertices
        h = self.geom.diameter
        grads1 = np.array([[0.0, 0.0], [1.0 / h, 0.0], [0.0, 1.0 / h]])
        Ix, Iy = self._edge_component_integrals()
        comp_int = (Ix, Iy)

        G = np.zeros((6, 6))
        B = np.zeros((6, self.n_dofs))
        vert_avg = self.basis1.eval(self.points).mean(axis=0)  # (3,)
        for c in range(2):
            row0 = 3 * c
            G[row0, 3 * c:3 * c + 3] = vert_avg
            B[row0, c:2 * m:2] = 1.0 / m
            for a in (1, 2):
                alpha = row0 + a
                for b in (1, 2):
                    G[alpha, row0 + b] = self.geom.area * grads1[a] @ grads1[b]
                flux = self.geom.normals @ grads1[a]  # (m,) grad(m_a).n_e
                B[alpha] = flux @ comp_int[c]
        cond = np.linalg.cond(G)
        if cond > _COND_WARN:
            warnings.warn(
                f"ill-conditioned projection system (cond {cond:.2e}) on cell "
                f"{self.cell}; see regularity_report", RuntimeWarning)
        return np.linalg.solve(G, B)

    @cached_property
    def _decomposition(self):
        """Coefficients expressing each vector P1 monomial as grad(s) + d*g
        with s in span{xi, eta, xi^2, xi*eta, eta^2} and g = (eta, -xi)."""
        h = self.geom.diameter
        M = np.zeros((6, 6))
        M[:, 0] = [1 / h, 0, 0, 0, 0, 0]      # grad xi
        M[:, 1] = [0, 0, 0, 1 / h, 0, 0]      # grad eta
        M[:, 2] = [0, 2 / h, 0, 0, 0, 0]      # grad xi^2
        M[:, 3] = [0, 0, 1 / h, 0, 1 / h, 0]  # grad xi*eta
        M[:, 4] = [0, 0, 0, 0, 0, 2 / h]      # grad eta^2
        M[:, 5] = [0, 0, 1, 0, -1, 0]         # g
        return np.linalg.solve(M, np.eye(6))

    @cached_property
    def pi_zero(self):
        """L2 projection matrix (6, 3m) onto vector P1 via the divergence
        theorem, the boundary P2 normal traces and the enhanced-space
        substitution (v, g) -> (pi_nabla v, g)."""
        m = self.n_vertices
        ints = self.monomial_integrals
        dec = self._decomposition        # column alpha: (c_1..c_5, d)
        s_ints = ints[1:6]               # integrals of xi, eta, xi^2, xi eta, eta^2

        # moments of g against the vector P1 monomials
        g_moments = np.array([ints[2], ints[4], ints[5], -ints[1], -ints[3], -ints[4]])

        B0 = np.empty((6, self.n_dofs))
        div_term = np.outer(dec[:5].T @ s_ints, self.div_row)

        # boundary term: int_e (v.n) s_alpha edge by edge with 3-point Gauss
        sg = _GAUSS3.points
        wg = _GAUSS3.weights
        na_s, nb_s, nm_s = _trace_shapes(sg)
        bdry = np.zeros((6, self.n_dofs))
        for e in range(m):
            le = self.geom.edge_lengths[e]
            n = self.geom.normals[e]
            va, vb = e, (e + 1) % m
            pa, pb = self.points[va], self.points[vb]
            pts = pa + np.outer(sg, pb - pa)
            s_vals = self.basis2.eval(pts)[:, 1:6] @ dec[:5]  # (ngauss, 6)
            q = np.zeros((len(sg), self.n_dofs))
            q[:, 2 * m + e] = nm_s
            for comp in range(2):
                q[:, 2 * va + comp] = n[comp] * na_s
                q[:, 2 * vb + comp] = n[comp] * nb_s
            bdry += le * (s_vals * wg[:, None]).T @ q

        rot_term = np.outer(dec[5], g_moments @ self.pi_nabla)
        B0 = -div_term + bdry + rot_term
        return np.linalg.solve(self.vector_p1_mass, B0)

    @cached_property
    def grad_gram(self):
        """Exact (grad p_alpha, grad p_beta)_E Gram matrix (6, 6)."""
        h2 = self.geom.diameter**2
        G = np.zeros((6, 6))
        for c in range(2):
            for a in (1, 2):
                G[3 * c + a, 3 * c + a] = self.geom.area / h2
        return G

    def stability_ops(self):
        """DOF-difference operators (I - D pi) entering the stabilizers."""
        D = self.dof_matrix
        eye = np.eye(self.n_dofs)
        return eye - D @ self.pi_nabla, eye - D @ self.pi_zero


def local_element(mesh, cell, quad_degree=4) -> LocalElement:
    return LocalElement(mesh, cell, quad_degree=quad_degree)


def compute_pi_nabla(element):
    return element.pi_nabla


def compute_pi_zero(element):
    return element.pi_zero


def divergence_row(element):
    return element.div_row


def stabilization_matrices(element, kappa_inv):
    """Dofi-dofi stabilizers: identity for the gradient part, |E|/kappa times
    the identity for the reaction part (applied to DOF differences)."""
    if kappa_inv < 0:
        raise ValueError("kappa must be positive")
    n = element.n_dofs
    return np.eye(n), element.geom.area * kappa_inv * np.eye(n)


@dataclass
class LocalForms:
    A: np.ndarray      # (3m, 3m) discrete bilinear form (viscosity excluded)
    B_row: np.ndarray  # (3m,) pairing with the element's constant pressure
    stab_nabla: np.ndarray
    stab_zero: np.ndarray


def local_forms(element, kappa_inv) -> LocalForms:
    """a_h^E = (grad pi v, grad pi w) + dofi-dofi stabilizer
             + kappa^{-1} (pi0 v, pi0 w) + (|E|/kappa) dofi-dofi stabilizer.

    For k = 1 the gradient of the energy projection equals the elementwise
    L2 projection of the gradient, so the first term is assembled from
    pi_nabla directly.  kappa_inv = 0 drops the reaction part entirely.
    """
    if kappa_inv < 0:
        raise ValueError("kappa must be positive")
    sn_op, sz_op = element.stability_ops()
    pin, piz = element.pi_nabla, element.pi_zero
    A = pin.T @ element.grad_gram @ pin + sn_op.T @ sn_op
    if kappa_inv > 0:
        A = A + kappa_inv * (piz.T @ element.vector_p1_mass @ piz)
        A = A + (element.geom.area * kappa_inv) * (sz_op.T @ sz_op)
    B_row = element.geom.area * element.div_row
    return LocalForms(A, B_row, sn_op, sz_op)


def dof_interpolate(u, element, adaptive=False):
    """DOF vector of an analytic field: vertex values plus Gauss-integrated
    mean normal fluxes (composite rule when `adaptive`)."""
    m = element.n_vertices
    dofs = np.empty(element.n_dofs)
    vals = np.asarray(u(element.points), dtype=float)
    dofs[0:2 * m:2] = vals[:, 0]
    dofs[1:2 * m:2] = vals[:, 1]
    for e in range(m):
        n = element.geom.normals[e]
        a, b = element.points[e], element.points[(e + 1) % m]
        flux = integrate_edge(a, b, lambda p: np.asarray(u(p)) @ n, 3,
                              adaptive=adaptive)
        dofs[2 * m + e] = flux / element.geom.edge_lengths[e]
    return dofs


def evaluate_projection(element, dofs, which, points):
    """Evaluate pi_nabla or pi_zero of a DOF vector at physical points."""
    pi = element.pi_nabla if which == "nabla" else element.pi_zero
    coeff = pi @ dofs
    mono = element.basis1.eval(points)
    return np.stack([mono @ coeff[0:3], mono @ coeff[3:6]], axis=1)


def projection_gradient(element, dofs):
    """Constant gradient matrix of pi_nabla(v): rows are components, columns
    are x/y derivatives."""
    coeff = element.pi_nabla @ dofs
    h = element.geom.diameter
    return np.array([[coeff[1], coeff[2]], [coeff[4], coeff[5]]]) / h


def edge_trace(dofs, element, edge) -> EdgeTrace:
    m = element.n_vertices
    n = element.geom.normals[edge]
    t = element.geom.tangents[edge]
    va, vb = edge, (edge + 1) % m
    a = np.array([dofs[2 * va], dofs[2 * va + 1]])
    b = np.array([dofs[2 * vb], dofs[2 * vb + 1]])
    return EdgeTrace(n, t, element.geom.edge_lengths[edge],
                     np.array([a @ t, b @ t]), np.array([a @ n, b @ n]),
                     dofs[2 * m + edge])


def vertex_average(element, dofs):
    m = element.n_vertices
    return np.array([dofs[0:2 * m:2].mean(), dofs[1:2 * m:2].mean()])
