"""Global saddle-point assembly and direct solve.

Unknowns are ordered velocity (2 per vertex, then 1 mean normal flux per
edge), one constant pressure per cell, and a single Lagrange multiplier
enforcing the zero pressure mean:

    [ nu A   B^T  0 ] [u]       [F]
    [ B      0    m ] [p]   =   [0]
    [ 0      m^T  0 ] [lam]     [0]

Each edge carries one global flux DOF w.r.t. the fixed edge normal (the
low-to-high vertex direction rotated by -90 degrees); per-element signs
reconcile it with the outward normals.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import LocalElement, local_forms
from .quadrature import integrate_edge
from .rt0 import build_reconstruction, load_vector, standard_load_vector


class SolverError(RuntimeError):
    pass


@dataclass
class GlobalDofMap:
    n_vertices: int
    n_edges: int
    n_cells: int
    cell_dofs: list        # per cell: (3m,) global velocity dof indices
    cell_signs: list       # per cell: (3m,) +-1 (edge-flux orientation)
    boundary_dofs: np.ndarray  # bool mask over velocity dofs

    @property
    def n_velocity(self):
        return 2 * self.n_vertices + self.n_edges

    @property
    def total(self):
        return self.n_velocity + self.n_cells + 1


def build_global_dof_map(mesh) -> GlobalDofMap:
    nv = mesh.n_vertices
    cell_dofs, cell_signs = [], []
    for c in range(mesh.n_cells):
        idx = mesh.cells[c]
        m = len(idx)
        dofs = np.empty(3 * m, dtype=int)
        dofs[0:2 * m:2] = 2 * idx
        dofs[1:2 * m:2] = 2 * idx + 1
        dofs[2 * m:] = 2 * nv + mesh.cell_edges[c]
        signs = np.ones(3 * m)
        signs[2 * m:] = mesh.cell_edge_signs[c]
        cell_dofs.append(dofs)
        cell_signs.append(signs)
    bdry = np.zeros(2 * nv + mesh.n_edges, dtype=bool)
    bdry[0:2 * nv:2] = mesh.boundary_vertices
    bdry[1:2 * nv:2] = mesh.boundary_vertices
    bdry[2 * nv:] = mesh.boundary_edges
    return GlobalDofMap(nv, mesh.n_edges, mesh.n_cells, cell_dofs, cell_signs, bdry)


def _zero_field(points):
    return np.zeros((len(points), 2))


@dataclass
class ProblemData:
    """Coefficients and data of one Brinkman problem.

    `kappa` may be a positive constant (math.inf gives a pure Stokes term),
    a per-cell array, or a callable evaluated at cell centroids.  `f` and
    `g` map (N, 2) point arrays to (N, 2) values; None means zero.
    """

    nu: float
    kappa: object = 1.0
    f: object = None
    g: object = None
    rhs_mode: str = "robust"
    quad_degree: int = 4
    adaptive_quad: bool = False

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity nu must be positive")
        if self.rhs_mode not in ("robust", "standard"):
            raise ValueError(f"unknown rhs_mode {self.rhs_mode!r}")

    def kappa_inv(self, mesh):
        """Per-cell inverse permeability."""
        if callable(self.kappa):
            vals = np.array([float(self.kappa(mesh.geometry(c).centroid))
                             for c in range(mesh.n_cells)])
        else:
            vals = np.broadcast_to(np.asarray(self.kappa, dtype=float),
                                   (mesh.n_cells,)).copy()
        if np.any(vals <= 0):
            raise ValueError("kappa must be positive")
        return 1.0 / vals

    def force(self):
        return self.f if self.f is not None else _zero_field

    def dirichlet(self):
        return self.g if self.g is not None else _zero_field


@dataclass
class SparseSystem:
    """Assembled blocks (A carries no viscosity factor; the full matrix
    applies nu) plus the per-element cache reused by estimators and norms."""

    mesh: object
    data: ProblemData
    dofmap: GlobalDofMap
    A: sp.csr_matrix
    B: sp.csr_matrix
    area_vector: np.ndarray
    load: np.ndarray
    kappa_inv: np.ndarray
    elements: list
    boundary_values: np.ndarray = None  # set by apply_dirichlet

    def full_matrix(self):
        nu = self.data.nu
        m = sp.csr_matrix(self.area_vector[:, None])
        return sp.bmat([[nu * self.A, self.B.T, None],
                        [self.B, None, m],
                        [None, m.T, None]], format="csr")

    def full_rhs(self):
        rhs = np.zeros(self.dofmap.total)
        rhs[:self.dofmap.n_velocity] = self.load
        return rhs


def assemble(mesh, data: ProblemData) -> SparseSystem:
    """Assemble the velocity form, divergence rows and the load for the
    requested right-hand-side mode ('robust' tests the force against the
    divergence-preserving reconstruction, 'standard' against pi_zero)."""
    dofmap = build_global_dof_map(mesh)
    kinv = data.kappa_inv(mesh)
    force = data.force()

    n_vel = dofmap.n_velocity
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    load = np.zeros(n_vel)
    areas = np.empty(mesh.n_cells)
    elements = []

    for c in range(mesh.n_cells):
        elem = LocalElement(mesh, c, quad_degree=data.quad_degree)
        forms = local_forms(elem, kinv[c])
        gd = dofmap.cell_dofs[c]
        gs = dofmap.cell_signs[c]

        Aloc = forms.A * np.outer(gs, gs)
        rows.append(np.repeat(gd, len(gd)))
        cols.append(np.tile(gd, len(gd)))
        vals.append(Aloc.ravel())

        brows.append(np.full(len(gd), c))
        bcols.append(gd)
        bvals.append(forms.B_row * gs)

        if data.rhs_mode == "robust":
            recon = build_reconstruction(elem)
            r = load_vector(elem, recon, force, degree=data.quad_degree,
                            adaptive=data.adaptive_quad)
            elem.reconstruction = recon
        else:
            r = standard_load_vector(elem, force, degree=data.quad_degree,
                                     adaptive=data.adaptive_quad)
        np.add.at(load, gd, r * gs)

        areas[c] = elem.geom.area
        elements.append(elem)

    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_vel, n_vel)).tocsr()
    B = sp.coo_matrix(
        (np.concatenate(bvals), (np.concatenate(brows), np.concatenate(bcols))),
        shape=(mesh.n_cells, n_vel)).tocsr()
    return SparseSystem(mesh, data, dofmap, A, B, areas, load, kinv, elements)


def boundary_dof_values(mesh, dofmap, g, adaptive=False):
    """Dirichlet values on the boundary velocity DOFs: nodal values at
    boundary vertices, Gauss-integrated mean normal fluxes on boundary edges
    (w.r.t. the global edge normal)."""
    vals = np.zeros(dofmap.n_velocity)
    bverts = np.nonzero(mesh.boundary_vertices)[0]
    if len(bverts):
        gv = np.asarray(g(mesh.vertices[bverts]), dtype=float)
        vals[2 * bverts] = gv[:, 0]
        vals[2 * bverts + 1] = gv[:, 1]
    for e in np.nonzero(mesh.boundary_edges)[0]:
        a, b = mesh.edges[e]
        n = mesh.edge_normal(e)
        le = mesh.edge_length(e)
        flux = integrate_edge(mesh.vertices[a], mesh.vertices[b],
                              lambda p: np.asarray(g(p)) @ n, 3,
                              adaptive=adaptive)
        vals[2 * dofmap.n_vertices + e] = flux / le
    return vals


def apply_dirichlet(system: SparseSystem, g=None) -> SparseSystem:
    """Fix the boundary velocity DOFs from g and reject incompatible data
    (net boundary flux above 1e-8 * perimeter * max |g|)."""
    data = system.data
    gfun = g if g is not None else data.dirichlet()
    mesh, dofmap = system.mesh, system.dofmap
    vals = boundary_dof_values(mesh, dofmap, gfun, adaptive=data.adaptive_quad)

    bedges = np.nonzero(mesh.boundary_edges)[0]
    lengths = np.array([mesh.edge_length(e) for e in bedges])
    # global edge normals point out of the "plus" cell; on the boundary the
    # outward direction flips when the interior cell sits on the minus side
    outward = np.where(mesh.edge_cells[bedges, 1] == -1, 1.0, -1.0)
    net_flux = float((vals[2 * dofmap.n_vertices + bedges] * outward) @ lengths)
    gmax = np.abs(vals[dofmap.boundary_dofs]).max() if dofmap.boundary_dofs.any() else 0.0
    if abs(net_flux) > 1e-8 * lengths.sum() * max(gmax, 1e-30):
        raise ValueError(
            f"incompatible Dirichlet data: net boundary flux {net_flux:.3e}")

    bv = np.zeros(dofmap.n_velocity)
    bv[dofmap.boundary_dofs] = vals[dofmap.boundary_dofs]
    system.boundary_values = bv
    return system


@dataclass
class SolveResult:
    velocity: np.ndarray   # all velocity DOFs, boundary values included
    pressure: np.ndarray   # per-cell constants, zero mean
    multiplier: float
    residual: float        # relative residual of the full system


def solve(system: SparseSystem) -> SolveResult:
    """Direct sparse solve of the reduced saddle-point system.

    Internally the pressure is rescaled by 1/nu (exact algebra) so the
    factorized matrix is independent of the viscosity; one step of iterative
    refinement is applied and the residual of the original system checked.
    """
    if system.boundary_values is None:
        raise SolverError("apply_dirichlet must run before solve")
    dofmap = system.dofmap
    nu = system.data.nu
    free = ~dofmap.boundary_dofs
    nf = int(free.sum())
    nc = dofmap.n_cells

    A = system.A
    B = system.B
    ub = system.boundary_values
    m = sp.csr_matrix(system.area_vector[:, None])

    K = sp.bmat([[A[free][:, free], B[:, free].T, None],
                 [B[:, free], None, m],
                 [None, m.T, None]], format="csc")
    rhs = np.concatenate([
        system.load[free] / nu - A[free] @ ub,
        -B @ ub,
        [0.0],
    ])

    try:
        lu = spla.splu(K)
        x = lu.solve(rhs)
        x += lu.solve(rhs - K @ x)  # one refinement pass
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("solver returned non-finite values")

    u = ub.copy()
    u[free] = x[:nf]
    p = nu * x[nf:nf + nc]
    lam = nu * x[-1]

    # re-center the pressure mean exactly
    p -= (p @ system.area_vector) / system.area_vector.sum()

    full = system.full_matrix()
    xfull = np.concatenate([u, p, [lam]])
    rhs_full = system.full_rhs()
    # measure on the retained rows only; scale by the reduced right-hand side
    # (boundary lift included), which drives problems with zero body force
    res = full @ xfull - rhs_full
    keep = np.concatenate([free, np.ones(nc + 1, dtype=bool)])
    scale = max(float(np.linalg.norm(rhs_full[keep])), nu * float(np.linalg.norm(rhs)))
    rel = float(np.linalg.norm(res[keep])) / max(scale, 1e-300)
    if rel > 1e-8:
        raise SolverError(f"solver residual {rel:.3e} above tolerance")
    return SolveResult(u, p, lam, rel)


def divergence_field(system: SparseSystem, result: SolveResult):
    """Per-cell constant divergence of the discrete velocity."""
    out = np.empty(system.dofmap.n_cells)
    for c, elem in enumerate(system.elements):
        dofs = result.velocity[system.dofmap.cell_dofs[c]] * system.dofmap.cell_signs[c]
        out[c] = elem.div_row @ dofs
    return out


def local_velocity_dofs(system: SparseSystem, result: SolveResult, c):
    """Element-local DOF vector (edge fluxes w.r.t. outward normals)."""
    return result.velocity[system.dofmap.cell_dofs[c]] * system.dofmap.cell_signs[c]


def solve_problem(mesh, data: ProblemData):
    """assemble + apply_dirichlet + solve in one call."""
    system = assemble(mesh, data)
    apply_dirichlet(system)
    return solve(system), system
