"""Residual a posteriori estimator, Doerfler marking and the adaptive loop.

Per element the squared indicator is the sum of a data term h_E^2 ||f||^2,
the scaled stabilizer energies of the non-polynomial DOF remainder, and a
residual term combining the reaction volume residual with the interior-edge
jumps of the projected traction nu grad(pi u_h) - p_h I.  Interior edges
contribute half of h_e ||jump||_e^2 to each incident element.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import ProblemData, local_velocity_dofs, solve_problem
from .elements import projection_gradient
from .mesh import refine_cells
from .quadrature import integrate_polygon


@dataclass
class Estimates:
    eta_f_sq: np.ndarray
    eta_S_sq: np.ndarray
    eta_r_sq: np.ndarray

    @property
    def eta_sq(self):
        return self.eta_f_sq + self.eta_S_sq + self.eta_r_sq

    @property
    def eta(self):
        return float(np.sqrt(self.eta_sq.sum()))


def edge_jumps(system, result):
    """Squared traction jumps |[nu grad(pi u_h) - p_h I] n_e|^2 per edge
    (zero on boundary edges).  Hanging vertices split edges at the finest
    level, so every stored edge is a common sub-edge of its two cells."""
    mesh = system.mesh
    nu = system.data.nu
    grads = np.empty((mesh.n_cells, 2, 2))
    for c, elem in enumerate(system.elements):
        grads[c] = projection_gradient(elem, local_velocity_dofs(system, result, c))

    jumps = np.zeros(mesh.n_edges)
    for e in range(mesh.n_edges):
        cp, cm = system.mesh.edge_cells[e]
        if cp < 0 or cm < 0:
            continue
        n = mesh.edge_normal(e)
        Tp = nu * grads[cp] - result.pressure[cp] * np.eye(2)
        Tm = nu * grads[cm] - result.pressure[cm] * np.eye(2)
        j = (Tp - Tm) @ n
        jumps[e] = float(j @ j)
    return jumps


def estimate(system, result) -> Estimates:
    """Per-element estimator components for a solved state."""
    mesh = system.mesh
    data = system.data
    nu = data.nu
    force = data.force()
    nc = mesh.n_cells

    jumps = edge_jumps(system, result)
    edge_len = np.array([mesh.edge_length(e) for e in range(mesh.n_edges)])

    eta_f = np.empty(nc)
    eta_S = np.empty(nc)
    eta_r = np.empty(nc)
    for c, elem in enumerate(system.elements):
        h2 = elem.geom.diameter**2
        dofs = local_velocity_dofs(system, result, c)
        kinv = system.kappa_inv[c]

        fsq = integrate_polygon(
            elem.subtri, lambda p: (np.asarray(force(p))**2).sum(axis=1),
            data.quad_degree, adaptive=data.adaptive_quad)
        eta_f[c] = h2 * fsq

        sn_op, sz_op = elem.stability_ops()
        dn = sn_op @ dofs
        dz = sz_op @ dofs
        eta_S[c] = nu**2 * (dn @ dn + elem.geom.area * kinv * (dz @ dz))

        # reaction volume residual: pi_zero u_h is P1, exact Gram integral
        coeff = elem.pi_zero @ dofs
        vol = coeff[:3] @ elem.scalar_p1_mass @ coeff[:3] \
            + coeff[3:] @ elem.scalar_p1_mass @ coeff[3:]
        eta_r[c] = (nu * kinv)**2 * h2 * vol

        interior = [k for k, e in enumerate(mesh.cell_edges[c])
                    if not mesh.boundary_edges[e]]
        for k in interior:
            e = mesh.cell_edges[c][k]
            # ||J||_e^2 = |J|^2 h_e for the constant jump
            eta_r[c] += 0.5 * edge_len[e] * (jumps[e] * edge_len[e])
    return Estimates(eta_f, eta_S, eta_r)


def dorfler_mark(eta_sq, delta):
    """Smallest cell set carrying at least delta of the total squared
    estimator (ties broken by cell index)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("marking parameter delta must lie in (0, 1)")
    eta_sq = np.asarray(eta_sq, dtype=float)
    total = eta_sq.sum()
    if total <= 0.0:
        return np.array([], dtype=int)
    order = np.lexsort((np.arange(len(eta_sq)), -eta_sq))
    csum = np.cumsum(eta_sq[order])
    k = int(np.searchsorted(csum, delta * total - 1e-14 * total)) + 1
    marked = order[:k]
    assert csum[k - 1] >= delta * total * (1.0 - 1e-12)
    assert k == 1 or csum[k - 2] < delta * total
    return np.sort(marked)


@dataclass
class AdaptiveConfig:
    delta: float = 0.4
    max_iterations: int = 30
    node_tolerance: int = 10**4

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass
class TraceRecord:
    iteration: int
    n_nodes: int
    n_dofs: int
    eta: float
    eta_f: float
    eta_S: float
    eta_r: float
    n_marked: int
    wall_time: float
    err_u: float = None      # nu * energy error, when the exact solution is known
    err_p: float = None
    total_error: float = None
    effectivity: float = None


@dataclass
class AdaptiveTrace:
    records: list = field(default_factory=list)
    final_mesh: object = None
    final_result: object = None
    final_system: object = None
    final_estimates: object = None


def effectivity(record_or_eta, err_u=None, err_p=None):
    """Eff = (eta^2 / (err_u^2 + err_p^2))^(1/2) with err_u = nu * energy error."""
    if err_u is None:
        rec = record_or_eta
        eta, err_u, err_p = rec.eta, rec.err_u, rec.err_p
    else:
        eta = record_or_eta
    den = err_u**2 + err_p**2
    if den <= 0.0:
        raise ValueError("effectivity undefined: zero true error")
    return float(np.sqrt(eta**2 / den))


def adaptive_loop(mesh, data_or_case, config: AdaptiveConfig,
                  exact_case=None, rhs_mode="robust") -> AdaptiveTrace:
    """Solve -> Estimate -> Mark -> Refine until the iteration budget or the
    node-count tolerance is reached.  Accepts a ProblemData or a
    ManufacturedCase (whose exact fields feed the error columns)."""
    from .studies import compute_errors  # cycle-breaking local import

    if isinstance(data_or_case, ProblemData):
        data = data_or_case
        case = exact_case
    else:
        case = data_or_case
        data = case.problem_data(rhs_mode)
        if exact_case is None and case.has_exact:
            exact_case = case

    trace = AdaptiveTrace()
    for it in range(1, config.max_iterations + 1):
        t0 = time.perf_counter()
        result, system = solve_problem(mesh, data)
        est = estimate(system, result)
        eta_sq = est.eta_sq

        rec = TraceRecord(
            iteration=it, n_nodes=mesh.n_vertices,
            n_dofs=system.dofmap.n_velocity, eta=est.eta,
            eta_f=float(np.sqrt(est.eta_f_sq.sum())),
            eta_S=float(np.sqrt(est.eta_S_sq.sum())),
            eta_r=float(np.sqrt(est.eta_r_sq.sum())),
            n_marked=0, wall_time=0.0)
        if exact_case is not None and exact_case.has_exact:
            rep = compute_errors(system, result, exact_case)
            rec.err_u = data.nu * rep.err_u
            rec.err_p = rep.err_p
            rec.total_error = float(np.hypot(rec.err_u, rec.err_p))
            if rec.total_error > 0:
                rec.effectivity = effectivity(est.eta, rec.err_u, rec.err_p)

        stop = (it == config.max_iterations
                or mesh.n_vertices >= config.node_tolerance
                or eta_sq.sum() <= 0.0)
        if not stop:
            marked = dorfler_mark(eta_sq, config.delta)
            rec.n_marked = len(marked)
            mesh = refine_cells(mesh, marked)
        rec.wall_time = time.perf_counter() - t0
        trace.records.append(rec)
        if stop:
            trace.final_mesh = system.mesh
            trace.final_result = result
            trace.final_system = system
            trace.final_estimates = est
            break
    return trace
