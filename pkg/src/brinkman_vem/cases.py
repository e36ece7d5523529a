"""Manufactured solutions and high-contrast permeability rasters.

Forcing terms are hand-derived from the momentum balance
f = -nu Lap(u) + nu kappa^{-1} u - grad(p) with divergence-free u and
zero-mean p; the flow cases (fibrous, foam) carry no exact solution and are
driven by a unit horizontal boundary velocity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import ProblemData


@dataclass
class ManufacturedCase:
    name: str
    nu: float
    kappa: object                 # constant, per-cell array, or callable
    f: object
    g: object                     # Dirichlet boundary velocity
    u: object = None              # exact velocity, None for flow-only cases
    grad_u: object = None         # exact velocity gradient (N, 2, 2)
    p: object = None              # exact zero-mean pressure
    quad_degree: int = 4
    adaptive_quad: bool = False

    @property
    def has_exact(self):
        return self.u is not None

    def problem_data(self, rhs_mode="robust") -> ProblemData:
        return ProblemData(nu=self.nu, kappa=self.kappa, f=self.f, g=self.g,
                           rhs_mode=rhs_mode, quad_degree=self.quad_degree,
                           adaptive_quad=self.adaptive_quad)


def _vec(a, b):
    return np.stack([a, b], axis=1)


def _sincos_case(nu, kappa):
    two_pi = 2.0 * np.pi
    kinv = 1.0 / kappa

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return _vec(np.sin(two_pi * x) * np.cos(two_pi * y),
                    -np.cos(two_pi * x) * np.sin(two_pi * y))

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = two_pi * np.cos(two_pi * x) * np.cos(two_pi * y)
        g[:, 0, 1] = -two_pi * np.sin(two_pi * x) * np.sin(two_pi * y)
        g[:, 1, 0] = two_pi * np.sin(two_pi * x) * np.sin(two_pi * y)
        g[:, 1, 1] = -two_pi * np.cos(two_pi * x) * np.cos(two_pi * y)
        return g

    def p(pts):
        return pts[:, 0] ** 2 * pts[:, 1] ** 2 - 1.0 / 9.0

    def f(pts):
        x, y = pts[:, 0], pts[:, 1]
        # Lap(u) = -8 pi^2 u, grad p = (2 x y^2, 2 x^2 y)
        uu = u(pts)
        return nu * (8.0 * np.pi**2 + kinv) * uu - _vec(2 * x * y**2, 2 * x**2 * y)

    return u, grad_u, p, f


def _bubble_case(nu, kappa):
    kinv = 1.0 / kappa

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        a = x**2 - 2 * x**3 + x**4
        b = y - 3 * y**2 + 2 * y**3
        c = x - 3 * x**2 + 2 * x**3
        d = y**2 - 2 * y**3 + y**4
        return _vec(10 * a * b, -10 * c * d)

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        a = x**2 - 2 * x**3 + x**4
        da = 2 * x - 6 * x**2 + 4 * x**3
        b = y - 3 * y**2 + 2 * y**3
        db = 1 - 6 * y + 6 * y**2
        c = x - 3 * x**2 + 2 * x**3
        dc = 1 - 6 * x + 6 * x**2
        d = y**2 - 2 * y**3 + y**4
        dd = 2 * y - 6 * y**2 + 4 * y**3
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = 10 * da * b
        g[:, 0, 1] = 10 * a * db
        g[:, 1, 0] = -10 * dc * d
        g[:, 1, 1] = -10 * c * dd
        return g

    def p(pts):
        x, y = pts[:, 0], pts[:, 1]
        return -10 * (2 * x - 1) * (2 * y - 1)

    def f(pts):
        x, y = pts[:, 0], pts[:, 1]
        a = x**2 - 2 * x**3 + x**4
        d2a = 2 - 12 * x + 12 * x**2
        b = y - 3 * y**2 + 2 * y**3
        d2b = -6 + 12 * y
        c = x - 3 * x**2 + 2 * x**3
        d2c = -6 + 12 * x
        d = y**2 - 2 * y**3 + y**4
        d2d = 2 - 12 * y + 12 * y**2
        lap1 = 10 * (d2a * b + a * d2b)
        lap2 = -10 * (d2c * d + c * d2d)
        gp1 = -20 * (2 * y - 1)
        gp2 = -20 * (2 * x - 1)
        uu = u(pts)
        return _vec(-nu * lap1 + nu * kinv * uu[:, 0] - gp1,
                    -nu * lap2 + nu * kinv * uu[:, 1] - gp2)

    return u, grad_u, p, f


def _boundary_layer_case(nu, kappa):
    # layer profile E(t) = (1 - e^{t/nu}) / (1 - e^{1/nu}) written in terms
    # of e^{(t-1)/nu} to stay finite for small nu
    kinv = 1.0 / kappa
    em1 = math.exp(-1.0 / nu)

    def layer(t):
        return (np.exp((t - 1.0) / nu) - em1) / (1.0 - em1)

    def dlayer(t):
        return np.exp((t - 1.0) / nu) / (nu * (1.0 - em1))

    def d2layer(t):
        return np.exp((t - 1.0) / nu) / (nu**2 * (1.0 - em1))

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return _vec(y - layer(y), x - layer(x))

    def grad_u(pts):
        x, y = pts[:, 0], pts[:, 1]
        g = np.zeros((len(pts), 2, 2))
        g[:, 0, 1] = 1.0 - dlayer(y)
        g[:, 1, 0] = 1.0 - dlayer(x)
        return g

    def p(pts):
        return pts[:, 1] - pts[:, 0]

    def f(pts):
        x, y = pts[:, 0], pts[:, 1]
        uu = u(pts)
        # -nu Lap u = nu d2layer, grad p = (-1, 1)
        return _vec(nu * d2layer(y) + nu * kinv * uu[:, 0] + 1.0,
                    nu * d2layer(x) + nu * kinv * uu[:, 1] - 1.0)

    return u, grad_u, p, f


def _interior_layer_case(nu, kappa):
    kinv = 1.0 / kappa
    # zero-mean shift of 2 e^x sin(y) over the unit square
    p_mean = 2.0 * (math.e - 1.0) * (1.0 - math.cos(1.0))

    def bump(pts):
        gline = 1.5 - pts[:, 0] - pts[:, 1]
        return gline, np.exp(-1000.0 * gline**2)

    def u(pts):
        _, E = bump(pts)
        return _vec(-1000.0 * E, 1000.0 * E)

    def grad_u(pts):
        gline, E = bump(pts)
        d = 2.0e6 * gline * E      # d/dx of (-1000 E) = -2e6 g E with g_x = -1
        g = np.empty((len(pts), 2, 2))
        g[:, 0, 0] = -d
        g[:, 0, 1] = -d
        g[:, 1, 0] = d
        g[:, 1, 1] = d
        return g

    def p(pts):
        return 2.0 * np.exp(pts[:, 0]) * np.sin(pts[:, 1]) - p_mean

    def f(pts):
        x, y = pts[:, 0], pts[:, 1]
        gline, E = bump(pts)
        lap1 = (4.0e6 - 8.0e9 * gline**2) * E
        uu = u(pts)
        return _vec(-nu * lap1 + nu * kinv * uu[:, 0] - 2 * np.exp(x) * np.sin(y),
                    nu * lap1 + nu * kinv * uu[:, 1] - 2 * np.exp(x) * np.cos(y))

    return u, grad_u, p, f


def _unit_horizontal(pts):
    out = np.zeros((len(pts), 2))
    out[:, 0] = 1.0
    return out


@dataclass
class KappaRaster:
    """Cell-centered grid of inverse permeability values over the unit
    square; row j covers y in [j/ny, (j+1)/ny) (bottom row first)."""

    values: np.ndarray  # (ny, nx) kappa^{-1}
    bounds: tuple = (0.0, 0.0, 1.0, 1.0)

    def lookup(self, point):
        x0, y0, x1, y1 = self.bounds
        ny, nx = self.values.shape
        i = min(max(int((point[0] - x0) / (x1 - x0) * nx), 0), nx - 1)
        j = min(max(int((point[1] - y0) / (y1 - y0) * ny), 0), ny - 1)
        return float(self.values[j, i])


def load_kappa_raster(path) -> KappaRaster:
    """Raster file: first line 'nx ny', then ny rows of nx kappa^{-1} values
    (bottom row first)."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError(f"malformed raster file {path}")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
    except ValueError as exc:
        raise ValueError(f"malformed raster file {path}: {exc}") from exc
    if len(vals) != nx * ny:
        raise ValueError(
            f"raster file {path}: expected {nx * ny} values, got {len(vals)}")
    if np.any(vals <= 0):
        raise ValueError(f"raster file {path}: non-positive kappa^{{-1}} entry")
    return KappaRaster(vals.reshape(ny, nx))


def kappa_field(raster: KappaRaster, mesh):
    """Per-cell permeability: kappa = 1 / (raster value at the centroid)."""
    return np.array([1.0 / raster.lookup(mesh.geometry(c).centroid)
                     for c in range(mesh.n_cells)])


_CASE_DEFAULTS = {
    "ex61": dict(nu=1.0, kappa=1.0),
    "ex64": dict(nu=1e-2, kappa=1.0),
    "ex65": dict(nu=1e-2, kappa=1.0),
    "ex66": dict(nu=0.5, kappa=100.0),
    "fibrous": dict(nu=1e-2),
    "foam": dict(nu=1e-2),
}

_CASE_BUILDERS = {
    "ex61": _sincos_case,
    "ex64": _bubble_case,
    "ex65": _boundary_layer_case,
    "ex66": _interior_layer_case,
}


def case_registry(name, nu=None, kappa=None, kappa_raster=None,
                  mesh=None) -> ManufacturedCase:
    """Construct a registered case on the unit square.

    Analytic cases: ex61 (smooth, viscosity sweeps), ex64 (polynomial bubble,
    adaptivity), ex65 (boundary layers along x=1 and y=1), ex66 (interior
    layer along 1.5-x-y=0).  Flow cases fibrous/foam take their permeability
    from a raster (requires `kappa_raster` and `mesh`) and have no exact
    solution.
    """
    if name not in _CASE_DEFAULTS:
        raise KeyError(f"unknown case {name!r}; known: {sorted(_CASE_DEFAULTS)}")
    defaults = _CASE_DEFAULTS[name]
    nu = defaults["nu"] if nu is None else float(nu)

    if name in ("fibrous", "foam"):
        if kappa_raster is None:
            raise ValueError(f"case {name!r} requires a kappa raster")
        if mesh is not None:
            kap = kappa_field(kappa_raster, mesh)
        else:
            kap = lambda x: 1.0 / kappa_raster.lookup(x)
        return ManufacturedCase(name=name, nu=nu, kappa=kap, f=None,
                                g=_unit_horizontal)

    kappa = defaults["kappa"] if kappa is None else float(kappa)
    u, grad_u, p, f = _CASE_BUILDERS[name](nu, kappa)
    layered = name in ("ex65", "ex66")
    return ManufacturedCase(
        name=name, nu=nu, kappa=kappa, f=f, g=u, u=u, grad_u=grad_u, p=p,
        quad_degree=6 if layered else 4, adaptive_quad=layered)
