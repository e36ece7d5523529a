"""Quadrature on triangles and edges, polygon integration, scaled monomial bases."""

import numpy as np
from numpy.polynomial.legendre import leggauss


class QuadratureRule:
    """Fixed-point rule: `points` in reference coordinates, `weights` on the
    reference measure (triangle area 1/2, unit interval length 1)."""

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = degree


def _tri_rule_from_orbits(orbits):
    # orbits: list of (barycentric tuple, weight); weights in the sum-to-one
    # convention, rescaled here to the reference area 1/2.
    pts, wts = [], []
    for bary, w in orbits:
        seen = set()
        for perm in ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2)):
            lam = tuple(bary[i] for i in perm)
            if lam in seen:
                continue
            seen.add(lam)
            pts.append((lam[1], lam[2]))  # x = lambda_2, y = lambda_3
            wts.append(w / 2.0)
    return np.array(pts), np.array(wts)


_D2 = _tri_rule_from_orbits([((2 / 3, 1 / 6, 1 / 6), 1 / 3)])
_D4 = _tri_rule_from_orbits(
    [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ]
)
_D6 = _tri_rule_from_orbits(
    [
        ((0.873821971016996, 0.063089014491502, 0.063089014491502), 0.050844906370207),
        ((0.501426509658179, 0.249286745170910, 0.249286745170910), 0.116786275726379),
        ((0.636502499121399, 0.310352451033785, 0.053145049844816), 0.082851075618374),
    ]
)

_TRIANGLE_RULES = {
    2: QuadratureRule(_D2[0], _D2[1], 2),
    4: QuadratureRule(_D4[0], _D4[1], 4),
    6: QuadratureRule(_D6[0], _D6[1], 6),
}


def triangle_rule(degree):
    """Symmetric rule on the reference triangle (0,0)-(1,0)-(0,1), exact to `degree`."""
    try:
        return _TRIANGLE_RULES[degree]
    except KeyError:
        raise ValueError(f"unsupported triangle rule degree {degree}; use 2, 4 or 6")


def edge_gauss(npoints):
    """Gauss-Legendre rule on [0, 1] with 2 or 3 points."""
    if npoints not in (2, 3):
        raise ValueError(f"unsupported edge rule with {npoints} points; use 2 or 3")
    x, w = leggauss(npoints)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0, 2 * npoints - 1)


def triangle_points(tri, rule):
    """Map reference rule points into the physical triangle `tri` (3, 2).

    Returns (points (q, 2), weights (q,)); weights include the Jacobian, so
    they sum to the (signed) triangle area.
    """
    p0, p1, p2 = tri
    ref = rule.points
    pts = p0 + np.outer(ref[:, 0], p1 - p0) + np.outer(ref[:, 1], p2 - p0)
    jac = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
    return pts, rule.weights * jac


def integrate_triangles(points, triangles, f, degree):
    """Integrate `f` over a collection of triangles given by vertex indices.

    `f` maps an (N, 2) array of points to (N,) or (N, k) values.
    """
    rule = triangle_rule(degree)
    tris = points[np.asarray(triangles)]
    nt = len(tris)
    nq = len(rule.points)
    allpts = np.empty((nt * nq, 2))
    allwts = np.empty(nt * nq)
    for i, tri in enumerate(tris):
        p, w = triangle_points(tri, rule)
        allpts[i * nq:(i + 1) * nq] = p
        allwts[i * nq:(i + 1) * nq] = w
    vals = np.asarray(f(allpts), dtype=float)
    return allwts @ vals


# Per-triangle adaptive splitting kicks in when the integrand magnitude varies
# by more than this factor across one triangle (steep layers).
_ADAPTIVE_SPREAD = 1.0e6
_ADAPTIVE_MAX_DEPTH = 12


def _rule_values(coords, ids, f, rule):
    """Evaluate `f` at the mapped rule points of a triangle batch; returns
    (per-triangle rule integrals (n, k), point magnitudes (n, q))."""
    ref = rule.points
    nq = len(ref)
    e1 = coords[:, 1] - coords[:, 0]
    e2 = coords[:, 2] - coords[:, 0]
    pts = (coords[:, None, 0, :]
           + ref[None, :, 0:1] * e1[:, None, :]
           + ref[None, :, 1:2] * e2[:, None, :])
    jac = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    vals = np.asarray(f(pts.reshape(-1, 2), np.repeat(ids, nq)), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    vals = vals.reshape(len(coords), nq, -1)
    w = rule.weights[None, :] * jac[:, None]
    return np.einsum("nq,nqk->nk", w, vals), np.abs(vals).max(axis=2)


def _quarter(tris):
    m01 = (tris[:, 0] + tris[:, 1]) / 2.0
    m12 = (tris[:, 1] + tris[:, 2]) / 2.0
    m20 = (tris[:, 2] + tris[:, 0]) / 2.0
    children = np.empty((len(tris), 4, 3, 2))
    children[:, 0] = np.stack([tris[:, 0], m01, m20], axis=1)
    children[:, 1] = np.stack([m01, tris[:, 1], m12], axis=1)
    children[:, 2] = np.stack([m20, m12, tris[:, 2]], axis=1)
    children[:, 3] = np.stack([m01, m12, m20], axis=1)
    return children.reshape(-1, 3, 2)


def integrate_triangles_adaptive(tris, f, degree, max_depth=_ADAPTIVE_MAX_DEPTH,
                                 rtol=1e-10):
    """Per-triangle integrals with breadth-first adaptive quartering.

    `tris` is (nt, 3, 2); `f(points, ids)` maps (N, 2) points with their
    originating-triangle ids to (N, k) values.  A triangle is accepted once
    its rule value agrees with the sum over its four children to `rtol`
    (then the child sum is kept), unless its integrand magnitude is already
    near-constant across the rule points; triangles whose integrand varies
    by more than a factor of 1e6 are always descended.  One batch evaluation
    per level.
    """
    rule = triangle_rule(degree)
    tris = np.asarray(tris, dtype=float)
    nt = len(tris)

    ids = np.arange(nt)
    coords = tris.copy()
    vals, mags = _rule_values(coords, ids, f, rule)
    k = vals.shape[1]
    out = np.zeros((nt, k))
    scale = np.abs(vals).sum(axis=0) + 1e-300

    for depth in range(max_depth):
        lo = mags.min(axis=1)
        hi = mags.max(axis=1)
        zero = hi == 0.0
        ids, coords, vals = ids[~zero], coords[~zero], vals[~zero]
        lo, hi = lo[~zero], hi[~zero]
        if len(ids) == 0:
            return out

        child_coords = _quarter(coords)
        child_ids = np.repeat(ids, 4)
        cvals, cmags = _rule_values(child_coords, child_ids, f, rule)
        sums = cvals.reshape(-1, 4, k).sum(axis=1)
        err = np.abs(sums - vals).max(axis=1)
        magnitude = np.abs(sums).max(axis=1)
        global_scale = np.abs(scale).max()
        tol = rtol * (magnitude + 1e-3 * global_scale)
        spread = hi > _ADAPTIVE_SPREAD * np.maximum(lo, hi * 1e-300)
        negligible = magnitude <= 1e-14 * global_scale
        accept = ((err <= tol) & ~spread) | negligible
        np.add.at(out, ids[accept], sums[accept])

        keep = np.repeat(~accept, 4)
        ids, coords = child_ids[keep], child_coords[keep]
        vals, mags = cvals[keep], cmags[keep]
        if len(ids) == 0:
            return out
    np.add.at(out, ids, vals)
    return out


def integrate_polygon(subtri, f, degree=4, adaptive=False):
    """Integrate `f` over a polygon through its fan sub-triangulation."""
    if not adaptive:
        return integrate_triangles(subtri.points, subtri.triangles, f, degree)
    per_tri = integrate_triangles_adaptive(
        subtri.points[subtri.triangles], lambda p, ids: f(p), degree)
    total = per_tri.sum(axis=0)
    return total if total.size > 1 else float(total[0])


def integrate_edge(a, b, f, npoints=3, adaptive=False, rtol=1e-13):
    """Integrate `f` along the segment a-b (including the length Jacobian).

    With `adaptive`, the composite 3-point Gauss rule is refined by panel
    doubling until two consecutive levels agree (steep boundary-layer data).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    rule = edge_gauss(npoints)

    def composite(panels):
        t = (np.arange(panels)[:, None] + rule.points[None, :]).ravel() / panels
        pts = a + np.outer(t, b - a)
        w = np.tile(rule.weights, panels) * (length / panels)
        return w @ np.asarray(f(pts), dtype=float)

    val = composite(1)
    if not adaptive:
        return val
    panels = 2
    while panels <= 1024:
        new = composite(panels)
        if np.max(np.abs(new - val)) <= rtol * (1.0 + np.max(np.abs(new))):
            return new
        val = new
        panels *= 2
    return val


_EXPONENTS = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


class ScaledMonomialBasis:
    """Monomials ((x - x_D)/h_D)^alpha, |alpha| <= k, on a 2D domain."""

    def __init__(self, center, h, degree):
        if degree not in (0, 1, 2):
            raise ValueError("scaled monomial bases support degree 0, 1, 2 only")
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.degree = degree
        self.exponents = _EXPONENTS[: (1, 3, 6)[degree]]

    def __len__(self):
        return len(self.exponents)

    def eval(self, points):
        """Values at `points` (N, 2) -> (N, nbasis)."""
        pts = np.atleast_2d(points)
        xi = (pts[:, 0] - self.center[0]) / self.h
        eta = (pts[:, 1] - self.center[1]) / self.h
        return np.stack([xi**ax * eta**ay for ax, ay in self.exponents], axis=1)

    def grad(self, points):
        """Gradients at `points` -> (N, nbasis, 2), exact derivatives."""
        pts = np.atleast_2d(points)
        xi = (pts[:, 0] - self.center[0]) / self.h
        eta = (pts[:, 1] - self.center[1]) / self.h
        out = np.zeros((len(pts), len(self.exponents), 2))
        for i, (ax, ay) in enumerate(self.exponents):
            if ax > 0:
                out[:, i, 0] = ax * xi ** (ax - 1) * eta**ay / self.h
            if ay > 0:
                out[:, i, 1] = xi**ax * ay * eta ** (ay - 1) / self.h
        return out


def monomials(center, h, degree):
    """Scaled monomial basis centered at `center` with scale `h`."""
    return ScaledMonomialBasis(center, h, degree)
