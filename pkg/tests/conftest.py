"""Shared geometry helpers for the test suite."""

import numpy as np

from brinkman_vem.mesh import build_topology


def random_star_polygon(rng, n, rmin=0.5, rmax=1.5, center=(0.0, 0.0),
                        min_gap=0.15):
    """Random star-shaped polygon around `center` with n vertices."""
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        if gaps.min() >= min_gap:
            break
    r = rng.uniform(rmin, rmax, n)
    return np.stack([center[0] + r * np.cos(ang),
                     center[1] + r * np.sin(ang)], axis=1)


def insert_collinear_vertex(pts, edge, t=0.5):
    """Split edge (edge, edge+1) at parameter t, producing a hanging-style
    collinear vertex."""
    nxt = (edge + 1) % len(pts)
    new = pts[edge] + t * (pts[nxt] - pts[edge])
    return np.insert(pts, edge + 1, new, axis=0)


def voronoi_square_mesh(nx=10, ny=10, seed=0, jitter=0.3):
    """Voronoi tessellation of the unit square from a jittered seed grid,
    clipped exactly by mirroring the seeds across all four sides."""
    from scipy.spatial import Voronoi

    rng = np.random.default_rng(seed)
    dx, dy = 1.0 / nx, 1.0 / ny
    xs = (np.arange(nx) + 0.5) * dx
    ys = (np.arange(ny) + 0.5) * dy
    seeds = np.array([(x, y) for y in ys for x in xs])
    seeds += rng.uniform(-jitter, jitter, seeds.shape) * [dx, dy]

    blocks = [seeds]
    for axis, val in ((0, 0.0), (0, 1.0), (1, 0.0), (1, 1.0)):
        q = seeds.copy()
        q[:, axis] = 2 * val - q[:, axis]
        blocks.append(q)
    vor = Voronoi(np.vstack(blocks))

    verts, vmap, cells = [], {}, []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        assert -1 not in region
        ids = []
        for p in vor.vertices[region]:
            key = (round(p[0], 10), round(p[1], 10))
            if key not in vmap:
                vmap[key] = len(verts)
                verts.append([key[0], key[1]])
            ids.append(vmap[key])
        cells.append(ids)
    return build_topology(np.array(verts), cells)
