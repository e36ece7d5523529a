"""Polygonal meshes: topology, element geometry, fan sub-triangulation,
structured generators, refinement with hanging nodes, and JSON I/O."""

import json
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    pass


# |sin| of the corner angle below which a vertex counts as collinear (hanging).
_COLLINEAR_TOL = 1e-9


def _signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _polygon_centroid(pts):
    x, y = pts[:, 0], pts[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
    return np.array([cx, cy])


@dataclass(frozen=True)
class ElementGeometry:
    """Per-element geometry: area, centroid, diameter and per-edge frames."""

    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray  # (m,)
    normals: np.ndarray       # (m, 2) outward unit normals, edge i = (V_i, V_{i+1})
    tangents: np.ndarray      # (m, 2) unit tangents in CCW direction


@dataclass
class SubTriangulation:
    """Fan sub-triangulation of one polygon.

    Boundary sub-edge i coincides with polygon edge i.  Interior sub-edges
    carry a fixed unit normal chosen once at construction.  `tri_subedges`
    and `tri_signs` give, per triangle, its three sub-edge ids (boundary ids
    first, then interior ids offset by the edge count) and the sign relating
    the fixed normal to the triangle-outward normal.
    """

    points: np.ndarray          # (p, 2); polygon vertices, + centroid if used
    triangles: np.ndarray       # (nt, 3) indices, positively oriented
    tri_areas: np.ndarray       # (nt,)
    n_polygon_edges: int
    interior_edges: np.ndarray  # (ni, 2) indices
    interior_normals: np.ndarray  # (ni, 2) fixed unit normals
    tri_subedges: np.ndarray    # (nt, 3) int
    tri_signs: np.ndarray       # (nt, 3) +-1
    anchor: int                 # fan anchor vertex, -1 when centroid fallback
    used_centroid: bool


@dataclass
class RegularityReport:
    min_edge_ratio: float        # min over cells of shortest edge / h_E
    min_triangle_quality: float  # min fan-triangle quality (1 = equilateral)
    hanging_nodes: int


class PolygonalMesh:
    """Immutable polygonal mesh; all queries are pure.

    Edges are stored once as sorted vertex pairs.  `edge_cells[e]` holds
    (plus cell, minus cell or -1): the plus cell traverses the edge from the
    lower to the higher vertex index, so the global edge normal (the edge
    direction rotated by -90 degrees) points out of it.
    """

    def __init__(self, vertices, cells, edges, edge_cells, cell_edges,
                 cell_edge_signs, boundary_vertices, boundary_edges, geometry):
        self.vertices = vertices
        self.cells = cells
        self.edges = edges
        self.edge_cells = edge_cells
        self.cell_edges = cell_edges
        self.cell_edge_signs = cell_edge_signs
        self.boundary_vertices = boundary_vertices
        self.boundary_edges = boundary_edges
        self._geometry = geometry
        self._subtri = [None] * len(cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_cells(self):
        return len(self.cells)

    def cell_points(self, c):
        return self.vertices[self.cells[c]]

    def geometry(self, c) -> ElementGeometry:
        return self._geometry[c]

    def subtriangulation(self, c) -> SubTriangulation:
        if self._subtri[c] is None:
            self._subtri[c] = fan_triangulate(self, c)
        return self._subtri[c]

    def total_area(self):
        return sum(g.area for g in self._geometry)

    def mesh_size(self):
        return max(g.diameter for g in self._geometry)

    def edge_length(self, e):
        a, b = self.edges[e]
        return float(np.hypot(*(self.vertices[b] - self.vertices[a])))

    def edge_normal(self, e):
        a, b = self.edges[e]
        d = self.vertices[b] - self.vertices[a]
        d = d / np.hypot(*d)
        return np.array([d[1], -d[0]])


def element_geometry(mesh_or_points, cell=None) -> ElementGeometry:
    """Geometry of one cell (or of a raw (m, 2) vertex array)."""
    if cell is not None:
        pts = mesh_or_points.cell_points(cell)
    else:
        pts = np.asarray(mesh_or_points, dtype=float)
    area = _signed_area(pts)
    if area <= 0.0:
        raise MeshError("cell with non-positive area")
    centroid = _polygon_centroid(pts)
    diff = pts[:, None, :] - pts[None, :, :]
    diameter = float(np.sqrt((diff**2).sum(-1).max()))
    nxt = np.roll(pts, -1, axis=0)
    tangents = nxt - pts
    lengths = np.hypot(tangents[:, 0], tangents[:, 1])
    if np.any(lengths <= 0.0):
        raise MeshError("cell with zero-length edge")
    tangents = tangents / lengths[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    return ElementGeometry(float(area), centroid, diameter, lengths, normals, tangents)


def build_topology(vertices, cells):
    """Assemble a PolygonalMesh from vertex coordinates and cell vertex lists.

    Cells with negative signed area are reversed.  Raises MeshError on
    degenerate cells (repeated or out-of-range vertices, zero area) and
    non-manifold edges (three or more incident cells).
    """
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (n, 2) array")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinates")
    nv = len(vertices)

    clean_cells = []
    for raw in cells:
        idx = np.asarray(raw, dtype=int)
        if len(idx) < 3:
            raise MeshError(f"cell with fewer than 3 vertices: {raw}")
        if np.any(idx < 0) or np.any(idx >= nv):
            raise MeshError(f"cell with out-of-range vertex index: {raw}")
        if len(set(idx.tolist())) != len(idx):
            raise MeshError(f"cell with repeated vertex: {raw}")
        area = _signed_area(vertices[idx])
        if area < 0.0:
            idx = idx[::-1].copy()
            area = -area
        if area == 0.0:
            raise MeshError(f"cell with zero area: {raw}")
        clean_cells.append(idx)

    edge_index = {}
    edges = []
    edge_cells = []
    cell_edges = []
    cell_signs = []
    for ci, idx in enumerate(clean_cells):
        m = len(idx)
        eidx = np.empty(m, dtype=int)
        esgn = np.empty(m, dtype=int)
        for k in range(m):
            a, b = int(idx[k]), int(idx[(k + 1) % m])
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edges)
                edge_index[key] = e
                edges.append(key)
                edge_cells.append([-1, -1])
            # plus side traverses low -> high vertex index
            side = 0 if a < b else 1
            if edge_cells[e][side] != -1:
                raise MeshError(f"non-manifold or inconsistently oriented edge {key}")
            edge_cells[e][side] = ci
            eidx[k] = e
            esgn[k] = 1 if side == 0 else -1
        cell_edges.append(eidx)
        cell_signs.append(esgn)

    edges = np.array(edges, dtype=int)
    edge_cells = np.array(edge_cells, dtype=int)
    boundary_edges = np.any(edge_cells < 0, axis=1)
    boundary_vertices = np.zeros(nv, dtype=bool)
    for e in np.nonzero(boundary_edges)[0]:
        boundary_vertices[edges[e]] = True

    geometry = [element_geometry(vertices[idx]) for idx in clean_cells]
    return PolygonalMesh(vertices, clean_cells, edges, edge_cells, cell_edges,
                         cell_signs, boundary_vertices, boundary_edges, geometry)


def _try_fan(pts, anchor, area_tol):
    m = len(pts)
    tris = []
    for i in range(1, m - 1):
        a = anchor
        b = (anchor + i) % m
        c = (anchor + i + 1) % m
        s = _signed_area(pts[[a, b, c]])
        if s <= area_tol:
            return None
        tris.append((a, b, c))
    return np.array(tris, dtype=int)


def _subedge_tables(points, triangles, n_poly, interior_edges, interior_normals,
                    poly_edge_of):
    """Per-triangle sub-edge ids and orientation signs against fixed normals."""
    interior_index = {tuple(sorted(e)): j for j, e in enumerate(interior_edges)}
    nt = len(triangles)
    sub = np.empty((nt, 3), dtype=int)
    sgn = np.empty((nt, 3))
    for t, tri in enumerate(triangles):
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            d = points[b] - points[a]
            out = np.array([d[1], -d[0]])
            out /= np.hypot(*out)
            pe = poly_edge_of.get((a, b))
            if pe is not None:
                # boundary sub-edge traversed forward: triangle-outward normal
                # coincides with the polygon outward normal
                sub[t, k] = pe
                sgn[t, k] = 1.0
                continue
            pe = poly_edge_of.get((b, a))
            if pe is not None:
                sub[t, k] = pe
                sgn[t, k] = -1.0
                continue
            j = interior_index[(a, b) if a < b else (b, a)]
            sub[t, k] = n_poly + j
            s = float(out @ interior_normals[j])
            sgn[t, k] = 1.0 if s > 0 else -1.0
    return sub, sgn


def _edge_unit_normal(points, a, b):
    d = points[b] - points[a]
    n = np.array([d[1], -d[0]])
    return n / np.hypot(*n)


def fan_triangulate(mesh_or_points, cell=None) -> SubTriangulation:
    """Fan the polygon from one vertex into N_V - 2 positively oriented
    triangles with N_V - 3 interior edges.

    Anchored at vertex 0; if some fan triangle degenerates, every vertex is
    retried in turn, then a centroid fan (one extra point, N_V triangles) is
    used as a last resort.
    """
    if cell is not None:
        pts = mesh_or_points.cell_points(cell)
        geom = mesh_or_points.geometry(cell)
    else:
        pts = np.asarray(mesh_or_points, dtype=float)
        geom = element_geometry(pts)
    m = len(pts)
    area_tol = 1e-12 * geom.diameter**2
    poly_edge_of = {(i, (i + 1) % m): i for i in range(m)}

    for anchor in range(m):
        tris = _try_fan(pts, anchor, area_tol)
        if tris is None:
            continue
        interior = np.array(
            [(anchor, (anchor + i) % m) for i in range(2, m - 1)], dtype=int
        ).reshape(-1, 2)
        normals = np.array([_edge_unit_normal(pts, a, b) for a, b in interior]
                           ).reshape(-1, 2)
        sub, sgn = _subedge_tables(pts, tris, m, interior, normals, poly_edge_of)
        areas = np.array([_signed_area(pts[t]) for t in tris])
        st = SubTriangulation(pts, tris, areas, m, interior, normals, sub, sgn,
                              anchor, False)
        _check_partition(st, geom)
        return st

    # fallback: fan from an interior star center (the centroid when valid)
    full = np.vstack([pts, star_center(pts, geom)])
    cidx = m
    tris = []
    for i in range(m):
        t = (cidx, i, (i + 1) % m)
        if _signed_area(full[list(t)]) <= area_tol:
            raise MeshError("cell cannot be fan-triangulated from any vertex "
                            "or from an interior star center")
        tris.append(t)
    tris = np.array(tris, dtype=int)
    interior = np.array([(cidx, i) for i in range(m)], dtype=int)
    normals = np.array([_edge_unit_normal(full, cidx, i) for i in range(m)])
    sub, sgn = _subedge_tables(full, tris, m, interior, normals, poly_edge_of)
    areas = np.array([_signed_area(full[t]) for t in tris])
    st = SubTriangulation(full, tris, areas, m, interior, normals, sub, sgn,
                          -1, True)
    _check_partition(st, geom)
    return st


def _check_partition(st, geom):
    if abs(st.tri_areas.sum() - geom.area) > 1e-12 * geom.area:
        raise MeshError("sub-triangulation does not partition the cell")


def generate_square_mesh(n, bounds=(0.0, 0.0, 1.0, 1.0)) -> PolygonalMesh:
    """n x n grid of congruent rectangles over the given bounds."""
    if n < 1:
        raise MeshError("n must be >= 1")
    x0, y0, x1, y1 = bounds
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    verts = np.array([(x, y) for y in ys for x in xs])
    vid = lambda i, j: j * (n + 1) + i
    cells = [
        [vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]
        for j in range(n)
        for i in range(n)
    ]
    return build_topology(verts, cells)


def generate_nonconvex_mesh(n, bounds=(0.0, 0.0, 1.0, 1.0)) -> PolygonalMesh:
    """Each square of an n x n grid is split into two congruent L-shaped
    hexagons by a point-symmetric staircase cut through its center; every
    cell has exactly one reflex corner.  Cut endpoints on shared grid edges
    appear as collinear vertices of the facing cell.
    """
    if n < 1 or n % 2 != 0:
        raise MeshError("n must be an even integer >= 2")
    x0, y0, x1, y1 = bounds
    sx = (x1 - x0) / n
    sy = (y1 - y0) / n

    index = {}
    verts = []

    def vid(x, y):
        key = (round(x / sx * 4), round(y / sy * 4))
        if key not in index:
            index[key] = len(verts)
            verts.append((x, y))
        return index[key]

    cells = []
    for j in range(n):
        for i in range(n):
            ox, oy = x0 + i * sx, y0 + j * sy
            cut_lo = vid(ox + sx / 4, oy)            # on the bottom edge
            cut_a = vid(ox + sx / 4, oy + sy / 2)
            cut_b = vid(ox + 3 * sx / 4, oy + sy / 2)
            cut_hi = vid(ox + 3 * sx / 4, oy + sy)   # on the top edge
            c00 = vid(ox, oy)
            c10 = vid(ox + sx, oy)
            c01 = vid(ox, oy + sy)
            c11 = vid(ox + sx, oy + sy)

            left = [c00, cut_lo, cut_a, cut_b, cut_hi]
            if j + 1 < n:  # facing cell above contributes a point at x + s/4
                left.append(vid(ox + sx / 4, oy + sy))
            left.append(c01)

            right = [cut_lo]
            if j > 0:  # facing cell below contributes a point at x + 3s/4
                right.append(vid(ox + 3 * sx / 4, oy))
            right += [c10, c11, cut_hi, cut_b, cut_a]

            cells.append(left)
            cells.append(right)
    return build_topology(np.array(verts), cells)


def _corner_flags(pts):
    """False at collinear (hanging) vertices."""
    prv = pts - np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0) - pts
    prv = prv / np.hypot(prv[:, 0], prv[:, 1])[:, None]
    nxt = nxt / np.hypot(nxt[:, 0], nxt[:, 1])[:, None]
    cross = prv[:, 0] * nxt[:, 1] - prv[:, 1] * nxt[:, 0]
    dot = (prv * nxt).sum(axis=1)
    return ~((np.abs(cross) < _COLLINEAR_TOL) & (dot > 0.0))


def _clip_halfplane(poly, a, d, tol):
    """Keep the part of a convex polygon left of the directed line a + t d."""
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp = d[0] * (p[1] - a[1]) - d[1] * (p[0] - a[0])
        sq = d[0] * (q[1] - a[1]) - d[1] * (q[0] - a[0])
        if sp >= -tol:
            out.append(p)
        if (sp > tol and sq < -tol) or (sp < -tol and sq > tol):
            t = sp / (sp - sq)
            out.append(p + t * (q - p))
    return out


def polygon_kernel(pts):
    """Kernel of a simple CCW polygon (the set of star centers) as a convex
    polygon, or None when empty."""
    pts = np.asarray(pts, dtype=float)
    lo = pts.min(axis=0) - 1.0
    hi = pts.max(axis=0) + 1.0
    diam = float(np.hypot(*(hi - lo)))
    region = [np.array([lo[0], lo[1]]), np.array([hi[0], lo[1]]),
              np.array([hi[0], hi[1]]), np.array([lo[0], hi[1]])]
    m = len(pts)
    for i in range(m):
        a = pts[i]
        d = pts[(i + 1) % m] - a
        region = _clip_halfplane(region, a, d, 1e-14 * diam * np.hypot(*d))
        if len(region) < 3:
            return None
    return np.array(region)


def star_center(pts, geom=None):
    """A point w.r.t. which the polygon is star-shaped: the area centroid
    when it lies safely inside the kernel, else the kernel centroid."""
    pts = np.asarray(pts, dtype=float)
    if geom is None:
        geom = element_geometry(pts)
    kernel = polygon_kernel(pts)
    if kernel is None:
        raise MeshError("polygon is not star-shaped; cannot pick a star center")
    c = geom.centroid
    margin = 1e-9 * geom.diameter
    inside = True
    m = len(pts)
    for i in range(m):
        a = pts[i]
        d = pts[(i + 1) % m] - a
        s = d[0] * (c[1] - a[1]) - d[1] * (c[0] - a[0])
        if s < margin * np.hypot(*d):
            inside = False
            break
    if inside:
        return c
    if _signed_area(kernel) > (1e-12 * geom.diameter) ** 2:
        return _polygon_centroid(kernel)
    return kernel.mean(axis=0)


def refine_cells(mesh, marked) -> PolygonalMesh:
    """Refine the marked cells by connecting each centroid to its edge
    midpoints; a collinear (hanging) vertex is connected directly instead of
    inserting midpoints on its two sub-edges.  Unmarked neighbors keep their
    shape and gain the new midpoints as collinear vertices.
    """
    marked = set(int(c) for c in marked)
    if not marked:
        return mesh
    if not marked <= set(range(mesh.n_cells)):
        raise MeshError("marked set contains invalid cell ids")

    verts = [tuple(v) for v in mesh.vertices]
    min_area = 1e-14 * mesh.total_area()

    corner = {c: _corner_flags(mesh.cell_points(c)) for c in marked}

    split_point = {}  # edge key (a, b), a < b -> new vertex id
    for c in marked:
        idx = mesh.cells[c]
        flags = corner[c]
        m = len(idx)
        for k in range(m):
            if not (flags[k] and flags[(k + 1) % m]):
                continue
            a, b = int(idx[k]), int(idx[(k + 1) % m])
            key = (a, b) if a < b else (b, a)
            if key not in split_point:
                mid = (mesh.vertices[a] + mesh.vertices[b]) / 2.0
                split_point[key] = len(verts)
                verts.append(tuple(mid))

    new_cells = []
    for c in range(mesh.n_cells):
        idx = mesh.cells[c]
        m = len(idx)
        if c not in marked:
            walk = []
            for k in range(m):
                a, b = int(idx[k]), int(idx[(k + 1) % m])
                walk.append(a)
                mid = split_point.get((a, b) if a < b else (b, a))
                if mid is not None:
                    walk.append(mid)
            new_cells.append(walk)
            continue

        flags = corner[c]
        center = star_center(mesh.cell_points(c), mesh.geometry(c))
        cid = len(verts)
        verts.append(tuple(center))

        # boundary walk: (vertex id, is connection point)
        walk = []
        for k in range(m):
            a, b = int(idx[k]), int(idx[(k + 1) % m])
            walk.append((a, not flags[k]))  # hanging vertices are connections
            mid = split_point.get((a, b) if a < b else (b, a))
            if mid is not None:
                walk.append((mid, True))
        conn = [i for i, (_, is_conn) in enumerate(walk) if is_conn]
        if len(conn) < 2:
            raise MeshError(f"cell {c} cannot be refined (no connection points)")
        nw = len(walk)
        for ic in range(len(conn)):
            start = conn[ic]
            stop = conn[(ic + 1) % len(conn)]
            path = [walk[start][0]]
            k = start
            while k != stop:
                k = (k + 1) % nw
                path.append(walk[k][0])
            new_cells.append(path + [cid])

    refined = build_topology(np.array(verts), new_cells)
    if min(g.area for g in refined._geometry) < min_area:
        raise MeshError("refinement produced a cell below the area floor")
    return refined


def save_mesh(mesh, path):
    """Write the mesh as JSON with 17-significant-digit coordinates."""
    vparts = ",\n".join(
        f"    [{v[0]:.17g}, {v[1]:.17g}]" for v in mesh.vertices
    )
    cparts = ",\n".join(
        "    [" + ", ".join(str(int(i)) for i in cell) + "]" for cell in mesh.cells
    )
    with open(path, "w") as fh:
        fh.write('{\n  "vertices": [\n' + vparts + '\n  ],\n')
        fh.write('  "cells": [\n' + cparts + "\n  ]\n}\n")


def load_mesh(path) -> PolygonalMesh:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    try:
        vertices = np.asarray(data["vertices"], dtype=float)
        cells = data["cells"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"mesh file {path} lacks vertices/cells arrays") from exc
    return build_topology(vertices, cells)


def _triangle_quality(pts):
    # 4*sqrt(3)*area / sum of squared edges: 1 for equilateral triangles
    a = _signed_area(pts)
    e = np.roll(pts, -1, axis=0) - pts
    s = (e**2).sum()
    return 4.0 * np.sqrt(3.0) * a / s


def regularity_report(mesh) -> RegularityReport:
    min_ratio = np.inf
    min_quality = np.inf
    hanging = set()
    for c in range(mesh.n_cells):
        g = mesh.geometry(c)
        min_ratio = min(min_ratio, g.edge_lengths.min() / g.diameter)
        st = mesh.subtriangulation(c)
        for t in st.triangles:
            min_quality = min(min_quality, _triangle_quality(st.points[t]))
        flags = _corner_flags(mesh.cell_points(c))
        for k in np.nonzero(~flags)[0]:
            hanging.add(int(mesh.cells[c][k]))
    return RegularityReport(float(min_ratio), float(min_quality), len(hanging))
