"""Deterministic triangulations of the supported domains.

Disk/ellipse/rounded-polygon meshes come from Delaunay triangulation of
ring or lattice point clouds (the shapes are convex, so the hull boundary
is the domain boundary); the annulus uses a structured polar grid so both
circles carry exact boundary vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .geometry import ExteriorBallDomain, GeometryError


class MeshError(ValueError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray        # (n, 2)
    triangles: np.ndarray       # (m, 3) CCW
    boundary_mask: np.ndarray   # (n,) bool
    h: float

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def edge_lengths_max(self):
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return np.max(np.linalg.norm(e, axis=-1), axis=0)

    def interior_mask(self):
        return ~self.boundary_mask


def _orient_ccw(vertices, triangles):
    p = vertices[triangles]
    s = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
         - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = s < 0
    triangles = triangles.copy()
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def _mesh_from_delaunay(points, boundary_mask, spacing):
    tri = Delaunay(points)
    triangles = _orient_ccw(points, tri.simplices)
    mesh = Mesh(vertices=points, triangles=triangles,
                boundary_mask=boundary_mask, h=0.0)
    # drop degenerate slivers on the hull, if any
    areas = mesh.signed_areas()
    keep = areas > 1e-12 * spacing ** 2
    mesh.triangles = mesh.triangles[keep]
    mesh.h = float(np.max(mesh.edge_lengths_max()))
    return mesh


def _disk_points(R, spacing):
    n_r = max(2, int(math.ceil(R / spacing)))
    pts = [np.zeros((1, 2))]
    flags = [np.array([False])]
    for i in range(1, n_r + 1):
        r = R * i / n_r
        m = max(6, int(math.ceil(2.0 * math.pi * r / spacing)))
        th = 2.0 * math.pi * np.arange(m) / m
        pts.append(r * np.stack([np.cos(th), np.sin(th)], axis=-1))
        flags.append(np.full(m, i == n_r))
    return np.concatenate(pts), np.concatenate(flags)


def _annulus_mesh(r_in, r_out, spacing):
    n_r = max(2, int(math.ceil((r_out - r_in) / spacing)))
    n_t = max(8, int(math.ceil(2.0 * math.pi * r_out / spacing)))
    # round up to a multiple of 4 so quarter turns are mesh symmetries
    n_t = int(4 * math.ceil(n_t / 4))
    radii = np.linspace(r_in, r_out, n_r + 1)
    th = 2.0 * math.pi * np.arange(n_t) / n_t
    verts = np.concatenate([r * np.stack([np.cos(th), np.sin(th)], axis=-1)
                            for r in radii])
    tris = []
    for i in range(n_r):
        base0 = i * n_t
        base1 = (i + 1) * n_t
        for j in range(n_t):
            jn = (j + 1) % n_t
            tris.append([base0 + j, base0 + jn, base1 + j])
            tris.append([base0 + jn, base1 + jn, base1 + j])
    tris = _orient_ccw(verts, np.asarray(tris, dtype=int))
    mask = np.zeros(len(verts), dtype=bool)
    mask[:n_t] = True
    mask[-n_t:] = True
    mesh = Mesh(vertices=verts, triangles=tris, boundary_mask=mask, h=0.0)
    mesh.h = float(np.max(mesh.edge_lengths_max()))
    return mesh


def _convex_boundary_mesh(dom, spacing):
    """Boundary polyline plus an interior hex lattice, Delaunay-triangulated;
    valid for the convex shapes."""
    comp = dom.components[0]
    arc = comp.arclength()
    m = max(12, int(math.ceil(arc / spacing)))
    t = np.arange(m) / m
    bpts = comp.point(t)
    lo = bpts.min(axis=0) - spacing
    hi = bpts.max(axis=0) + spacing
    xs = np.arange(lo[0], hi[0], spacing)
    ys = np.arange(lo[1], hi[1], spacing * math.sqrt(3) / 2.0)
    cells = []
    for j, y in enumerate(ys):
        off = 0.5 * spacing if j % 2 else 0.0
        row = np.stack([xs + off, np.full_like(xs, y)], axis=-1)
        cells.append(row)
    lattice = np.concatenate(cells)
    # keep lattice points well inside so boundary spacing is respected
    inside = dom.contains(lattice, tol=0.0)
    lattice = lattice[inside]
    d2b = np.min(np.linalg.norm(lattice[:, None, :] - bpts[None, :, :], axis=-1), axis=1)
    lattice = lattice[d2b > 0.5 * spacing]
    points = np.concatenate([bpts, lattice])
    mask = np.zeros(len(points), dtype=bool)
    mask[:m] = True
    return _mesh_from_delaunay(points, mask, spacing)


def triangulate(dom: ExteriorBallDomain, h_target: float) -> Mesh:
    """Quasi-uniform conforming mesh with max edge length <= h_target;
    deterministic for fixed inputs."""
    if h_target <= 0.0:
        raise MeshError("h_target must be positive")
    if h_target > dom.diameter():
        raise MeshError("h_target exceeds the domain diameter")
    spacing = h_target / 1.6  # diagonals stay below the target
    kind = dom.kind
    if kind == "disk":
        pts, mask = _disk_points(dom.params["R"], spacing)
        mesh = _mesh_from_delaunay(pts, mask, spacing)
    elif kind == "ellipse":
        a, b = dom.params["a"], dom.params["b"]
        upts, mask = _disk_points(1.0, spacing / max(a, b))
        pts = upts * np.array([a, b])
        mesh = _mesh_from_delaunay(pts, mask, spacing)
    elif kind == "annulus":
        mesh = _annulus_mesh(dom.params["r_in"], dom.params["r_out"], spacing)
    elif kind == "rounded_polygon":
        mesh = _convex_boundary_mesh(dom, spacing)
    else:
        raise MeshError(f"no mesher for shape {dom.kind!r}")
    if mesh.h > h_target:
        raise MeshError(f"mesh came out too coarse: h={mesh.h} > {h_target}")
    _validate(mesh, dom)
    return mesh


def _validate(mesh, dom):
    areas = mesh.signed_areas()
    if np.any(areas <= 0.0):
        raise MeshError("inverted or degenerate element")
    bpts = mesh.vertices[mesh.boundary_mask]
    on = _on_boundary(dom, bpts, tol=1e-10)
    if not np.all(on):
        raise MeshError("boundary vertex off the boundary curve")


def _on_boundary(dom, pts, tol):
    ok = np.zeros(len(pts), dtype=bool)
    for comp in dom.components:
        n = max(8, int(math.ceil(64 * comp.arclength())))
        samp = comp.point(np.arange(4 * n) / (4 * n))
        for i, p in enumerate(pts):
            if ok[i]:
                continue
            j = int(np.argmin(np.sum((samp - p) ** 2, axis=1)))
            t = comp.nearest_param(p)
            q = comp.point(np.array([t]))[0]
            ok[i] = np.linalg.norm(q - p) <= tol * max(1.0, np.linalg.norm(p)) * 10.0 \
                or np.linalg.norm(samp[j] - p) <= tol
    return ok
