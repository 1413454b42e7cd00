"""Exterior-ball domains in 2D, boundary data, and the local boundary-graph
constants feeding the barrier construction.

All boundary verification is sampling-based: curves are sampled at a fixed
density per unit arc length and every geometric claim (exterior-ball
tangency, graph representation, distance bounds) is checked on the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SAMPLES_PER_UNIT_ARC = 2048


class GeometryError(ValueError):
    pass


class ExteriorBallViolation(GeometryError):
    """The candidate exterior ball meets the closure away from the contact
    point; carries a witness sample."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# boundary components
# ---------------------------------------------------------------------------

class _Component:
    """One closed boundary curve, parametrized by t in [0, 1)."""

    def point(self, t):
        raise NotImplementedError

    def outward_normal(self, t):
        raise NotImplementedError

    def arclength(self):
        raise NotImplementedError

    def admissible_r0(self):
        raise NotImplementedError

    def nearest_param(self, x, n=8192):
        t = np.linspace(0.0, 1.0, n, endpoint=False)
        pts = self.point(t)
        i = int(np.argmin(np.sum((pts - x) ** 2, axis=1)))
        # local ternary refinement around the best sample
        lo, hi = t[i] - 1.0 / n, t[i] + 1.0 / n

        def d2(s):
            p = self.point(np.array([s % 1.0]))[0]
            return float(np.sum((p - x) ** 2))

        for _ in range(80):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if d2(m1) < d2(m2):
                hi = m2
            else:
                lo = m1
        return 0.5 * (lo + hi) % 1.0


class _Circle(_Component):
    def __init__(self, center, radius, outward_sign=1.0, admissible=None):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.outward_sign = float(outward_sign)  # -1 for a hole boundary
        self._admissible = float(admissible) if admissible is not None else self.radius

    def point(self, t):
        th = 2.0 * math.pi * np.asarray(t, dtype=float)
        return self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def outward_normal(self, t):
        th = 2.0 * math.pi * np.asarray(t, dtype=float)
        return self.outward_sign * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def arclength(self):
        return 2.0 * math.pi * self.radius

    def admissible_r0(self):
        return self._admissible


class _Ellipse(_Component):
    def __init__(self, a, b):
        self.a = float(a)
        self.b = float(b)
        th = np.linspace(0.0, 2.0 * math.pi, 20001)
        seg = np.hypot(self.a * np.diff(np.cos(th)), self.b * np.diff(np.sin(th)))
        self._arc = float(np.sum(seg))

    def point(self, t):
        th = 2.0 * math.pi * np.asarray(t, dtype=float)
        return np.stack([self.a * np.cos(th), self.b * np.sin(th)], axis=-1)

    def outward_normal(self, t):
        th = 2.0 * math.pi * np.asarray(t, dtype=float)
        n = np.stack([np.cos(th) / self.a, np.sin(th) / self.b], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def arclength(self):
        return self._arc

    def admissible_r0(self):
        # minimum radius of curvature: b^2/a at the flat-axis apex (a >= b)
        a, b = max(self.a, self.b), min(self.a, self.b)
        return b * b / a


class _RoundedPolygon(_Component):
    """Regular n-gon offset outward by rho: straight edges joined by corner
    arcs of radius rho; genuinely C^1,1 with curvature 0 or 1/rho."""

    def __init__(self, n_sides, circumradius, rho):
        if n_sides < 3:
            raise GeometryError("polygon needs at least 3 sides")
        self.n = int(n_sides)
        self.Rc = float(circumradius)
        self.rho = float(rho)
        ang = 2.0 * math.pi * np.arange(self.n) / self.n
        self.vertices = self.Rc * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        # per-corner arc sweeps the exterior angle 2 pi / n
        self.arc_len = self.rho * 2.0 * math.pi / self.n
        self.edge_len = float(np.linalg.norm(self.vertices[1] - self.vertices[0]))
        self._piece = self.edge_len + self.arc_len

    def arclength(self):
        return self.n * self._piece

    def admissible_r0(self):
        return self.rho

    def _eval(self, s):
        """Point and outward normal at arc length s along the offset curve."""
        s = s % self.arclength()
        i = int(s // self._piece)
        local = s - i * self._piece
        v0 = self.vertices[i]
        v1 = self.vertices[(i + 1) % self.n]
        edge = (v1 - v0) / self.edge_len
        nrm = np.array([edge[1], -edge[0]])  # outward for CCW vertices
        if local <= self.edge_len:
            return v0 + local * edge + self.rho * nrm, nrm
        # arc around v1 from this edge normal to the next edge normal
        v2 = self.vertices[(i + 2) % self.n]
        edge2 = (v2 - v1) / self.edge_len
        nrm2 = np.array([edge2[1], -edge2[0]])
        frac = (local - self.edge_len) / self.arc_len
        a0 = math.atan2(nrm[1], nrm[0])
        a1 = math.atan2(nrm2[1], nrm2[0])
        da = (a1 - a0) % (2.0 * math.pi)
        ang = a0 + frac * da
        nvec = np.array([math.cos(ang), math.sin(ang)])
        return v1 + self.rho * nvec, nvec

    def point(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.array([self._eval(ti * self.arclength())[0] for ti in t])
        return out

    def outward_normal(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.array([self._eval(ti * self.arclength())[1] for ti in t])


# ---------------------------------------------------------------------------
# frame
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """Rigid transform y = Q (x - c) mapping the exterior-ball center c to
    the origin and the contact point to (0, -r0)."""

    Q: np.ndarray
    c: np.ndarray

    def to_frame(self, x):
        return (np.asarray(x, dtype=float) - self.c) @ self.Q.T

    def from_frame(self, y):
        return np.asarray(y, dtype=float) @ self.Q + self.c

    def vec_to_frame(self, v):
        return np.asarray(v, dtype=float) @ self.Q.T


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

@dataclass
class ExteriorBallDomain:
    kind: str
    params: dict
    components: list
    contains_fn: Callable
    r0: float
    dim: int = 2

    def contains(self, pts, tol=1e-9):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.contains_fn(pts, tol)

    def boundary_samples(self, per_unit_arc=SAMPLES_PER_UNIT_ARC):
        """Concatenated samples over all components: points, outward normals,
        component index, parameter."""
        pts, nrm, comp, ts = [], [], [], []
        for ci, c in enumerate(self.components):
            n = max(64, int(math.ceil(per_unit_arc * c.arclength())))
            t = np.linspace(0.0, 1.0, n, endpoint=False)
            pts.append(c.point(t))
            nrm.append(c.outward_normal(t))
            comp.append(np.full(n, ci))
            ts.append(t)
        return (np.concatenate(pts), np.concatenate(nrm),
                np.concatenate(comp), np.concatenate(ts))

    def locate_boundary_point(self, x0, tol=1e-8):
        x0 = np.asarray(x0, dtype=float)
        best = None
        for ci, c in enumerate(self.components):
            t = c.nearest_param(x0)
            p = c.point(np.array([t]))[0]
            d = float(np.linalg.norm(p - x0))
            if best is None or d < best[2]:
                best = (ci, t, d)
        ci, t, d = best
        if d > tol * max(1.0, float(np.linalg.norm(x0))):
            raise GeometryError(f"point {x0.tolist()} is not on the boundary (distance {d})")
        return ci, t

    def diameter(self):
        pts, _, _, _ = self.boundary_samples(per_unit_arc=64)
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    # -- exterior ball -----------------------------------------------------

    def exterior_ball_center(self, x0, r0=None, verify=True):
        """Ball center for the contact point x0 and the rigid frame taking
        the center to the origin and x0 to (0, -r0)."""
        r0 = self.r0 if r0 is None else float(r0)
        ci, t = self.locate_boundary_point(x0)
        comp = self.components[ci]
        x0 = comp.point(np.array([t]))[0]
        n = comp.outward_normal(np.array([t]))[0]
        center = x0 + r0 * n
        Q = np.array([[n[1], -n[0]], [n[0], n[1]]])
        frame = Frame(Q=Q, c=center)
        if verify:
            self._verify_exterior_ball(center, x0, r0)
        return {"center": center, "x0": x0, "frame": frame, "r0": r0,
                "component": ci, "t": t}

    def _verify_exterior_ball(self, center, x0, r0):
        if bool(self.contains(center[None, :])[0]):
            raise ExteriorBallViolation("ball center lies inside the domain", witness=center)
        pts, _, _, _ = self.boundary_samples()
        d = np.linalg.norm(pts - center, axis=1)
        scale = max(1.0, r0)
        deep = d < r0 - 1e-9 * scale
        if np.any(deep):
            raise ExteriorBallViolation(
                f"boundary sample penetrates the exterior ball by {float(np.max(r0 - d)):.3e}",
                witness=pts[np.argmin(d)])
        touch = d <= r0 + 1e-12 * scale
        far = np.linalg.norm(pts - x0, axis=1) > 0.1 * r0
        if np.any(touch & far):
            raise ExteriorBallViolation(
                "exterior ball touches the boundary away from the contact point",
                witness=pts[np.argmax(touch & far)])

    # -- distance constant -------------------------------------------------

    def compute_Mstar(self, x0, patch_radius, safety=1.1):
        """Constant M* with M* (|y| - r0) >= |x - x0|^2 on the boundary patch
        (frame coordinates y); inflated by the safety factor."""
        ball = self.exterior_ball_center(x0, verify=False)
        frame, r0 = ball["frame"], ball["r0"]
        x0 = ball["x0"]
        ci = ball["component"]
        comp = self.components[ci]
        n = max(4096, int(math.ceil(SAMPLES_PER_UNIT_ARC * comp.arclength())))
        t = np.linspace(0.0, 1.0, n, endpoint=False)
        pts = comp.point(t)
        patch = patch_radius
        for _ in range(6):
            dist = np.linalg.norm(pts - x0, axis=1)
            mask = (dist <= patch) & (dist > 1e-9 * max(1.0, r0))
            if not np.any(mask):
                raise GeometryError("no boundary samples in the patch")
            y = frame.to_frame(pts[mask])
            gap = np.linalg.norm(y, axis=1) - r0
            if np.all(gap > 0.0):
                ratio = dist[mask] ** 2 / gap
                if np.all(np.isfinite(ratio)):
                    return float(safety * np.max(ratio))
            patch *= 0.5
        raise GeometryError("geometric degeneracy: distance ratio diverges at minimum patch")

    # -- local graph -------------------------------------------------------

    def local_graph(self, x0, patch_radius=None, slope_cap=4.0):
        """Local graph frame at x0: boundary as x2 = f(x1) with f(0) = -r0
        and f'(0) = 0, plus the strip depth L_d for which the strip below
        the graph stays inside the domain."""
        ball = self.exterior_ball_center(x0, verify=False)
        frame, r0 = ball["frame"], ball["r0"]
        ci, t0 = ball["component"], ball["t"]
        comp = self.components[ci]
        arc = comp.arclength()
        if patch_radius is None:
            patch_radius = min(arc / 4.0, 4.0 * r0)
        w = min(0.45, patch_radius / arc)
        n = 4001
        t = (t0 + np.linspace(-w, w, n)) % 1.0
        y = frame.to_frame(comp.point(t))
        mid = n // 2
        # orient so the first coordinate increases with the parameter
        if y[mid + 1, 0] < y[mid - 1, 0]:
            y = y[::-1]
        x1, x2 = y[:, 0], y[:, 1]
        slope = np.gradient(x2, x1)
        ok = (np.abs(slope) <= slope_cap)
        # maximal symmetric window of valid graph representation around x0
        lo = mid
        while lo > 0 and ok[lo - 1] and x1[lo - 1] < x1[lo]:
            lo -= 1
        hi = mid
        while hi < n - 1 and ok[hi + 1] and x1[hi + 1] > x1[hi]:
            hi += 1
        if hi - lo < 8:
            raise GeometryError("graph representation fails within minimum patch")
        L = min(-x1[lo], x1[hi])
        sel = (x1 >= -L) & (x1 <= L)
        xs, ys = x1[sel], x2[sel]
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]

        def f(x):
            return np.interp(x, xs, ys)

        N = float(np.max(np.abs(ys)) + np.max(np.abs(np.gradient(ys, xs))))
        # strip depth: shrink until the strip below the graph stays in Omega
        L_d = r0
        probe_x = np.linspace(-0.98 * L, 0.98 * L, 41)
        for _ in range(40):
            taus = np.linspace(1e-3 * L_d, L_d, 12)
            pp = np.array([[px, f(px) - tau] for px in probe_x for tau in taus])
            inside = self.contains(frame.from_frame(pp), tol=1e-9)
            if np.all(inside):
                break
            L_d *= 0.7
        else:
            raise GeometryError("could not find an interior strip depth")
        return {"frame": frame, "r0": r0, "L": float(L), "L_d": float(L_d),
                "N": N, "f": f, "graph_x": xs, "graph_y": ys}


# ---------------------------------------------------------------------------
# shape constructors
# ---------------------------------------------------------------------------

def _make_domain(kind, params, components, contains_fn, r0_override=None):
    admissible = min(c.admissible_r0() for c in components)
    r0 = float(r0_override) if r0_override is not None else admissible
    return ExteriorBallDomain(kind=kind, params=dict(params), components=components,
                              contains_fn=contains_fn, r0=r0)


def disk(R=1.0, r0=None):
    comp = _Circle((0.0, 0.0), R)

    def contains(p, tol):
        return np.linalg.norm(p, axis=1) <= R + tol

    return _make_domain("disk", {"R": R}, [comp], contains, r0)


def annulus(r_in=1.0, r_out=2.0, r0=None):
    if not (0.0 < r_in < r_out):
        raise GeometryError("need 0 < r_in < r_out")
    outer = _Circle((0.0, 0.0), r_out)
    # the exterior ball at the hole boundary must fit strictly inside the
    # hole; half the hole radius keeps the tangency simple
    inner = _Circle((0.0, 0.0), r_in, outward_sign=-1.0, admissible=0.5 * r_in)

    def contains(p, tol):
        r = np.linalg.norm(p, axis=1)
        return (r >= r_in - tol) & (r <= r_out + tol)

    return _make_domain("annulus", {"r_in": r_in, "r_out": r_out}, [outer, inner], contains, r0)


def ellipse(a=2.0, b=1.0, r0=None):
    comp = _Ellipse(a, b)

    def contains(p, tol):
        return (p[:, 0] / a) ** 2 + (p[:, 1] / b) ** 2 <= 1.0 + tol

    return _make_domain("ellipse", {"a": a, "b": b}, [comp], contains, r0)


def rounded_polygon(n_sides=5, circumradius=1.0, rho=0.3, r0=None):
    comp = _RoundedPolygon(n_sides, circumradius, rho)

    def contains(p, tol):
        # distance to the core polygon (convex) at most rho
        verts = comp.vertices
        n = len(verts)
        d = np.full(len(p), np.inf)
        inside_core = np.ones(len(p), dtype=bool)
        for i in range(n):
            v0, v1 = verts[i], verts[(i + 1) % n]
            e = v1 - v0
            le = np.linalg.norm(e)
            u = np.clip(((p - v0) @ e) / le ** 2, 0.0, 1.0)
            proj = v0 + u[:, None] * e
            d = np.minimum(d, np.linalg.norm(p - proj, axis=1))
            nrm = np.array([e[1], -e[0]]) / le
            inside_core &= (p - v0) @ nrm <= 0.0
        d = np.where(inside_core, 0.0, d)
        return d <= rho + tol

    return _make_domain("rounded_polygon",
                        {"n_sides": n_sides, "circumradius": circumradius, "rho": rho},
                        [comp], contains, r0)


def domain_from_spec(spec: dict) -> ExteriorBallDomain:
    kind = spec.get("shape")
    r0 = spec.get("r0")
    if kind == "disk":
        return disk(float(spec.get("R", 1.0)), r0)
    if kind == "annulus":
        return annulus(float(spec.get("r_in", 1.0)), float(spec.get("r_out", 2.0)), r0)
    if kind == "ellipse":
        return ellipse(float(spec.get("a", 2.0)), float(spec.get("b", 1.0)), r0)
    if kind == "rounded_polygon":
        return rounded_polygon(int(spec.get("n_sides", 5)),
                               float(spec.get("circumradius", 1.0)),
                               float(spec.get("rho", 0.3)), r0)
    raise GeometryError(f"unknown shape {kind!r}")


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryData:
    """Boundary datum u0 defined on the closure, with gradient evaluator and
    sampled norms.  norm_1inf = sup|u0| + sup|grad u0| + Lip(grad u0)."""

    kind: str
    eval_u0: Callable
    eval_grad_u0: Callable
    norm_inf: float
    grad_inf: float
    hess_bound: float

    @property
    def norm_1inf(self):
        return self.norm_inf + self.grad_inf + self.hess_bound

    def u0(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(self.eval_u0(x[None, :])[0])
        return np.asarray(self.eval_u0(x), dtype=float)

    def grad_u0(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self.eval_grad_u0(x[None, :])[0], dtype=float)
        return np.asarray(self.eval_grad_u0(x), dtype=float)


def _domain_sample_cloud(dom, n_grid=80):
    pts, _, _, _ = dom.boundary_samples(per_unit_arc=64)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n_grid),
                         np.linspace(lo[1], hi[1], n_grid))
    grid = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    grid = grid[dom.contains(grid)]
    return np.concatenate([pts, grid])


def boundary_data_from_spec(spec: dict, dom: ExteriorBallDomain) -> BoundaryData:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        v = float(spec.get("value", 0.0))
        u0 = lambda x: np.full(len(x), v)
        g0 = lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return BoundaryData(kind, u0, g0, abs(v), 0.0, 0.0)
    if kind == "affine":
        k = np.asarray(spec.get("k", [0.0, 0.0]), dtype=float)
        c = float(spec.get("c", 0.0))
        u0 = lambda x: np.asarray(x, dtype=float) @ k + c
        g0 = lambda x: np.tile(k, (len(x), 1))
        cloud = _domain_sample_cloud(dom)
        return BoundaryData(kind, u0, g0, float(np.max(np.abs(u0(cloud)))),
                            float(np.linalg.norm(k)), 0.0)
    if kind == "trig":
        A = float(spec.get("amplitude", 0.3))
        w = float(spec.get("freq", 1.0))
        ph = float(spec.get("phase", 0.0))

        def u0(x):
            x = np.asarray(x, dtype=float)
            return A * np.sin(w * x[:, 0] + ph) * np.cos(w * x[:, 1])

        def g0(x):
            x = np.asarray(x, dtype=float)
            gx = A * w * np.cos(w * x[:, 0] + ph) * np.cos(w * x[:, 1])
            gy = -A * w * np.sin(w * x[:, 0] + ph) * np.sin(w * x[:, 1])
            return np.stack([gx, gy], axis=-1)

        # analytic sups (|u0| <= A, |grad u0| <= A w) so the norms are true
        # upper bounds rather than sample estimates
        return BoundaryData(kind, u0, g0, abs(A), abs(A * w), 2.0 * A * w * w)
    raise GeometryError(f"unknown boundary data kind {kind!r}")
