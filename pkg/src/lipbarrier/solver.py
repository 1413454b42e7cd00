"""P1 finite-element minimization of the regularized energy, the radial
oracle for annular solves, and the discrete verification sweeps (maximum
principle, gradient boundary dominance, barrier sandwich, lambda closure).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .growth import GrowthFunction, RegularizedGrowth, inverse_dF, make_regularized
from .meshing import Mesh


class SolverError(RuntimeError):
    pass


class BudgetError(SolverError):
    """Optimality tolerance unreachable within the iteration budget."""


# ---------------------------------------------------------------------------
# element data
# ---------------------------------------------------------------------------

def _element_data(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    det = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
    area = 0.5 * det
    # gradients of the barycentric basis, (m, 3, 2)
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    grads = np.empty((len(p), 3, 2))
    grads[:, 0, 0] = b[:, 1] - c[:, 1]
    grads[:, 0, 1] = c[:, 0] - b[:, 0]
    grads[:, 1, 0] = c[:, 1] - a[:, 1]
    grads[:, 1, 1] = a[:, 0] - c[:, 0]
    grads[:, 2, 0] = a[:, 1] - b[:, 1]
    grads[:, 2, 1] = b[:, 0] - a[:, 0]
    grads /= det[:, None, None]
    return area, grads


def element_gradients(mesh, grads, u):
    tri = mesh.triangles
    return np.einsum("ti,tid->td", u[tri], grads)


# ---------------------------------------------------------------------------
# discrete solution
# ---------------------------------------------------------------------------

@dataclass
class DiscreteSolution:
    mesh: Mesh
    u: np.ndarray
    element_grads: np.ndarray
    energy: float
    sup_u: float
    sup_grad: float
    residual: float
    energies: list
    rg: RegularizedGrowth

    def boundary_adjacent_elements(self):
        return np.any(self.mesh.boundary_mask[self.mesh.triangles], axis=1)

    def grad_norms(self):
        return np.linalg.norm(self.element_grads, axis=1)


def _safe_a(rg, s):
    s_safe = np.maximum(s, 1e-14)
    return rg.dF_mu(s_safe) / s_safe


def _energy(rg, area, g):
    s = np.linalg.norm(g, axis=1)
    return float(np.sum(area * rg.F_mu(s)))


def _gradient(mesh, rg, area, grads, g):
    s = np.linalg.norm(g, axis=1)
    w = (area * _safe_a(rg, s))[:, None] * g      # (m, 2)
    contrib = np.einsum("td,tid->ti", w, grads)   # (m, 3)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles, contrib)
    return out


def _hessian(mesh, rg, area, grads, g):
    s = np.linalg.norm(g, axis=1)
    s_safe = np.maximum(s, 1e-14)
    alpha = _safe_a(rg, s)
    beta = rg.ddF_mu(s_safe) - alpha
    ghat = g / s_safe[:, None]
    # H_g = alpha I + beta ghat ghat^T per element
    Hg = alpha[:, None, None] * np.eye(2)[None] \
        + beta[:, None, None] * np.einsum("td,te->tde", ghat, ghat)
    blocks = np.einsum("tid,tde,tje->tij", grads, Hg, grads) * area[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sparse.csr_matrix((blocks.ravel(), (rows, cols)),
                             shape=(mesh.n_vertices, mesh.n_vertices))


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------

def minimize_energy(rg: RegularizedGrowth, mesh: Mesh, bd, tol=1e-8,
                    max_iter=120, u_init=None, verify_uniqueness=False, seed=0):
    """Damped Newton with backtracking on the strictly convex discrete
    energy; boundary nodes carry the interpolated datum exactly.

    With verify_uniqueness a second solve from a seeded random start must
    agree with the first to 10*tol in max norm."""
    if rg.mu <= 0.0:
        raise SolverError("minimize_energy requires mu > 0 (uniform convexity)")
    area, grads = _element_data(mesh)
    free = ~mesh.boundary_mask
    u = np.where(mesh.boundary_mask, bd.u0(mesh.vertices), 0.0)
    if u_init is None:
        u[free] = bd.u0(mesh.vertices[free])
    else:
        u[free] = u_init[free]

    def run(u):
        energies = []
        g = element_gradients(mesh, grads, u)
        E = _energy(rg, area, g)
        energies.append(E)
        for _ in range(max_iter):
            grad_vec = _gradient(mesh, rg, area, grads, g)
            res = float(np.max(np.abs(grad_vec[free]))) if np.any(free) else 0.0
            scale = 1.0 + abs(E)
            if res <= tol * scale:
                return u, g, E, res, energies
            H = _hessian(mesh, rg, area, grads, g)
            rhs = -grad_vec[free]
            try:
                d_free = spsolve(H[free][:, free].tocsc(), rhs)
                descent = float(rhs @ d_free)
                if not np.all(np.isfinite(d_free)) or descent <= 0.0:
                    raise RuntimeError("non-descent Newton step")
            except Exception:
                # near-singular Hessian (mu ~ 0): steepest descent fallback
                d_free = rhs / max(1.0, np.max(np.abs(rhs)))
                descent = float(rhs @ d_free)
            step = np.zeros_like(u)
            step[free] = d_free
            t = 1.0
            for _ in range(60):
                u_try = u + t * step
                g_try = element_gradients(mesh, grads, u_try)
                E_try = _energy(rg, area, g_try)
                if E_try <= E - 1e-4 * t * descent:
                    break
                t *= 0.5
            else:
                raise SolverError(f"line search failed at residual {res:.3e}")
            u, g, E = u_try, g_try, E_try
            energies.append(E)
        raise BudgetError(f"optimality residual {res:.3e} not reached in {max_iter} iterations")

    u, g, E, res, energies = run(u.copy())
    if verify_uniqueness:
        rng = np.random.default_rng(seed)
        u2 = np.where(mesh.boundary_mask, bd.u0(mesh.vertices), 0.0)
        u2[free] = rng.uniform(-1.0, 1.0, size=int(np.sum(free))) * max(1.0, bd.norm_inf)
        u2, _, _, _, _ = run(u2)
        if float(np.max(np.abs(u2 - u))) > 10.0 * tol * (1.0 + abs(E)):
            raise SolverError("re-solve from random start disagrees (uniqueness proxy failed)")

    sn = np.linalg.norm(g, axis=1)
    return DiscreteSolution(mesh=mesh, u=u, element_grads=g, energy=E,
                            sup_u=float(np.max(np.abs(u))),
                            sup_grad=float(np.max(sn)) if len(sn) else 0.0,
                            residual=res, energies=energies, rg=rg)


# ---------------------------------------------------------------------------
# radial oracle
# ---------------------------------------------------------------------------

def _cumulative_gauss(f, grid):
    """Cumulative integral of f over the grid via 10-point Gauss-Legendre
    per segment."""
    xg, wg = np.polynomial.legendre.leggauss(10)
    out = np.zeros(len(grid))
    for i in range(len(grid) - 1):
        a, b = grid[i], grid[i + 1]
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        out[i + 1] = out[i] + half * np.sum(wg * np.array([f(mid + half * x) for x in xg]))
    return out


def radial_oracle(rg: RegularizedGrowth, r_in, r_out, u_in, u_out, d=2, n_grid=512):
    """Radially symmetric minimizer between two concentric spheres.

    The conserved flux q with r^(d-1) G(u') = q, G(s) = mu s + F_lam'(s), is
    found by bisection so the slope integrates to the boundary gap; the
    profile is then recovered by high-order cumulative quadrature."""
    if not (0.0 < r_in < r_out):
        raise SolverError("need 0 < r_in < r_out")
    gap = float(u_out) - float(u_in)
    grid = np.linspace(r_in, r_out, n_grid)
    if gap == 0.0:
        return {"r": grid, "u": np.full(n_grid, float(u_in)),
                "du": np.zeros(n_grid), "q": 0.0, "sup_du": 0.0}
    sign = 1.0 if gap > 0.0 else -1.0
    target = abs(gap)

    def slope(q, r):
        return inverse_dF(rg, q * r ** (1.0 - d))

    def total(q):
        return quad(lambda r: slope(q, r), r_in, r_out,
                    epsabs=1e-12, epsrel=1e-12, limit=200)[0]

    q_hi = 1.0
    for _ in range(200):
        if total(q_hi) >= target:
            break
        q_hi *= 2.0
    else:
        raise SolverError("flux bracket failure in radial oracle")
    q = brentq(lambda t: total(t) - target, 0.0, q_hi, xtol=1e-14, rtol=8.9e-16)
    du = sign * np.array([slope(q, r) for r in grid])
    u = float(u_in) + sign * _cumulative_gauss(lambda r: slope(q, r), grid)
    # conservation-law residual on the grid
    G = rg.mu * np.abs(du) + rg.dF_lam(np.abs(du))
    resid = float(np.max(np.abs(grid ** (d - 1) * G - q)))
    if resid > 1e-9 * max(1.0, q):
        raise SolverError(f"radial Euler-Lagrange residual {resid:.3e} too large")
    return {"r": grid, "u": u, "du": du, "q": sign * q,
            "sup_du": float(np.max(np.abs(du)))}


# ---------------------------------------------------------------------------
# verification sweeps
# ---------------------------------------------------------------------------

def verify_max_principle(sol: DiscreteSolution, bd, C=1.0):
    """sup |u_h| <= sup |u0| + 1e-8 + C h."""
    tol_mp = 1e-8 + C * sol.mesh.h
    excess = sol.sup_u - bd.norm_inf
    return {"ok": bool(excess <= tol_mp), "sup_u": sol.sup_u,
            "norm_inf_u0": bd.norm_inf, "excess": float(excess), "slack": tol_mp}


def verify_gradient_principle(sol: DiscreteSolution, C=1.0, exponent=0.5):
    """Interior element gradient maximum dominated by the boundary-adjacent
    one up to C h^exponent; piecewise-linear minimizers satisfy the exact
    principle only approximately."""
    adj = sol.boundary_adjacent_elements()
    norms = sol.grad_norms()
    boundary_max = float(np.max(norms[adj])) if np.any(adj) else 0.0
    interior_max = float(np.max(norms[~adj])) if np.any(~adj) else 0.0
    scale = max(1.0, boundary_max)
    slack = C * sol.mesh.h ** exponent * scale
    return {"ok": bool(interior_max <= boundary_max + slack),
            "interior_max": interior_max, "boundary_max": boundary_max,
            "slack": slack}


def verify_sandwich(sol: DiscreteSolution, pair, bd, C=1.0):
    """Barrier sandwich at the mesh nodes inside the verified strip, plus
    the exact trace match at the boundary node nearest the contact point."""
    frame = pair.frame
    region = pair.region
    f, Lstar, Ld = region["f"], region["Lstar"], region["Ld_star"]
    r0 = pair.upper.proto.r0
    y = frame.to_frame(sol.mesh.vertices)
    ry = np.linalg.norm(y, axis=1)
    fy = f(np.clip(y[:, 0], -Lstar, Lstar))
    # the graph is a dense interpolant, so membership needs a small tolerance
    tol_geom = 1e-6 * max(1.0, r0)
    in_patch = (np.abs(y[:, 0]) <= Lstar) & (y[:, 1] <= fy + tol_geom) \
        & (y[:, 1] >= fy - Ld) & (ry >= r0 * (1.0 - 1e-9)) & (ry <= region["r_max"])
    idx = np.where(in_patch)[0]
    tol_s = C * sol.mesh.h * max(1.0, bd.norm_1inf)
    if len(idx) == 0:
        return {"ok": False, "reason": "no mesh nodes in the barrier patch",
                "n_nodes": 0}
    yy = y[idx]
    ryy = np.maximum(ry[idx], r0)
    yy_proj = yy * (ryy / np.maximum(np.linalg.norm(yy, axis=1), 1e-300))[:, None]
    up = pair.upper.value(yy_proj)
    lo = pair.lower.value(yy_proj)
    uu = sol.u[idx]
    upper_margin = float(np.min(up + tol_s - uu))
    lower_margin = float(np.min(uu - (lo - tol_s)))
    # exact Dirichlet trace at the boundary node nearest the contact point
    bidx = np.where(sol.mesh.boundary_mask)[0]
    x0_world = region["x0_world"]
    j = bidx[int(np.argmin(np.linalg.norm(sol.mesh.vertices[bidx] - x0_world, axis=1)))]
    gap = float(abs(sol.u[j] - bd.u0(sol.mesh.vertices[j])))
    ok = upper_margin >= 0.0 and lower_margin >= 0.0 and gap <= 1e-12
    return {"ok": bool(ok), "n_nodes": int(len(idx)),
            "upper_margin": upper_margin, "lower_margin": lower_margin,
            "touch_gap": gap, "tol": tol_s}


def normal_derivative_at(sol: DiscreteSolution, dom, x0):
    """Largest |grad u . n| over the elements adjacent to the boundary node
    nearest x0, with n the outward normal at x0."""
    ci, t = dom.locate_boundary_point(x0)
    n = dom.components[ci].outward_normal(np.array([t]))[0]
    bidx = np.where(sol.mesh.boundary_mask)[0]
    j = bidx[int(np.argmin(np.linalg.norm(sol.mesh.vertices[bidx]
                                          - np.asarray(x0, dtype=float), axis=1)))]
    adj = np.any(sol.mesh.triangles == j, axis=1)
    if not np.any(adj):
        raise SolverError("no elements adjacent to the contact node")
    return float(np.max(np.abs(sol.element_grads[adj] @ n)))


# ---------------------------------------------------------------------------
# lambda fixed point and mu sweep
# ---------------------------------------------------------------------------

def lambda_fixed_point(g: GrowthFunction, mesh: Mesh, bd, mu, lambda_init,
                       max_rounds=8, tol=1e-9, check_consistency=True):
    """Grow the splice level until the measured gradient bound closes:
    sup |grad u_lambda| <= lambda.  On success, re-solving with a doubled
    splice level must leave the solution unchanged (the splice is the
    identity on the attained gradient range)."""
    lam = max(float(lambda_init), g.lambda0)
    history = []
    for round_idx in range(max_rounds):
        rg = make_regularized(g, lam, mu)
        sol = minimize_energy(rg, mesh, bd, tol=tol)
        history.append({"lambda": lam, "sup_grad": sol.sup_grad})
        if sol.sup_grad <= lam:
            consistency = None
            if check_consistency:
                rg2 = make_regularized(g, 2.0 * lam, mu)
                sol2 = minimize_energy(rg2, mesh, bd, tol=tol)
                consistency = float(np.max(np.abs(sol2.u - sol.u)))
                if consistency > 10.0 * tol * (1.0 + abs(sol.energy)):
                    raise SolverError(
                        f"doubling lambda changed the solution by {consistency:.3e}")
            return {"lambda_star": lam, "sol": sol, "rounds": round_idx + 1,
                    "history": history, "consistency_diff": consistency}
        lam = max(2.0 * sol.sup_grad, g.lambda0)
    raise SolverError(f"lambda closure not reached in {max_rounds} rounds; "
                      f"history={history}")


def mu_sweep(g: GrowthFunction, mesh: Mesh, bd, lam, mus, tol=1e-9):
    """Solve along a decreasing mu schedule and report the discrete W^{1,2}
    distances between consecutive solutions (Cauchy-like decay expected)."""
    mus = list(mus)
    if any(m <= 0.0 for m in mus) or any(b >= a for a, b in zip(mus, mus[1:])):
        raise SolverError("mu schedule must be positive and strictly decreasing")
    area, grads = _element_data(mesh)
    sols = []
    for mu in mus:
        rg = make_regularized(g, lam, mu)
        sols.append(minimize_energy(rg, mesh, bd, tol=tol))
    dists = []
    for s0, s1 in zip(sols, sols[1:]):
        du = s1.u - s0.u
        dg = s1.element_grads - s0.element_grads
        l2 = np.sum(area / 3.0 * np.sum(du[s0.mesh.triangles] ** 2, axis=1))
        h1 = np.sum(area * np.sum(dg ** 2, axis=1))
        dists.append(float(math.sqrt(l2 + h1)))
    monotone = all(b <= a * 1.1 for a, b in zip(dists, dists[1:]))
    return {"mus": mus, "distances": dists, "cauchy_like": bool(monotone),
            "sols": sols}
