"""Radial prototype barrier, affine-corrected true barrier, the constants of
the normal-derivative estimate, and the numerical verification sweeps.

The prototype is the radial minimizer of the comparison integrand with
slope s/(1+s): its gradient modulus is b(r) = q/(r^(d-1) - q) and the flux
r^(d-1) * b/(1+b) = q is conserved exactly.  The true barrier adds the
affine tangent of the boundary datum at the contact point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .growth import RegularizedGrowth


class BarrierError(ValueError):
    pass


class PreconditionError(BarrierError):
    """Hypothesis b(|x|) >= M of the sign check not met; refuse to guess."""


# ---------------------------------------------------------------------------
# prototype barrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PrototypeBarrier:
    """Radial barrier outside the ball of radius r0, parametrized by the
    flux constant q in (0, r0^(d-1))."""

    q: float
    r0: float
    d: int = 2

    def __post_init__(self):
        if not (self.r0 > 0.0 and 0.0 < self.q < self.r0 ** (self.d - 1)):
            raise BarrierError(f"need 0 < q < r0^(d-1), got q={self.q}, r0={self.r0}, d={self.d}")

    def b(self, r):
        r = np.asarray(r, dtype=float)
        denom = r ** (self.d - 1) - self.q
        if np.any(denom <= 0.0):
            raise BarrierError("pole: r^(d-1) <= q")
        return self.q / denom

    def db(self, r):
        r = np.asarray(r, dtype=float)
        denom = r ** (self.d - 1) - self.q
        return -self.q * (self.d - 1) * r ** (self.d - 2) / denom ** 2

    def laplacian(self, r):
        """Radial Laplacian of omega: b'(r) + (d-1) b(r)/r (closed form)."""
        r = np.asarray(r, dtype=float)
        return self.db(r) + (self.d - 1) * self.b(r) / r

    def omega_radial(self, r, method="auto"):
        """omega at radius r: integral of b from r0; closed-form log for
        d = 2, adaptive quadrature otherwise."""
        scalar = np.isscalar(r) or np.asarray(r).ndim == 0
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(r_arr < self.r0 * (1.0 - 1e-12)):
            raise BarrierError("omega undefined for |x| < r0")
        r_arr = np.maximum(r_arr, self.r0)
        if method == "auto":
            method = "closed_form" if self.d == 2 else "quadrature"
        if method == "closed_form":
            if self.d != 2:
                raise BarrierError("closed form implemented for d = 2 only")
            out = self.q * np.log((r_arr - self.q) / (self.r0 - self.q))
        elif method == "quadrature":
            out = np.array([quad(lambda t: float(self.b(t)), self.r0, ri,
                                 epsabs=1e-12, epsrel=1e-12, limit=200)[0]
                            for ri in r_arr])
        else:
            raise BarrierError(f"unknown omega method {method!r}")
        return float(out[0]) if scalar else out

    def omega(self, x, method="auto"):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return self.omega_radial(r, method=method)

    def flux_residual(self, r):
        """|F~'(b(r)) r^(d-1) - q| with F~'(s) = s/(1+s)."""
        r = np.asarray(r, dtype=float)
        b = self.b(r)
        return np.abs(b / (1.0 + b) * r ** (self.d - 1) - self.q)


def eval_b(proto: PrototypeBarrier, r):
    return proto.b(r)


def eval_omega(proto: PrototypeBarrier, x, method="auto"):
    return proto.omega(x, method=method)


def verify_prototype_pde(proto: PrototypeBarrier, radii, flux_tol=1e-12):
    """Check the conserved-flux identity and super-harmonicity on samples.

    The flux identity is algebraically exact; the Laplacian is evaluated
    from the closed radial formula and must be non-positive everywhere."""
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= proto.r0 * (1.0 - 1e-12)):
        raise BarrierError("samples must satisfy |x| >= r0")
    flux = proto.flux_residual(radii)
    lap = proto.laplacian(radii)
    ok = bool(np.max(flux) <= flux_tol * max(1.0, proto.q) and np.max(lap) <= 1e-14)
    return {"ok": ok,
            "worst_flux_residual": float(np.max(flux)),
            "worst_laplacian": float(np.max(lap))}


# ---------------------------------------------------------------------------
# true barrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrueBarrier:
    """v = sign*omega + k.x + c in the ball frame; sign=+1 is the upper
    barrier, sign=-1 the mirrored lower one."""

    proto: PrototypeBarrier
    k: np.ndarray
    c: float
    sign: int = 1

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return self.sign * self.proto.omega(y) + y @ self.k + self.c

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        b = self.proto.b(r[..., 0])
        return self.sign * np.asarray(b)[..., None] * y / r + self.k


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierConstants:
    K: float
    lambda0: float
    delta_growth: float
    Mstar: float
    u0_norm_1inf: float
    r0: float
    d: int
    M1: float
    M2: float
    M: float
    delta_max: float
    r_max: float
    delta_ring: Optional[float] = None
    eta_standoff: Optional[float] = None
    Cstar: Optional[float] = None


def compute_constants(K, lambda0, delta_growth, Mstar, u0_norm_1inf, r0, d=2):
    """Thresholds of the supersolution sign check and the ring geometry: M1 = 2K,
    M2 = max(2 lambda0, M1, 2^((1-delta)/delta)), M = max(M1, M2, 2K),
    then delta_max from (1-2 delta_max)^(d-1) = max(M/(M+1), S/(1+S)) with
    S = M* |u0|_{1,inf}, and r_max = (1-delta_max) r0 / (1-2 delta_max)."""
    if not (K > 0.0 and lambda0 >= 0.0 and 0.0 < delta_growth <= 1.0
            and Mstar > 0.0 and r0 > 0.0):
        raise BarrierError("invalid constants input")
    M1 = 2.0 * K
    M2 = max(2.0 * lambda0, M1, 2.0 ** ((1.0 - delta_growth) / delta_growth))
    M = max(M1, M2, 2.0 * K)
    S = Mstar * u0_norm_1inf
    A = max(M / (M + 1.0), S / (1.0 + S))
    delta_max = 0.5 * (1.0 - A ** (1.0 / (d - 1)))
    if not (0.0 < delta_max < 0.5):
        raise BarrierError(f"internal consistency: delta_max={delta_max} outside (0, 1/2)")
    r_max = (1.0 - delta_max) * r0 / (1.0 - 2.0 * delta_max)
    return BarrierConstants(K=K, lambda0=lambda0, delta_growth=delta_growth,
                            Mstar=Mstar, u0_norm_1inf=u0_norm_1inf, r0=r0, d=d,
                            M1=M1, M2=M2, M=M, delta_max=delta_max, r_max=r_max)


# ---------------------------------------------------------------------------
# supersolution sign check
# ---------------------------------------------------------------------------

def verify_supersolution_L(rg: RegularizedGrowth, tb: TrueBarrier, x,
                           M=None, K=None, tol=1e-10):
    """Evaluate the divergence expression L at x from the closed-form radial
    quantities and check its sign (>= 0 for the upper barrier; the lower
    barrier is checked through the mirrored slope).

    Returns the value, the sign case of a_lam' at the barrier gradient, the
    verdict, and the case-split intermediate inequalities."""
    y = np.asarray(x, dtype=float)
    proto = tb.proto
    r = float(np.linalg.norm(y))
    if r <= proto.r0:
        raise BarrierError("x must lie outside the ball")
    b = float(proto.b(r))
    if M is not None and b < M:
        raise PreconditionError(f"b(|x|)={b} below sign-check threshold M={M}")
    bp = float(proto.db(r))
    keff = tb.k if tb.sign > 0 else -tb.k
    grad = b * y / r + keff
    g = float(np.linalg.norm(grad))
    if g == 0.0:
        raise BarrierError("degenerate gradient |grad v| = 0")
    a = float(rg.a_lam(g))
    ap = float(rg.da_lam(g))
    kdx = float(keff @ y)
    k2 = float(keff @ keff)
    bracket_k = k2 / r - kdx ** 2 / r ** 3  # >= 0 by Cauchy-Schwarz
    L1 = (ap / g) * bp * (r - b / bp) * bracket_k
    L2 = -a * bp * (g * ap / a + b / (1.0 + b))
    L = L1 + L2
    scale = abs(L1) + abs(L2) + abs(a * bp) + 1e-300
    holds = L >= -tol * scale

    checks = {}
    # conserved-flux consequence: -b/b' = r/((d-1)(1+b)) <= r
    ratio = -b / bp
    ident = r / ((proto.d - 1) * (1.0 + b))
    checks["flux_slope_identity"] = bool(abs(ratio - ident) <= 1e-10 * max(1.0, ident)
                                         and ratio <= r * (1.0 + 1e-12))
    delta = rg.base.delta_growth
    if ap <= 0.0:
        bracket = g * float(rg.ddF_lam(g)) / float(rg.dF_lam(g)) - 1.0 / (1.0 + b)
        lower = (2.0 ** (delta - 1.0) * b ** delta - 1.0) / b
        checks["convexity_bracket"] = bool(bracket >= lower - tol * max(1.0, abs(lower)))
    else:
        bracket = g * g - (r - b / bp) * bracket_k
        Kv = float(np.linalg.norm(keff)) if K is None else float(K)
        lower = b * b / 4.0 - 2.0 * Kv * Kv
        checks["gradient_bracket"] = bool(bracket >= lower - tol * max(1.0, abs(lower)))

    return {"L_value": float(L), "case": float(np.sign(ap)), "holds": bool(holds),
            "checks": checks, "grad_norm": g, "b": b}


# ---------------------------------------------------------------------------
# ring thinning
# ---------------------------------------------------------------------------

def ring_integral(delta, r0, eta, d=2):
    """Integral of b over [r0, r0+eta] with q = (1-delta)^(d-1) r0^(d-1)."""
    q = (1.0 - delta) ** (d - 1) * r0 ** (d - 1)
    if d == 2:
        # r0 - q = delta r0 computed without cancellation (delta can be tiny)
        return q * math.log((eta + delta * r0) / (delta * r0))
    proto = PrototypeBarrier(q=q, r0=r0, d=d)
    return float(proto.omega_radial(r0 + eta, method="quadrature"))


def choose_delta_ring(bc: BarrierConstants, r0, eta_standoff, d, target,
                      max_iter=200):
    """Largest dyadic delta in (0, delta_max) whose ring integral reaches the
    target; the integral diverges logarithmically as delta -> 0, so the
    halving search always terminates."""
    if target <= 0.0:
        return bc.delta_max / 2.0
    if eta_standoff <= 0.0:
        raise BarrierError("eta_standoff must be positive")
    k = 1
    while 2.0 ** (-k) >= bc.delta_max:
        k += 1
    for _ in range(max_iter):
        delta = 2.0 ** (-k)
        if ring_integral(delta, r0, eta_standoff, d) >= target:
            return delta
        k += 1
    raise BarrierError("delta search did not terminate (defensive iteration cap)")


# ---------------------------------------------------------------------------
# barrier pair at a boundary point
# ---------------------------------------------------------------------------

@dataclass
class BarrierPair:
    upper: TrueBarrier
    lower: TrueBarrier
    frame: object
    constants: BarrierConstants
    q: float
    gradient_bound: float
    region: dict
    report: dict

    @property
    def verified(self):
        return self.report.get("verified", False)


def _shrink_region(dom, graph, r_max):
    """Shrink the graph window and strip depth until the strip sits inside
    the ring r0 < |y| <= r_max."""
    r0 = graph["r0"]
    f = graph["f"]
    Lstar, Ld_star = graph["L"], graph["L_d"]
    for _ in range(300):
        x1 = np.linspace(-Lstar, Lstar, 61)
        top = np.stack([x1, f(x1)], axis=-1)
        bot = np.stack([x1, f(x1) - Ld_star], axis=-1)
        r_top = np.linalg.norm(top, axis=1)
        r_bot = np.linalg.norm(bot, axis=1)
        if max(r_top.max(), r_bot.max()) <= r_max:
            return Lstar, Ld_star
        if r_top.max() > r_max:
            Lstar *= 0.85
        else:
            Ld_star *= 0.85
    raise BarrierError("could not fit the local strip inside the barrier ring")


def build_barrier_pair(rg: RegularizedGrowth, dom, bd, x0,
                       n_check=25, tol=1e-9):
    """Construct upper/lower barriers at the boundary point x0 and verify the
    three inequality stages: supersolution sign on the strip, domination of
    the datum on the near boundary piece, and domination of |u0|_inf on the
    far boundary piece.  A failed stage is reported, never silently passed."""
    graph = dom.local_graph(x0)
    frame, r0 = graph["frame"], graph["r0"]
    f = graph["f"]
    d = dom.dim

    K = bd.grad_inf
    if K <= 0.0:
        K = 1e-12  # constant datum: thresholds degenerate gracefully
    lambda0 = rg.base.lambda0
    delta = rg.base.delta_growth

    # distance constant on the near boundary piece
    Mstar = dom.compute_Mstar(x0, patch_radius=2.0 * graph["L"])
    bc = compute_constants(K, lambda0, delta, Mstar, bd.norm_1inf, r0, d)

    Lstar, Ld_star = _shrink_region(dom, graph, bc.r_max)

    # standoff of the far boundary piece from the exterior ball
    x1 = np.linspace(-Lstar, Lstar, 201)
    wall_tau = np.linspace(0.0, Ld_star, 61)
    side = np.stack([np.concatenate([np.full(61, -Lstar), np.full(61, Lstar), x1]),
                     np.concatenate([f(-Lstar) - wall_tau,
                                     f(Lstar) - wall_tau,
                                     f(x1) - Ld_star])], axis=-1)
    eta = float(np.min(np.linalg.norm(side, axis=1)) - r0)
    if eta <= 0.0:
        raise BarrierError("far boundary piece touches the exterior ball")

    Cstar = dom.diameter() + 1.0
    target = Cstar * bd.norm_1inf + bd.norm_inf
    delta_ring = choose_delta_ring(bc, r0, eta, d, target)
    q = (1.0 - delta_ring) ** (d - 1) * r0 ** (d - 1)
    proto = PrototypeBarrier(q=q, r0=r0, d=d)
    bc = replace(bc, delta_ring=delta_ring, eta_standoff=eta, Cstar=Cstar)

    x0_world = frame.from_frame(np.array([0.0, -r0]))
    y0 = np.array([0.0, -r0])
    k = frame.vec_to_frame(bd.grad_u0(x0_world))
    c = bd.u0(x0_world) - float(k @ y0)
    upper = TrueBarrier(proto=proto, k=k, c=c, sign=+1)
    lower = TrueBarrier(proto=proto, k=k, c=c, sign=-1)

    report = {"verified": False, "stage": None}
    region = {"Lstar": Lstar, "Ld_star": Ld_star, "r_max": bc.r_max,
              "f": f, "frame": frame, "x0_world": x0_world}

    # stage 0: ring lower bound (analytic chain, checked exactly)
    b_rmax = float(proto.b(bc.r_max))
    need = max(bc.M, bc.Mstar * bd.norm_1inf)
    if b_rmax < need * (1.0 - 1e-12):
        report["stage"] = "ring_bound"
        report["detail"] = {"b_rmax": b_rmax, "needed": need}
        return BarrierPair(upper, lower, frame, bc, q, proto.b(r0) + K, region, report)

    # stage 1: supersolution sign on strip samples
    xs = np.linspace(-0.95 * Lstar, 0.95 * Lstar, n_check)
    taus = np.linspace(Ld_star / n_check, Ld_star, n_check // 2 + 2)
    L_min = math.inf
    for px in xs:
        for tau in taus:
            y = np.array([px, f(px) - tau])
            ry = float(np.linalg.norm(y))
            if not (r0 * (1.0 + 1e-12) < ry <= bc.r_max):
                continue
            for tb in (upper, lower):
                res = verify_supersolution_L(rg, tb, y, M=bc.M, K=K)
                L_min = min(L_min, res["L_value"])
                if not res["holds"]:
                    report["stage"] = "supersolution"
                    report["detail"] = {"point": y.tolist(), "L": res["L_value"],
                                        "sign": tb.sign}
                    return BarrierPair(upper, lower, frame, bc, q,
                                       proto.b(r0) + K, region, report)
    report["L_min_observed"] = L_min if math.isfinite(L_min) else None

    # stage 2: domination of the datum on the near boundary piece
    gx = np.linspace(-Lstar, Lstar, 401)
    gamma = np.stack([gx, f(gx)], axis=-1)
    r_gamma = np.linalg.norm(gamma, axis=1)
    omega_vals = proto.omega_radial(np.maximum(r_gamma, r0))
    dist2 = np.sum((gamma - y0) ** 2, axis=1)
    taylor_margin = omega_vals - bd.norm_1inf * dist2
    u0_gamma = bd.u0(frame.from_frame(gamma))
    vg = omega_vals + gamma @ k + c
    upper_margin = vg - u0_gamma
    lower_margin = u0_gamma - (-omega_vals + gamma @ k + c)
    slack = tol * max(1.0, bd.norm_1inf)
    if np.min(taylor_margin) < -slack or np.min(upper_margin) < -slack \
            or np.min(lower_margin) < -slack:
        report["stage"] = "near_boundary"
        report["detail"] = {"taylor_margin": float(np.min(taylor_margin)),
                            "upper_margin": float(np.min(upper_margin)),
                            "lower_margin": float(np.min(lower_margin))}
        return BarrierPair(upper, lower, frame, bc, q, proto.b(r0) + K, region, report)

    # stage 3: domination of |u0|_inf on the far boundary piece
    v_far_up = upper.value(side)
    v_far_lo = lower.value(side)
    if np.min(v_far_up) < bd.norm_inf - slack or np.max(v_far_lo) > -bd.norm_inf + slack:
        report["stage"] = "far_boundary"
        report["detail"] = {"min_upper": float(np.min(v_far_up)),
                            "max_lower": float(np.max(v_far_lo)),
                            "norm_inf": bd.norm_inf}
        return BarrierPair(upper, lower, frame, bc, q, proto.b(r0) + K, region, report)

    report["verified"] = True
    report["stage"] = "ok"
    gradient_bound = float(proto.b(r0)) + K
    return BarrierPair(upper, lower, frame, bc, q, gradient_bound, region, report)


def normal_derivative_bound(pair: BarrierPair):
    """Shared gradient-modulus bound of both barriers at the contact point:
    b(r0) + |k|."""
    if not pair.verified:
        raise BarrierError("barrier pair not verified")
    proto = pair.upper.proto
    return float(proto.b(proto.r0)) + float(np.linalg.norm(pair.upper.k))
