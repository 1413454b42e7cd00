"""Growth functions F(s), structural hypothesis checks, and the two-level
regularization (quadratic tail above lambda, uniform-convexity lift mu).

A growth function is described by evaluators for F, F' and F''.  The
associated coefficient a(s) = F'(s)/s turns the energy density into the
quasilinear flux a(|grad u|) grad u.  The convexity ratio

    s * F''(s) / F'(s)

is the dimensionless quantity entering the structural hypotheses; for
integrands whose values overflow doubles long before the ratio does
(e.g. the doubly exponential family) an analytic ratio evaluator can be
supplied separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq


class GrowthError(ValueError):
    """Base class for growth-module failures."""


class EvaluationFailure(GrowthError):
    """F or a derivative evaluated to a non-finite value."""


class DegenerateDerivative(GrowthError):
    """F'(s) vanished at a positive sample point."""


class InvalidThreshold(GrowthError):
    """Requested splice point has non-positive curvature."""


def _veceval(f: Callable, s):
    """Evaluate f on a scalar or array, falling back to a Python loop for
    scalar-only callables."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 0:
        return float(f(float(arr)))
    try:
        out = np.asarray(f(arr), dtype=float)
        if out.shape == arr.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(f(float(x))) for x in arr])


def _fd_step(s: float) -> float:
    return max(1e-6, 1e-6 * s)


def _central_diff(f: Callable, s: float) -> float:
    h = _fd_step(s)
    if s - h <= 0.0:
        # one-sided near the origin; F is only defined for s >= 0
        return (f(s + h) - f(s)) / h
    return (f(s + h) - f(s - h)) / (2.0 * h)


@dataclass(frozen=True)
class GrowthFunction:
    """Convex integrand F with derivative evaluators and hypothesis metadata.

    delta_growth is the exponent of the convexity hypothesis; lambda0 is a
    declared threshold above which the ratio s^(2-delta) F''/F' stays >= 1.
    s_max_eval caps the sample range on which F itself stays finite in
    double precision (the convexity ratio may remain evaluable beyond it).
    """

    name: str
    eval_F: Callable
    eval_dF: Callable
    eval_ddF: Callable
    delta_growth: float = 0.5
    lambda0: float = 0.0
    s_max_eval: float = 1e8
    convexity_ratio: Optional[Callable] = None

    def F(self, s):
        return _veceval(self.eval_F, s)

    def dF(self, s):
        return _veceval(self.eval_dF, s)

    def ddF(self, s):
        return _veceval(self.eval_ddF, s)

    def a(self, s):
        """a(s) = F'(s)/s."""
        return self.dF(s) / np.asarray(s, dtype=float)

    def ratio(self, s):
        """s F''(s)/F'(s), analytic when available."""
        if self.convexity_ratio is not None:
            return _veceval(self.convexity_ratio, s)
        s = np.asarray(s, dtype=float)
        dF = self.dF(s)
        if np.any((dF == 0.0) & (s > 0.0)):
            bad = np.asarray(s)[np.asarray(dF) == 0.0]
            raise DegenerateDerivative(f"F'(s)=0 at s={float(np.atleast_1d(bad)[0])!r}")
        return s * self.ddF(s) / dF


def make_growth(name, F, dF=None, ddF=None, delta_growth=0.5, lambda0=0.0,
                s_max_eval=1e8, convexity_ratio=None):
    """Build a GrowthFunction; missing derivatives are synthesized by
    central differences with step max(1e-6, 1e-6 s).  Analytic evaluators
    win when both are given."""
    if dF is None:
        dF = lambda s, _F=F: _central_diff(_F, s)
    if ddF is None:
        ddF = lambda s, _dF=dF: _central_diff(_dF, s)
    return GrowthFunction(name=name, eval_F=F, eval_dF=dF, eval_ddF=ddF,
                          delta_growth=delta_growth, lambda0=lambda0,
                          s_max_eval=s_max_eval, convexity_ratio=convexity_ratio)


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------

def default_tail_grid(lo=1e-2, hi=1e8, n=512):
    """Log-spaced grid used by the hypothesis checks."""
    return np.geomspace(lo, hi, n)


def check_A1(g: GrowthFunction, grid, tol=1e-3):
    """Linear minorant check: does C1 s - C2 <= F(s) hold with some C1 > 0?

    The slope is estimated by a least-squares line fit on the grid; the
    offset is then pushed down until feasibility holds at every grid
    point.  Sub-linear integrands (e.g. sqrt) drive the fitted slope to
    zero on a wide grid and are reported as failing.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise GrowthError("grid must be nonempty, strictly increasing and positive")
    vals = g.F(grid)
    if not np.all(np.isfinite(vals)):
        s_bad = grid[~np.isfinite(vals)][0]
        raise EvaluationFailure(f"F evaluated non-finite at s={s_bad!r}")
    C1 = float(np.polyfit(grid, vals, 1)[0])
    if C1 <= tol:
        return {"holds": False, "C1": C1, "C2": float("nan")}
    C2 = float(max(0.0, np.max(C1 * grid - vals)))
    return {"holds": True, "C1": C1, "C2": C2}


def _running_tail_inf(ratio):
    """Infimum over the tail half of the sample sequence."""
    n = len(ratio)
    return float(np.min(ratio[n // 2:]))


def check_A2(g: GrowthFunction, delta, tail_grid, tol=1e-3):
    """Convexity hypothesis: inf over the tail of s^(2-delta) F''/F' >= 2.

    Also scans for the smallest grid point after which the ratio stays
    >= 1 everywhere (the usable splice threshold); inf when none exists.
    """
    if not (0.0 < delta <= 1.0):
        raise GrowthError("delta must lie in (0, 1]")
    grid = np.asarray(tail_grid, dtype=float)
    ratio = grid ** (1.0 - delta) * g.ratio(grid)
    if np.any(np.isnan(ratio)):
        raise EvaluationFailure("convexity ratio evaluated to NaN on the grid")
    liminf = _running_tail_inf(ratio)
    holds = liminf >= 2.0 - tol
    # smallest grid point from which the ratio stays >= 1
    suffix_min = np.minimum.accumulate(ratio[::-1])[::-1]
    ok = suffix_min >= 1.0
    lambda0_suggested = float(grid[np.argmax(ok)]) if np.any(ok) else math.inf
    return {"liminf_estimate": liminf, "holds": bool(holds),
            "lambda0_suggested": lambda0_suggested}


def check_A2_relaxed(g: GrowthFunction, delta, tail_grid, tol=1e-3):
    """Relaxed variant: inf over the tail of s^2 F'' / ((ln s)^(1+delta) F') >= 2.

    Grid points with s <= 1 are skipped (non-positive logarithm)."""
    if not (0.0 < delta <= 1.0):
        raise GrowthError("delta must lie in (0, 1]")
    grid = np.asarray(tail_grid, dtype=float)
    grid = grid[grid > 1.0]
    if grid.size == 0:
        raise GrowthError("no grid points with s > 1")
    ratio = grid * g.ratio(grid) / np.log(grid) ** (1.0 + delta)
    if np.any(np.isnan(ratio)):
        raise EvaluationFailure("convexity ratio evaluated to NaN on the grid")
    liminf = _running_tail_inf(ratio)
    return {"liminf_estimate": liminf, "holds": bool(liminf >= 2.0 - tol)}


# ---------------------------------------------------------------------------
# regularization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizedGrowth:
    """The pair (lambda, mu): quadratic continuation of F above lambda plus
    the uniformly convex lift (mu/2) s^2.

    F_lam agrees with F below the splice and is the second-order Taylor
    polynomial of F at lambda above it, so value, slope and curvature match
    at the splice point.
    """

    base: GrowthFunction
    lam: float
    mu: float
    F_at_lam: float = field(default=0.0)
    dF_at_lam: float = field(default=0.0)
    ddF_at_lam: float = field(default=0.0)

    # --- spliced integrand (no lift) ---

    def F_lam(self, s):
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape if s.ndim else (), dtype=float)
        below = s <= self.lam
        if s.ndim == 0:
            if below:
                return float(self.base.F(s))
            t = float(s) - self.lam
            return self.F_at_lam + self.dF_at_lam * t + 0.5 * self.ddF_at_lam * t * t
        if np.any(below):
            out[below] = self.base.F(s[below])
        t = s[~below] - self.lam
        out[~below] = self.F_at_lam + self.dF_at_lam * t + 0.5 * self.ddF_at_lam * t * t
        return out

    def dF_lam(self, s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            if s <= self.lam:
                return float(self.base.dF(s))
            return self.dF_at_lam + self.ddF_at_lam * (float(s) - self.lam)
        out = np.empty(s.shape, dtype=float)
        below = s <= self.lam
        if np.any(below):
            out[below] = self.base.dF(s[below])
        out[~below] = self.dF_at_lam + self.ddF_at_lam * (s[~below] - self.lam)
        return out

    def ddF_lam(self, s):
        s = np.asarray(s, dtype=float)
        if s.ndim == 0:
            return float(self.base.ddF(s)) if s <= self.lam else self.ddF_at_lam
        out = np.full(s.shape, self.ddF_at_lam, dtype=float)
        below = s <= self.lam
        if np.any(below):
            out[below] = self.base.ddF(s[below])
        return out

    # --- lifted integrand F_{lam,mu} ---

    def F_mu(self, s):
        s_arr = np.asarray(s, dtype=float)
        return 0.5 * self.mu * s_arr ** 2 + self.F_lam(s)

    def dF_mu(self, s):
        return self.mu * np.asarray(s, dtype=float) + self.dF_lam(s)

    def ddF_mu(self, s):
        return self.mu + self.ddF_lam(s)

    # --- coefficient a_lam and its derivative ---

    def a_lam(self, s):
        return self.dF_lam(s) / np.asarray(s, dtype=float)

    def da_lam(self, s):
        """a_lam'(s) = (F_lam''(s) - F_lam'(s)/s)/s."""
        s = np.asarray(s, dtype=float)
        return (self.ddF_lam(s) - self.dF_lam(s) / s) / s

    def quadratic_sandwich(self, grid):
        """Feasible constants for C3 s^2 - C4 <= F_{lam,mu}(s) <= C4 (s^2+1)."""
        grid = np.asarray(grid, dtype=float)
        vals = self.F_mu(grid)
        C3 = 0.5 * self.ddF_at_lam + 0.5 * self.mu
        C4_low = float(max(0.0, np.max(C3 * grid ** 2 - vals)))
        C4_up = float(np.max(vals / (grid ** 2 + 1.0)))
        C4 = max(C4_low, C4_up, 1e-300)
        return {"C3": float(C3), "C4": C4}


def make_regularized(g: GrowthFunction, lam: float, mu: float) -> RegularizedGrowth:
    """Splice a quadratic tail onto F at lam and add the (mu/2) s^2 lift."""
    if lam < g.lambda0:
        raise GrowthError(f"lambda={lam} below declared lambda0={g.lambda0}")
    if mu < 0.0:
        raise GrowthError("mu must be non-negative")
    ddF = float(g.ddF(lam))
    if not (ddF > 0.0):
        raise InvalidThreshold(f"F''(lambda)={ddF} is not positive at lambda={lam}")
    return RegularizedGrowth(base=g, lam=float(lam), mu=float(mu),
                             F_at_lam=float(g.F(lam)), dF_at_lam=float(g.dF(lam)),
                             ddF_at_lam=ddF)


def inverse_dF(rg: RegularizedGrowth, y: float) -> float:
    """Invert the monotone map G(s) = mu s + F_lam'(s).

    Returns 0 for y at or below G(0+); otherwise brackets geometrically and
    solves with Brent, then polishes with Newton to |G(s)-y| <= 1e-12 max(1,y).
    """
    if y < 0.0:
        raise GrowthError("y must be non-negative")

    def G(s):
        return rg.mu * s + float(rg.dF_lam(s))

    if y <= G(1e-300):
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(4000):
        if G(hi) >= y:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise GrowthError(f"could not bracket y={y}")
    s = brentq(lambda t: G(t) - y, lo, hi, xtol=1e-300, rtol=8.9e-16)
    for _ in range(3):
        gp = rg.mu + float(rg.ddF_lam(s))
        if gp <= 0.0:
            break
        s = s - (G(s) - y) / gp
        s = max(s, 0.0)
    if abs(G(s) - y) > 1e-12 * max(1.0, y):
        raise GrowthError(f"inverse solve did not converge at y={y}")
    return float(s)


# ---------------------------------------------------------------------------
# catalogue
# ---------------------------------------------------------------------------

def power_growth(p: float, delta_growth: float = 0.5) -> GrowthFunction:
    if p <= 1.0:
        raise GrowthError("power growth requires p > 1")
    lam0 = (p - 1.0) ** (-1.0 / (1.0 - delta_growth)) if delta_growth < 1.0 else 1.0 / (p - 1.0)
    return GrowthFunction(
        name=f"power_p{p:g}",
        eval_F=lambda s: np.power(s, p),
        eval_dF=lambda s: p * np.power(s, p - 1.0),
        eval_ddF=lambda s: p * (p - 1.0) * np.power(s, p - 2.0),
        delta_growth=delta_growth,
        lambda0=lam0,
        convexity_ratio=lambda s: np.full_like(np.asarray(s, dtype=float), p - 1.0),
    )


def prototype_growth() -> GrowthFunction:
    """Comparison integrand with slope s/(1+s): F(s) = s - ln(1+s)."""
    return GrowthFunction(
        name="prototype",
        eval_F=lambda s: np.asarray(s, dtype=float) - np.log1p(s),
        eval_dF=lambda s: np.asarray(s, dtype=float) / (1.0 + np.asarray(s, dtype=float)),
        eval_ddF=lambda s: 1.0 / (1.0 + np.asarray(s, dtype=float)) ** 2,
        delta_growth=0.5,
        lambda0=0.0,
        convexity_ratio=lambda s: 1.0 / (1.0 + np.asarray(s, dtype=float)),
    )


# Onset of the oscillating exponent: smallest t with sin(ln ln ln t) = 1.
T0_OSCILLATING = math.exp(math.exp(math.exp(math.pi / 2.0)))


def oscillating_growth(p: float = 2.0, q: float = 4.0, delta_growth: float = 0.5) -> GrowthFunction:
    """Exponent oscillating between p and q: t^p below t0, then
    t^(A + B sin(ln ln ln t)) with A = (p+q)/2, B = (p-q)/2.

    Participates in growth checks only; t0 ~ 2.3e53 is far beyond any
    solver range."""
    if not (1.0 < p <= q):
        raise GrowthError("need 1 < p <= q")
    A = 0.5 * (p + q)
    B = 0.5 * (p - q)
    t0 = T0_OSCILLATING
    lam0 = (p - 1.0) ** (-1.0 / (1.0 - delta_growth)) if delta_growth < 1.0 else 1.0 / (p - 1.0)

    def _log_derivs(t):
        # g(t) = ln F(t) = e(t) ln t; returns (g', g'' + g'^2)
        lt = np.log(t)
        llt = np.log(lt)
        lllt = np.log(llt)
        e = A + B * np.sin(lllt)
        w = 1.0 / (t * lt * llt)
        ep = B * np.cos(lllt) * w
        wp = -w / t * (1.0 + 1.0 / lt + 1.0 / (lt * llt))
        epp = -B * np.sin(lllt) * w * w + B * np.cos(lllt) * wp
        gp = ep * lt + e / t
        gpp = epp * lt + 2.0 * ep / t - e / (t * t)
        return gp, gpp + gp * gp

    def F(t):
        t = np.asarray(t, dtype=float)
        lo = t <= t0
        if t.ndim == 0:
            if lo:
                return float(t) ** p
            e = A + B * math.sin(math.log(math.log(math.log(float(t)))))
            return float(t) ** e
        out = np.empty(t.shape)
        out[lo] = t[lo] ** p
        th = t[~lo]
        e = A + B * np.sin(np.log(np.log(np.log(th))))
        out[~lo] = th ** e
        return out

    def dF(t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            if t <= t0:
                return p * float(t) ** (p - 1.0)
            gp, _ = _log_derivs(float(t))
            return F(t) * gp
        out = np.empty(t.shape)
        lo = t <= t0
        out[lo] = p * t[lo] ** (p - 1.0)
        if np.any(~lo):
            gp, _ = _log_derivs(t[~lo])
            out[~lo] = F(t[~lo]) * gp
        return out

    def ddF(t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            if t <= t0:
                return p * (p - 1.0) * float(t) ** (p - 2.0)
            _, h = _log_derivs(float(t))
            return F(t) * h
        out = np.empty(t.shape)
        lo = t <= t0
        out[lo] = p * (p - 1.0) * t[lo] ** (p - 2.0)
        if np.any(~lo):
            _, h = _log_derivs(t[~lo])
            out[~lo] = F(t[~lo]) * h
        return out

    def ratio(t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            if t <= t0:
                return p - 1.0
            gp, h = _log_derivs(float(t))
            return float(t) * h / gp
        out = np.full(t.shape, p - 1.0)
        hi = t > t0
        if np.any(hi):
            gp, h = _log_derivs(t[hi])
            out[hi] = t[hi] * h / gp
        return out

    # F stays finite while e(t) ln t < 709
    s_cap = math.exp(700.0 / q)
    return GrowthFunction(name=f"oscillating_p{p:g}_q{q:g}", eval_F=F, eval_dF=dF,
                          eval_ddF=ddF, delta_growth=delta_growth, lambda0=lam0,
                          s_max_eval=s_cap, convexity_ratio=ratio)


def eta_log_growth(alpha: float = 2.0, delta_growth: float = 0.5) -> GrowthFunction:
    """Nearly linear family F(s) = s (1 + ln(1+s))^alpha."""
    if alpha <= 0.0:
        raise GrowthError("alpha must be positive")

    def _parts(s):
        v = 1.0 + np.asarray(s, dtype=float)
        u = 1.0 + np.log(v)
        eta = u ** alpha
        etap = alpha * u ** (alpha - 1.0) / v
        etapp = (alpha * (alpha - 1.0) * u ** (alpha - 2.0) - alpha * u ** (alpha - 1.0)) / v ** 2
        return eta, etap, etapp

    def F(s):
        eta, _, _ = _parts(s)
        return np.asarray(s, dtype=float) * eta

    def dF(s):
        eta, etap, _ = _parts(s)
        return eta + np.asarray(s, dtype=float) * etap

    def ddF(s):
        _, etap, etapp = _parts(s)
        return 2.0 * etap + np.asarray(s, dtype=float) * etapp

    return make_growth(f"eta_log_a{alpha:g}", F, dF, ddF, delta_growth=delta_growth,
                       lambda0=5.0)


def eta_expexp_growth(delta_growth: float = 0.5) -> GrowthFunction:
    """Doubly exponential family F(s) = s exp(exp(s)).

    F overflows near s ~ 6.2, so the evaluation cap is tight; the convexity
    ratio is supplied analytically and saturates to +inf (never NaN) for
    large s, which keeps the hypothesis checks meaningful far beyond the
    overflow point of F itself."""

    def F(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):  # saturates to +inf past ~6.2
            return s * np.exp(np.exp(s))

    def dF(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):
            es = np.exp(s)
            return np.exp(es) * (1.0 + s * es)

    def ddF(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):
            es = np.exp(s)
            return np.exp(es) * es * (2.0 + s + s * es)

    def ratio(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(over="ignore"):
            if s.ndim == 0:
                sf = float(s)
                if sf > 30.0:
                    return sf * math.exp(min(sf, 745.0)) if sf < 745.0 else math.inf
                es = math.exp(sf)
                return sf * es * (2.0 + sf + sf * es) / (1.0 + sf * es)
            out = np.empty(s.shape)
            big = s > 30.0
            out[big] = s[big] * np.exp(s[big])  # overflow saturates to +inf
            sl = s[~big]
            es = np.exp(sl)
            out[~big] = sl * es * (2.0 + sl + sl * es) / (1.0 + sl * es)
            return out

    return GrowthFunction(name="eta_expexp", eval_F=F, eval_dF=dF, eval_ddF=ddF,
                          delta_growth=delta_growth, lambda0=1.0, s_max_eval=6.2,
                          convexity_ratio=ratio)


def catalogue() -> list[GrowthFunction]:
    """Built-in growth functions covering power, oscillating-exponent,
    slow/fast eta families, and the comparison prototype."""
    return [
        power_growth(2.0),
        power_growth(3.0),
        power_growth(4.0),
        oscillating_growth(2.0, 4.0),
        eta_log_growth(2.0),
        eta_expexp_growth(),
        prototype_growth(),
    ]


def growth_from_spec(spec: dict) -> GrowthFunction:
    """Instantiate a growth function from a config mapping, e.g.
    {"kind": "power", "p": 3} or {"kind": "eta_log", "alpha": 2}."""
    kind = spec.get("kind")
    delta = float(spec.get("delta_growth", 0.5))
    if kind == "power":
        return power_growth(float(spec["p"]), delta)
    if kind == "prototype":
        return prototype_growth()
    if kind == "oscillating":
        return oscillating_growth(float(spec.get("p", 2.0)), float(spec.get("q", 4.0)), delta)
    if kind == "eta_log":
        return eta_log_growth(float(spec.get("alpha", 2.0)), delta)
    if kind == "eta_expexp":
        return eta_expexp_growth(delta)
    raise GrowthError(f"unknown growth kind {kind!r}")
