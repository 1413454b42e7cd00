"""End-to-end acceptance suite.

Each test covers one numbered acceptance property and emits a single
PASS/FAIL line (visible with pytest -s; assertions carry the same facts).
"""

import math
import time

import numpy as np
import pytest

from lipbarrier import (
    barrier as bar,
    geometry as geo,
    growth as gro,
    meshing,
    solver,
)


def report(num, ok, msg):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {msg}")
    assert ok, f"criterion {num}: {msg}"


def test_01_barrier_flux_and_superharmonicity():
    rng = np.random.default_rng(101)
    worst_flux = 0.0
    worst_lap = -np.inf
    for _ in range(1000):
        d = int(rng.integers(2, 5))
        r0 = rng.uniform(0.2, 3.0)
        q = rng.uniform(0.05, 0.95) * r0 ** (d - 1)
        proto = bar.PrototypeBarrier(q=q, r0=r0, d=d)
        r = r0 * rng.uniform(1.0 + 1e-9, 5.0)
        worst_flux = max(worst_flux, float(proto.flux_residual(r) / max(1.0, q)))
        worst_lap = max(worst_lap, float(proto.laplacian(r)))
    ok = worst_flux <= 1e-13 and worst_lap < 0.0
    report(1, ok, f"flux identity and superharmonicity over 1000 random "
           f"(d, r0, q, r): worst residual {worst_flux:.2e}, "
           f"worst Laplacian {worst_lap:.2e}")


def _trapezoid_richardson(f, a, b, levels=16):
    """Independent integration oracle: composite trapezoid with one
    Richardson extrapolation step at the finest pair of levels."""
    vals = []
    for k in (levels, 2 * levels):
        x = np.linspace(a, b, k + 1)
        vals.append(np.trapezoid(f(x), x))
    return (4.0 * vals[1] - vals[0]) / 3.0


def test_02_omega_closed_form_vs_independent_quadrature():
    rng = np.random.default_rng(202)
    worst = 0.0
    worst_oracle = 0.0
    for i in range(1000):
        r0 = rng.uniform(0.3, 2.0)
        q = rng.uniform(0.1, 0.9) * r0
        proto = bar.PrototypeBarrier(q=q, r0=r0, d=2)
        r = r0 * rng.uniform(1.0 + 1e-6, 4.0)
        cf = proto.omega_radial(r, method="closed_form")
        qd = proto.omega_radial(r, method="quadrature")
        worst = max(worst, abs(cf - qd))
        if i % 20 == 0:  # independent trapezoid/Richardson spot checks
            oracle = _trapezoid_richardson(lambda t: proto.b(t), r0, r,
                                           levels=2048)
            worst_oracle = max(worst_oracle, abs(cf - oracle))
    ok = worst <= 1e-9 and worst_oracle <= 1e-7
    report(2, ok, f"closed-form omega vs adaptive quadrature over 1000 "
           f"samples: max abs diff {worst:.2e} (independent trapezoid oracle "
           f"off by at most {worst_oracle:.2e})")


def test_03_supersolution_sign_sweep():
    t_start = time.time()
    integrands = [gro.power_growth(2.0), gro.power_growth(4.0),
                  gro.eta_log_growth(2.0)]
    rng = np.random.default_rng(303)
    n_trials = 10_000
    failures = 0
    L_min = np.inf
    for i in range(n_trials):
        g = integrands[i % 3]
        K = rng.uniform(0.1, 1.0)
        bc = bar.compute_constants(K, g.lambda0, g.delta_growth,
                                   Mstar=1.0, u0_norm_1inf=1.0, r0=1.0)
        M = bc.M
        # delta small enough that b >= M is reachable above r0
        delta = rng.uniform(0.05, 0.9) / (M + 1.0)
        q = 1.0 - delta
        r_up = q * (1.0 + M) / M  # b(r) >= M exactly up to here
        r = rng.uniform(1.0 + 1e-9, r_up)
        lam = max(g.lambda0, rng.uniform(0.2, 3.0))
        rg = gro.make_regularized(g, lam, 0.0)
        th = rng.uniform(0.0, 2.0 * np.pi)
        x = r * np.array([np.cos(th), np.sin(th)])
        phi = rng.uniform(0.0, 2.0 * np.pi)
        k = rng.uniform(0.0, K) * np.array([np.cos(phi), np.sin(phi)])
        proto = bar.PrototypeBarrier(q=q, r0=1.0, d=2)
        sign = 1 if i % 2 == 0 else -1
        tb = bar.TrueBarrier(proto=proto, k=k, c=0.0, sign=sign)
        res = bar.verify_supersolution_L(rg, tb, x, M=M, K=K)
        L_min = min(L_min, res["L_value"])
        if not res["holds"]:
            failures += 1
    ok = failures == 0
    report(3, ok, f"supersolution sign over {n_trials} random "
           f"(integrand, lambda, k, x) trials: {failures} failures, "
           f"min L {L_min:.3e}, {time.time() - t_start:.1f}s")


def test_04_constants_reproduction():
    bc = bar.compute_constants(K=1.0, lambda0=2.0, delta_growth=0.5,
                               Mstar=1.0, u0_norm_1inf=1.0, r0=1.0, d=2)
    got = (bc.M1, bc.M2, bc.M, bc.delta_max, bc.r_max)
    want = (2.0, 4.0, 4.0, 0.1, 1.125)
    ok = all(abs(a - b) < 1e-14 for a, b in zip(got, want))
    report(4, ok, f"constants pipeline (M1, M2, M, delta_max, r_max) = {got}, "
           f"expected {want}")


def test_05_radial_oracle_convergence():
    t_start = time.time()
    dom = geo.annulus(1.0, 2.0)
    ln2 = math.log(2.0)

    def u0(x):
        return np.log(np.linalg.norm(np.atleast_2d(x), axis=1)) / ln2

    def g0(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r2 = np.sum(x ** 2, axis=1)
        return x / (r2[:, None] * ln2)

    bd = geo.BoundaryData("radial_log", u0, g0, 1.0, 1.0 / ln2, 2.0 / ln2)
    rg = gro.make_regularized(gro.power_growth(2.0), 5.0, 1e-8)
    oracle = solver.radial_oracle(rg, 1.0, 2.0, 0.0, 1.0)
    errs, hs = [], []
    for h in (0.4, 0.2, 0.1):
        mesh = meshing.triangulate(dom, h)
        sol = solver.minimize_energy(rg, mesh, bd, tol=1e-11)
        r = np.linalg.norm(mesh.vertices, axis=1)
        u_ref = np.interp(r, oracle["r"], oracle["u"])
        errs.append(float(np.max(np.abs(sol.u - u_ref))))
        hs.append(mesh.h)
    rate = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    ok = rate >= 0.9 and errs[-1] <= 5e-3 and errs[0] > errs[-1]
    report(5, ok, f"annulus vs radial oracle: errors {[f'{e:.2e}' for e in errs]}, "
           f"rate {rate:.2f}, {time.time() - t_start:.1f}s")


def _random_configs(n=20, seed=606):
    rng = np.random.default_rng(seed)
    shapes = [{"shape": "disk", "R": 1.0},
              {"shape": "ellipse", "a": 1.6, "b": 1.0},
              {"shape": "annulus", "r_in": 1.0, "r_out": 2.0},
              {"shape": "rounded_polygon", "n_sides": 5, "rho": 0.3}]
    out = []
    for i in range(n):
        dom_spec = shapes[i % len(shapes)]
        kind = ["constant", "affine", "trig"][i % 3]
        if kind == "constant":
            bspec = {"kind": "constant", "value": float(rng.uniform(-1, 1))}
        elif kind == "affine":
            bspec = {"kind": "affine",
                     "k": [float(rng.uniform(-0.5, 0.5)) for _ in range(2)],
                     "c": float(rng.uniform(-0.5, 0.5))}
        else:
            bspec = {"kind": "trig", "amplitude": float(rng.uniform(0.1, 0.5)),
                     "freq": float(rng.uniform(0.5, 2.0))}
        p = float(rng.choice([2.0, 3.0, 4.0]))
        h = float(rng.uniform(0.28, 0.4))
        out.append((dom_spec, bspec, p, h))
    return out


_SWEEP_RESULTS = []


def _run_sweep():
    if _SWEEP_RESULTS:
        return _SWEEP_RESULTS
    for dom_spec, bspec, p, h in _random_configs():
        dom = geo.domain_from_spec(dom_spec)
        bd = geo.boundary_data_from_spec(bspec, dom)
        mesh = meshing.triangulate(dom, h)
        rg = gro.make_regularized(gro.power_growth(p), 6.0, 1e-3)
        sol = solver.minimize_energy(rg, mesh, bd, tol=1e-9)
        _SWEEP_RESULTS.append((sol, bd))
    return _SWEEP_RESULTS


def test_06_maximum_principle_sweep():
    t_start = time.time()
    worst = -np.inf
    bad = 0
    for sol, bd in _run_sweep():
        res = solver.verify_max_principle(sol, bd, C=1.0)
        worst = max(worst, res["excess"] - res["slack"])
        bad += 0 if res["ok"] else 1
    ok = bad == 0
    report(6, ok, f"discrete maximum principle on 20 randomized configs: "
           f"{bad} failures, worst margin {worst:.2e}, "
           f"{time.time() - t_start:.1f}s")


def test_07_gradient_boundary_dominance_sweep():
    bad = 0
    worst = -np.inf
    for sol, _bd in _run_sweep():
        res = solver.verify_gradient_principle(sol, C=1.0, exponent=0.5)
        worst = max(worst, res["interior_max"] - res["boundary_max"] - res["slack"])
        bad += 0 if res["ok"] else 1
    ok = bad == 0
    report(7, ok, f"gradient boundary dominance on the same 20 configs: "
           f"{bad} failures, worst margin {worst:.2e}")


def _flagship():
    dom = geo.disk(R=1.0, r0=0.5)
    bd = geo.boundary_data_from_spec({"kind": "trig", "amplitude": 0.3}, dom)
    g = gro.power_growth(4.0)
    return dom, bd, g


def test_08_sandwich_and_normal_derivative():
    t_start = time.time()
    dom, bd, g = _flagship()
    rg = gro.make_regularized(g, 2.0, 1e-4)
    x0 = np.array([0.0, -1.0])
    pair = bar.build_barrier_pair(rg, dom, bd, x0)
    # mesh finer than the strip depth so interior nodes land in the patch
    mesh = meshing.triangulate(dom, 0.04)
    sol = solver.minimize_energy(rg, mesh, bd, tol=1e-10)
    sand = solver.verify_sandwich(sol, pair, bd, C=1.0)
    dn = solver.normal_derivative_at(sol, dom, x0)
    bound = bar.normal_derivative_bound(pair)
    ok = (pair.verified and sand["ok"] and sand["n_nodes"] > 0
          and dn <= bound + mesh.h)
    report(8, ok, f"flagship sandwich at {sand.get('n_nodes', 0)} patch nodes "
           f"(margins {sand.get('upper_margin', float('nan')):.2e}/"
           f"{sand.get('lower_margin', float('nan')):.2e}, touch gap "
           f"{sand.get('touch_gap', float('nan')):.1e}) and normal derivative "
           f"{dn:.3f} <= bound {bound:.3e}, {time.time() - t_start:.1f}s")


def test_09_lambda_closure():
    t_start = time.time()
    dom, bd, g = _flagship()
    mesh = meshing.triangulate(dom, 0.18)
    tol = 1e-9
    res = solver.lambda_fixed_point(g, mesh, bd, mu=1e-3, lambda_init=0.2,
                                    max_rounds=5, tol=tol)
    ok = (res["sol"].sup_grad <= res["lambda_star"]
          and res["rounds"] <= 5
          and res["consistency_diff"] <= 10.0 * tol)
    report(9, ok, f"lambda closure in {res['rounds']} rounds at "
           f"lambda* = {res['lambda_star']:.3f}; doubling lambda moved the "
           f"solution by {res['consistency_diff']:.1e}, "
           f"{time.time() - t_start:.1f}s")


def test_10_growth_check_table():
    wide = np.geomspace(10.0, 1e60, 2048)
    cases = [
        (gro.power_growth(3.0), gro.default_tail_grid(), True),
        (gro.prototype_growth(), gro.default_tail_grid(), False),
        (gro.oscillating_growth(2.0, 4.0), wide, True),
        (gro.eta_expexp_growth(), gro.default_tail_grid(), True),
    ]
    rows = []
    ok = True
    for g, grid, expect in cases:
        res = gro.check_A2(g, g.delta_growth, grid)
        rows.append(f"{g.name}={'pass' if res['holds'] else 'fail'}")
        ok = ok and (res["holds"] == expect)
    report(10, ok, "growth classification table: " + ", ".join(rows))


def test_11_delta_ring_divergence():
    bc = bar.compute_constants(1.0, 2.0, 0.5, 1.0, 1.0, r0=1.0)
    deltas = []
    ok = True
    for target in (1.0, 10.0, 100.0):
        d = bar.choose_delta_ring(bc, 1.0, 0.1, 2, target)
        ok = ok and bar.ring_integral(d, 1.0, 0.1, 2) >= target and 0 < d < bc.delta_max
        deltas.append(d)
    ok = ok and deltas[0] >= deltas[1] >= deltas[2] and deltas[2] < deltas[0]
    report(11, ok, f"ring-thinning search terminates with integral >= target "
           f"and delta decreasing: {[f'{d:.2e}' for d in deltas]}")
