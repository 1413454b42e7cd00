"""Configuration-driven experiment runner.

Subcommands: growth-check, barrier, solve, verify-all.  All outputs are
deterministic (sorted keys, fixed float formatting) so identical config +
seed gives byte-identical files.

Exit codes: 0 all checks pass, 1 verification failure, 2 config error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import barrier as bar
from . import geometry as geo
from . import growth as gro
from . import meshing, solver


class ConfigError(ValueError):
    pass


EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def worker_count():
    """Worker cap from LIPBARRIER_THREADS (defaults to the CPU count)."""
    n = os.cpu_count() or 1
    env = os.environ.get("LIPBARRIER_THREADS")
    if env is not None:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ConfigError(f"LIPBARRIER_THREADS={env!r} is not an integer")
    return n


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "growths": [{"kind": "power", "p": 4, "delta_growth": 0.5,
                 "require": ["A1", "A2"]}],
    "domain": {"shape": "disk", "R": 1.0},
    "boundary": {"kind": "trig", "amplitude": 0.3, "freq": 1.0, "phase": 0.0},
    "x0": None,
    "solver": {"h": 0.15, "tol": 1e-9, "mu_schedule": [1e-2, 1e-3, 1e-4],
               "lambda_init": 1.0, "seed": 0, "max_rounds": 8},
    "verification": {"C_max": 1.0, "C_grad": 1.0, "grad_exponent": 0.5,
                     "C_sandwich": 1.0, "enabled": ["max_principle",
                                                    "gradient_principle"]},
}


@dataclass
class ExperimentConfig:
    growths: list
    domain: dict
    boundary: dict
    x0: object
    solver: dict
    verification: dict

    def to_dict(self):
        return {"growths": self.growths, "domain": self.domain,
                "boundary": self.boundary, "x0": self.x0,
                "solver": self.solver, "verification": self.verification}


def _merge(defaults, user):
    if isinstance(defaults, dict) and isinstance(user, dict):
        out = dict(defaults)
        for k, v in user.items():
            out[k] = _merge(defaults.get(k), v) if k in defaults else v
        return out
    return user


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    return config_from_dict(raw)


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    unknown = set(raw) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {k: _merge(_DEFAULTS[k], raw[k]) if k in raw else _DEFAULTS[k]
              for k in _DEFAULTS}
    return ExperimentConfig(**merged)


def _json_dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")


def _csv_dump(rows, header, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])


def _build_domain(cfg):
    spec = dict(cfg.domain)
    try:
        return geo.domain_from_spec(spec)
    except (KeyError, geo.GeometryError, TypeError) as exc:
        raise ConfigError(f"bad domain spec: {exc}")


def _build_boundary(cfg, dom):
    try:
        return geo.boundary_data_from_spec(dict(cfg.boundary), dom)
    except (KeyError, geo.GeometryError, TypeError) as exc:
        raise ConfigError(f"bad boundary spec: {exc}")


def _build_growth(spec):
    try:
        return gro.growth_from_spec(dict(spec))
    except (KeyError, gro.GrowthError, TypeError) as exc:
        raise ConfigError(f"bad growth spec: {exc}")


def _pick_x0(cfg, dom):
    """Configured contact point, or the bottom-most boundary point."""
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
        try:
            ci, t = dom.locate_boundary_point(x0)
        except geo.GeometryError as exc:
            raise ConfigError(str(exc))
        return dom.components[ci].point(np.array([t]))[0]
    pts, _, _, _ = dom.boundary_samples(per_unit_arc=256)
    return pts[int(np.argmin(pts[:, 1]))]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_growth_check(cfg, out_dir):
    def one(spec):
        g = _build_growth(spec)
        required = spec.get("require", ["A1", "A2"])
        a1_grid = gro.default_tail_grid(hi=min(1e8, g.s_max_eval))
        tail = gro.default_tail_grid()
        a1 = gro.check_A1(g, a1_grid)
        a2 = gro.check_A2(g, g.delta_growth, tail)
        rel = gro.check_A2_relaxed(g, g.delta_growth, tail)
        results = {"A1": a1["holds"], "A2": a2["holds"],
                   "A2_relaxed": rel["holds"]}
        unknown = set(required) - set(results)
        if unknown:
            raise ConfigError(f"unknown hypothesis names {sorted(unknown)}")
        holds = all(results[r] for r in required)
        return {"name": g.name, "delta": g.delta_growth,
                "liminf_estimate": a2["liminf_estimate"],
                "lambda0": a2["lambda0_suggested"], "holds": holds,
                "results": results, "required": sorted(required)}

    with ThreadPoolExecutor(max_workers=worker_count()) as ex:
        rows = list(ex.map(one, cfg.growths))
    rows.sort(key=lambda r: r["name"])
    _csv_dump([[r["name"], r["delta"], r["liminf_estimate"], r["lambda0"],
                r["holds"]] for r in rows],
              ["name", "delta", "liminf_estimate", "lambda0", "holds"],
              os.path.join(out_dir, "growth_check.csv"))
    report = {"config": cfg.to_dict(), "rows": rows,
              "all_hold": all(r["holds"] for r in rows)}
    _json_dump(report, os.path.join(out_dir, "growth_check.json"))
    return EXIT_OK if report["all_hold"] else EXIT_VERIFICATION, report


def _regularized_for(cfg, g):
    mu = float(cfg.solver["mu_schedule"][-1])
    lam = max(float(cfg.solver["lambda_init"]), g.lambda0, 1e-6)
    return gro.make_regularized(g, lam, mu)


def cmd_barrier(cfg, out_dir):
    dom = _build_domain(cfg)
    bd = _build_boundary(cfg, dom)
    g = _build_growth(cfg.growths[0])
    rg = _regularized_for(cfg, g)
    x0 = _pick_x0(cfg, dom)
    pair = bar.build_barrier_pair(rg, dom, bd, x0)
    bc = pair.constants
    proto = pair.upper.proto

    radii = np.linspace(proto.r0 * (1.0 + 1e-9), bc.r_max, 200)
    pde = bar.verify_prototype_pde(proto, radii)
    _csv_dump([[float(r), float(proto.b(r)), float(proto.omega_radial(r))]
               for r in radii],
              ["r", "b", "omega"], os.path.join(out_dir, "barrier_profile.csv"))

    report = {"config": cfg.to_dict(),
              "x0": [float(x0[0]), float(x0[1])],
              "q": pair.q, "r0": bc.r0, "K": bc.K,
              "M1": bc.M1, "M2": bc.M2, "M": bc.M, "Mstar": bc.Mstar,
              "delta_max": bc.delta_max, "delta_ring": bc.delta_ring,
              "r_max": bc.r_max, "eta": bc.eta_standoff,
              "gradient_bound": pair.gradient_bound,
              "L_min_observed": pair.report.get("L_min_observed"),
              "prototype_pde": pde,
              "stage": pair.report.get("stage"),
              "verified": pair.verified and pde["ok"]}
    _json_dump(report, os.path.join(out_dir, "barrier_report.json"))
    return (EXIT_OK if report["verified"] else EXIT_VERIFICATION), report


def cmd_solve(cfg, out_dir):
    dom = _build_domain(cfg)
    bd = _build_boundary(cfg, dom)
    g = _build_growth(cfg.growths[0])
    sp = cfg.solver
    mesh = meshing.triangulate(dom, float(sp["h"]))
    mus = [float(m) for m in sp["mu_schedule"]]

    closure = solver.lambda_fixed_point(g, mesh, bd, mus[0],
                                        float(sp["lambda_init"]),
                                        max_rounds=int(sp["max_rounds"]),
                                        tol=float(sp["tol"]))
    lam_star = closure["lambda_star"]
    sweep = None
    sol = closure["sol"]
    if len(mus) > 1:
        sweep = solver.mu_sweep(g, mesh, bd, lam_star, mus, tol=float(sp["tol"]))
        sol = sweep["sols"][-1]

    vc = cfg.verification
    checks = {}
    if "max_principle" in vc["enabled"]:
        checks["max_principle"] = solver.verify_max_principle(sol, bd, C=vc["C_max"])
    if "gradient_principle" in vc["enabled"]:
        checks["gradient_principle"] = solver.verify_gradient_principle(
            sol, C=vc["C_grad"], exponent=vc["grad_exponent"])

    _csv_dump([[i, float(v[0]), float(v[1]), float(sol.u[i]),
                bool(mesh.boundary_mask[i])]
               for i, v in enumerate(mesh.vertices)],
              ["index", "x", "y", "u", "boundary"],
              os.path.join(out_dir, "solution_vertices.csv"))
    _csv_dump([[i, int(t[0]), int(t[1]), int(t[2]),
                float(gv[0]), float(gv[1])]
               for i, (t, gv) in enumerate(zip(mesh.triangles, sol.element_grads))],
              ["index", "v0", "v1", "v2", "gx", "gy"],
              os.path.join(out_dir, "solution_elements.csv"))

    ok = all(c["ok"] for c in checks.values())
    report = {"config": cfg.to_dict(), "h": mesh.h,
              "n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles,
              "lambda_star": lam_star, "rounds": closure["rounds"],
              "consistency_diff": closure["consistency_diff"],
              "energy": sol.energy, "sup_u": sol.sup_u,
              "sup_grad": sol.sup_grad, "residual": sol.residual,
              "mu_sweep": None if sweep is None else
              {"mus": sweep["mus"], "distances": sweep["distances"],
               "cauchy_like": sweep["cauchy_like"]},
              "checks": checks, "all_pass": ok}
    _json_dump(report, os.path.join(out_dir, "solve_report.json"))
    return (EXIT_OK if ok else EXIT_VERIFICATION), report, sol, dom, bd


def cmd_verify_all(cfg, out_dir):
    agg = {"config": cfg.to_dict(), "stages": {}}
    path = os.path.join(out_dir, "verify_all.json")

    code, growth_rep = cmd_growth_check(cfg, out_dir)
    agg["stages"]["growth"] = {"ok": code == EXIT_OK,
                               "all_hold": growth_rep["all_hold"]}
    if code != EXIT_OK:
        agg["verdict"] = "fail"
        agg["failed_stage"] = "growth"
        agg["skipped"] = ["barrier", "solve", "cross_check"]
        _json_dump(agg, path)
        return EXIT_VERIFICATION, agg

    code, barrier_rep = cmd_barrier(cfg, out_dir)
    agg["stages"]["barrier"] = {"ok": code == EXIT_OK,
                                "stage": barrier_rep["stage"],
                                "gradient_bound": barrier_rep["gradient_bound"]}
    if code != EXIT_OK:
        agg["verdict"] = "fail"
        agg["failed_stage"] = "barrier"
        agg["skipped"] = ["solve", "cross_check"]
        _json_dump(agg, path)
        return EXIT_VERIFICATION, agg

    code, solve_rep, sol, dom, bd = cmd_solve(cfg, out_dir)
    agg["stages"]["solve"] = {"ok": code == EXIT_OK,
                              "checks": solve_rep["checks"]}
    if code != EXIT_OK:
        agg["verdict"] = "fail"
        agg["failed_stage"] = "solve"
        agg["skipped"] = ["cross_check"]
        _json_dump(agg, path)
        return EXIT_VERIFICATION, agg

    # cross-check the measured solution against the barrier bound
    x0 = np.asarray(barrier_rep["x0"], dtype=float)
    C = cfg.verification["C_max"]
    h = solve_rep["h"]
    dn = solver.normal_derivative_at(sol, dom, x0)
    bound = barrier_rep["gradient_bound"]
    cross = {
        "normal_derivative_measured": dn,
        "normal_derivative_bound": bound,
        "normal_ok": bool(dn <= bound + C * h),
        "sup_grad": solve_rep["sup_grad"],
        "global_bound": bound + bd.grad_inf,
        "global_ok": bool(solve_rep["sup_grad"]
                          <= bound + bd.grad_inf + C * math.sqrt(h)
                          * max(1.0, bound)),
    }
    agg["stages"]["cross_check"] = cross
    ok = cross["normal_ok"] and cross["global_ok"]
    agg["verdict"] = "pass" if ok else "fail"
    if not ok:
        agg["failed_stage"] = "cross_check"
    _json_dump(agg, path)
    return (EXIT_OK if ok else EXIT_VERIFICATION), agg


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="lipbarrier",
                                description="growth checks, barrier construction, "
                                "energy minimization and verification sweeps")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("growth-check", "barrier", "solve", "verify-all"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.solver["seed"] = int(args.seed)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "growth-check":
            code, _ = cmd_growth_check(cfg, args.out)
        elif args.command == "barrier":
            code, _ = cmd_barrier(cfg, args.out)
        elif args.command == "solve":
            code = cmd_solve(cfg, args.out)[0]
        else:
            code, _ = cmd_verify_all(cfg, args.out)
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (solver.SolverError, bar.BarrierError, geo.GeometryError,
            gro.GrowthError, meshing.MeshError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
