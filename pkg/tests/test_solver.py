import math

import numpy as np
import pytest

from lipbarrier import (
    geometry as geo,
    growth as gro,
    meshing,
    solver,
)


def quadratic_rg(lam=5.0, mu=1e-3):
    return gro.make_regularized(gro.power_growth(2.0), lam, mu)


class TestMeshing:
    @pytest.mark.parametrize("spec,h", [
        ({"shape": "disk", "R": 1.0}, 0.25),
        ({"shape": "annulus"}, 0.3),
        ({"shape": "ellipse", "a": 2.0, "b": 1.0}, 0.35),
        ({"shape": "rounded_polygon"}, 0.3),
    ])
    def test_valid_meshes(self, spec, h):
        dom = geo.domain_from_spec(spec)
        mesh = meshing.triangulate(dom, h)
        assert mesh.h <= h
        assert np.all(mesh.signed_areas() > 0.0)
        assert np.any(mesh.boundary_mask) and np.any(~mesh.boundary_mask)

    def test_annulus_quarter_turn_symmetry(self):
        dom = geo.annulus(1.0, 2.0)
        mesh = meshing.triangulate(dom, 0.3)
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        rotated = mesh.vertices @ R.T
        # every rotated vertex must coincide with an existing vertex
        d = np.min(np.linalg.norm(rotated[:, None, :] - mesh.vertices[None, :, :],
                                  axis=-1), axis=1)
        assert np.max(d) < 1e-10

    def test_bad_target(self):
        dom = geo.disk(1.0)
        with pytest.raises(meshing.MeshError):
            meshing.triangulate(dom, -0.1)
        with pytest.raises(meshing.MeshError):
            meshing.triangulate(dom, 100.0)


class TestMinimize:
    def test_affine_data_is_exact(self):
        # affine functions have constant gradient, so they minimize the
        # energy for any integrand depending on |grad u| alone
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "affine", "k": [0.7, -0.4],
                                          "c": 0.2}, dom)
        mesh = meshing.triangulate(dom, 0.3)
        for p in (2.0, 4.0):
            rg = gro.make_regularized(gro.power_growth(p), 5.0, 1e-3)
            sol = solver.minimize_energy(rg, mesh, bd, tol=1e-11)
            exact = bd.u0(mesh.vertices)
            assert np.max(np.abs(sol.u - exact)) < 1e-8

    def test_energy_monotone_decreasing(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "trig", "amplitude": 0.5}, dom)
        mesh = meshing.triangulate(dom, 0.3)
        sol = solver.minimize_energy(quadratic_rg(), mesh, bd, tol=1e-10)
        assert all(b <= a + 1e-14 for a, b in zip(sol.energies, sol.energies[1:]))
        assert sol.residual <= 1e-10 * (1.0 + abs(sol.energy))

    def test_uniqueness_restart(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "trig", "amplitude": 0.3}, dom)
        mesh = meshing.triangulate(dom, 0.35)
        rg = gro.make_regularized(gro.power_growth(4.0), 2.0, 1e-2)
        solver.minimize_energy(rg, mesh, bd, tol=1e-10,
                               verify_uniqueness=True, seed=11)

    def test_mu_zero_rejected(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "constant"}, dom)
        mesh = meshing.triangulate(dom, 0.4)
        rg = gro.make_regularized(gro.power_growth(2.0), 2.0, 0.0)
        with pytest.raises(solver.SolverError):
            solver.minimize_energy(rg, mesh, bd)


class TestRadialOracle:
    def test_harmonic_annulus_profile(self):
        # F = s^2: r G(u') = q gives u' ~ 1/r, so u = ln r / ln 2
        rg = quadratic_rg(mu=0.5)
        res = solver.radial_oracle(rg, 1.0, 2.0, 0.0, 1.0)
        exact = np.log(res["r"]) / math.log(2.0)
        assert np.max(np.abs(res["u"] - exact)) < 1e-10
        assert res["u"][-1] == pytest.approx(1.0, abs=1e-10)

    def test_orientation_and_constant(self):
        rg = quadratic_rg(mu=0.5)
        res = solver.radial_oracle(rg, 1.0, 2.0, 1.0, 0.0)
        assert res["q"] < 0.0 and res["u"][0] == pytest.approx(1.0)
        flat = solver.radial_oracle(rg, 1.0, 2.0, 0.5, 0.5)
        assert flat["q"] == 0.0 and np.all(flat["u"] == 0.5)

    def test_nonquadratic_consistency(self):
        # p = 4 splice high enough to stay in the genuine power regime
        rg = gro.make_regularized(gro.power_growth(4.0), 10.0, 1e-6)
        res = solver.radial_oracle(rg, 1.0, 2.0, 0.0, 0.5)
        # exact profile for F' = 4 s^3: u'(r) = (q/4)^(1/3) r^(-1/3)
        q = res["q"]
        exact_du = (q / 4.0) ** (1.0 / 3.0) * res["r"] ** (-1.0 / 3.0)
        assert np.max(np.abs(res["du"] - exact_du)) < 1e-5


class TestVerifications:
    def make_sol(self, amp=0.4):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "trig", "amplitude": amp}, dom)
        mesh = meshing.triangulate(dom, 0.3)
        sol = solver.minimize_energy(quadratic_rg(), mesh, bd, tol=1e-10)
        return sol, bd, dom

    def test_max_principle(self):
        sol, bd, _ = self.make_sol()
        res = solver.verify_max_principle(sol, bd)
        assert res["ok"]
        assert res["excess"] <= 1e-8  # interior strictly below the trace sup

    def test_gradient_principle(self):
        sol, _, _ = self.make_sol()
        res = solver.verify_gradient_principle(sol)
        assert res["ok"]

    def test_normal_derivative_at(self):
        sol, _, dom = self.make_sol()
        dn = solver.normal_derivative_at(sol, dom, np.array([0.0, -1.0]))
        assert 0.0 <= dn <= sol.sup_grad + 1e-12


class TestClosure:
    def test_lambda_fixed_point_disk(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "trig", "amplitude": 0.3}, dom)
        mesh = meshing.triangulate(dom, 0.3)
        g = gro.power_growth(4.0)
        res = solver.lambda_fixed_point(g, mesh, bd, mu=1e-3, lambda_init=0.2,
                                        max_rounds=6, tol=1e-10)
        assert res["sol"].sup_grad <= res["lambda_star"]
        assert res["rounds"] <= 5
        assert res["consistency_diff"] <= 1e-8

    def test_mu_sweep_cauchy(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "trig", "amplitude": 0.3}, dom)
        mesh = meshing.triangulate(dom, 0.3)
        g = gro.power_growth(4.0)
        res = solver.mu_sweep(g, mesh, bd, lam=2.0,
                              mus=[1e-1, 1e-2, 1e-3, 1e-4], tol=1e-10)
        assert res["cauchy_like"]
        assert res["distances"][-1] < res["distances"][0]

    def test_bad_mu_schedule(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "constant"}, dom)
        mesh = meshing.triangulate(dom, 0.4)
        with pytest.raises(solver.SolverError):
            solver.mu_sweep(gro.power_growth(2.0), mesh, bd, 2.0, [1e-2, 1e-2])
