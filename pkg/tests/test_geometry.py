import numpy as np
import pytest

from lipbarrier import geometry as geo


class TestExteriorBall:
    def test_disk_bottom_point(self):
        dom = geo.disk(R=1.0, r0=0.5)
        x0 = np.array([0.0, -1.0])
        ball = dom.exterior_ball_center(x0)
        assert np.allclose(ball["center"], [0.0, -1.5], atol=1e-12)
        frame = ball["frame"]
        # frame takes the center to the origin and x0 to (0, -r0)
        assert np.allclose(frame.to_frame(ball["center"][None])[0], [0.0, 0.0], atol=1e-12)
        assert np.allclose(frame.to_frame(x0[None])[0], [0.0, -0.5], atol=1e-10)
        # round trip
        p = np.array([[0.3, -0.7], [-0.2, 0.9]])
        assert np.allclose(frame.from_frame(frame.to_frame(p)), p, atol=1e-12)

    def test_oversized_ball_in_annulus_hole_rejected(self):
        dom = geo.annulus(r_in=1.0, r_out=2.0)
        # point on the inner circle; a radius-1.5 ball cannot fit in the hole
        x0 = np.array([1.0, 0.0])
        with pytest.raises(geo.ExteriorBallViolation):
            dom.exterior_ball_center(x0, r0=1.5)

    def test_ellipse_and_polygon_default_radii(self):
        ell = geo.ellipse(a=2.0, b=1.0)
        assert ell.r0 == pytest.approx(0.5)  # b^2/a
        poly = geo.rounded_polygon(n_sides=5, circumradius=1.0, rho=0.3)
        assert poly.r0 == pytest.approx(0.3)
        for dom in (ell, poly):
            pts, _, _, _ = dom.boundary_samples(per_unit_arc=128)
            x0 = pts[np.argmin(pts[:, 1])]
            dom.exterior_ball_center(x0)  # must not raise

    def test_off_boundary_point_rejected(self):
        dom = geo.disk(R=1.0)
        with pytest.raises(geo.GeometryError):
            dom.locate_boundary_point(np.array([0.3, 0.3]))


class TestMstar:
    def test_disk_inequality_holds_on_samples(self):
        dom = geo.disk(R=1.0, r0=0.5)
        x0 = np.array([0.0, -1.0])
        Mstar = dom.compute_Mstar(x0, patch_radius=0.8)
        assert Mstar > 0.0 and np.isfinite(Mstar)
        ball = dom.exterior_ball_center(x0)
        frame = ball["frame"]
        th = np.linspace(-0.6, 0.6, 301) - np.pi / 2
        pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
        pts = pts[np.linalg.norm(pts - x0, axis=1) <= 0.8]
        y = frame.to_frame(pts)
        gap = np.linalg.norm(y, axis=1) - 0.5
        d2 = np.sum((pts - x0) ** 2, axis=1)
        mask = gap > 1e-12
        assert np.all(Mstar * gap[mask] >= d2[mask] * (1 - 1e-9))


class TestLocalGraph:
    @pytest.mark.parametrize("make", [
        lambda: geo.disk(1.0, 0.4),
        lambda: geo.ellipse(2.0, 1.0),
        lambda: geo.rounded_polygon(6, 1.0, 0.25),
    ])
    def test_graph_frame_properties(self, make):
        dom = make()
        pts, _, _, _ = dom.boundary_samples(per_unit_arc=128)
        x0 = pts[np.argmin(pts[:, 1])]
        graph = dom.local_graph(x0)
        f, r0, L = graph["f"], graph["r0"], graph["L"]
        assert f(0.0) == pytest.approx(-r0, abs=1e-6)
        eps = 1e-4 * L
        assert abs(f(eps) - f(-eps)) / (2 * eps) < 0.05
        # strip below the graph stays inside the domain
        frame = graph["frame"]
        xs = np.linspace(-0.9 * L, 0.9 * L, 25)
        taus = np.linspace(1e-3, 0.95 * graph["L_d"], 8)
        pp = np.array([[x, f(x) - t] for x in xs for t in taus])
        assert np.all(dom.contains(frame.from_frame(pp), tol=1e-8))


class TestBoundaryData:
    def test_trig_norms_match_brute_force(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec(
            {"kind": "trig", "amplitude": 0.3, "freq": 2.0}, dom)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(4000, 2))
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        assert np.max(np.abs(bd.u0(pts))) <= bd.norm_inf * (1 + 1e-6) + 1e-9
        assert np.max(np.linalg.norm(bd.grad_u0(pts), axis=1)) \
            <= bd.grad_inf * (1 + 1e-6) + 1e-9
        # finite-difference check of the gradient evaluator
        x = np.array([0.2, -0.4])
        h = 1e-6
        fd = [(bd.u0(x + h * np.eye(2)[i]) - bd.u0(x - h * np.eye(2)[i])) / (2 * h)
              for i in range(2)]
        assert np.allclose(bd.grad_u0(x), fd, atol=1e-6)

    def test_constant_and_affine(self):
        dom = geo.disk(1.0)
        bd = geo.boundary_data_from_spec({"kind": "constant", "value": -2.0}, dom)
        assert bd.norm_inf == 2.0 and bd.grad_inf == 0.0
        bd = geo.boundary_data_from_spec({"kind": "affine", "k": [3.0, 4.0]}, dom)
        assert bd.grad_inf == pytest.approx(5.0)
        assert bd.norm_1inf == pytest.approx(bd.norm_inf + 5.0)

    def test_unknown_kind(self):
        dom = geo.disk(1.0)
        with pytest.raises(geo.GeometryError):
            geo.boundary_data_from_spec({"kind": "wavelet"}, dom)


def test_domain_from_spec_dispatch():
    for spec, kind in [({"shape": "disk"}, "disk"),
                       ({"shape": "annulus"}, "annulus"),
                       ({"shape": "ellipse"}, "ellipse"),
                       ({"shape": "rounded_polygon"}, "rounded_polygon")]:
        assert geo.domain_from_spec(spec).kind == kind
    with pytest.raises(geo.GeometryError):
        geo.domain_from_spec({"shape": "torus"})
