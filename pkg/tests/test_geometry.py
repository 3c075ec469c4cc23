import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatlab.geometry import (
    Ball,
    Domain,
    EccentricAnnulus,
    Ellipse,
    ObstacleDomain,
    Reflection,
    RegionLabel,
    ball_domain,
    boundary_distance,
    classify,
    contains,
    domain_from_dict,
    rectangle_domain,
    reflect,
)

coords = st.floats(-2, 2, allow_nan=False)


class TestContains:
    def test_annulus_gap_point(self):
        assert contains(EccentricAnnulus(0.25, 1, 0), (0.5, 0))

    def test_inside_obstacle(self):
        assert not contains(EccentricAnnulus(0.25, 1, 0), (0.1, 0))

    def test_boundary_not_in_open_set(self):
        assert not contains(ball_domain(), (1.0, 0.0))

    def test_obstacle_boundary_excluded(self):
        assert not contains(EccentricAnnulus(0.25, 1, 0), (0.25, 0.0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            contains(ball_domain(), (0.1, 0.1, 0.1))


class TestBoundaryDistance:
    def test_center_of_disk(self):
        assert boundary_distance(ball_domain(), (0.0, 0.0)) == pytest.approx(1.0, abs=1e-15)

    def test_concentric(self):
        assert boundary_distance(EccentricAnnulus(0.25, 1, 0), (0.6, 0)) == pytest.approx(0.35, abs=1e-14)

    def test_eccentric(self):
        assert boundary_distance(EccentricAnnulus(0.25, 1, 0.3), (0.7, 0)) == pytest.approx(0.15, abs=1e-14)

    def test_outside_raises(self):
        with pytest.raises(ValueError):
            boundary_distance(ball_domain(), (2.0, 0.0))

    def test_against_dense_boundary_sampling(self):
        dom = EccentricAnnulus(0.25, 1, 0.3)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(400, 2))
        pts = pts[dom.contains(pts)]
        th = np.linspace(0, 2 * np.pi, 200_000, endpoint=False)
        ring = np.r_[np.c_[np.cos(th), np.sin(th)], np.c_[0.3 + 0.25 * np.cos(th), 0.25 * np.sin(th)]]
        for p in pts[:60]:
            brute = np.min(np.linalg.norm(ring - p, axis=1))
            assert abs(brute - dom.boundary_distance(p)) < 1e-6

    def test_ellipse_obstacle_distance(self):
        dom = ObstacleDomain(Ball((0.0, 0.0), 1.0), Ellipse((0.0, 0.0), 0.3, 0.15), eps=0.1)
        th = np.linspace(0, 2 * np.pi, 400_000, endpoint=False)
        e = np.c_[0.1 + 0.3 * np.cos(th), 0.15 * np.sin(th)]
        for p in [(0.5, 0.2), (-0.4, -0.1), (0.1, 0.3)]:
            brute = min(np.min(np.linalg.norm(e - p, axis=1)), 1 - np.linalg.norm(p))
            assert dom.boundary_distance(p) == pytest.approx(brute, abs=1e-6)


class TestReflect:
    def test_vertical_plane(self):
        r = Reflection((1.0, 0.0), 0.0)
        assert np.allclose(reflect(r, (0.4, 0.3)), (-0.4, 0.3))

    def test_fixed_point_on_plane(self):
        r = Reflection((1.0, 0.0), 0.3)
        assert np.allclose(reflect(r, (0.3, 0.7)), (0.3, 0.7))

    def test_non_unit_normal_rejected(self):
        with pytest.raises(ValueError):
            Reflection((1.0, 1.0), 0.0)

    @given(st.tuples(coords, coords), st.floats(0, 2 * math.pi), st.floats(-1, 1))
    @settings(max_examples=200, deadline=None)
    def test_involution(self, x, angle, off):
        r = Reflection((math.cos(angle), math.sin(angle)), off)
        assert np.allclose(reflect(r, reflect(r, x)), x, atol=1e-12)

    @given(st.tuples(coords, coords), st.tuples(coords, coords), st.floats(0, 2 * math.pi), st.floats(-1, 1))
    @settings(max_examples=200, deadline=None)
    def test_isometry(self, x, y, angle, off):
        r = Reflection((math.cos(angle), math.sin(angle)), off)
        a = np.linalg.norm(np.subtract(x, y))
        b = np.linalg.norm(reflect(r, x) - reflect(r, y))
        assert a == pytest.approx(b, abs=1e-12)


class TestClassify:
    dom = EccentricAnnulus(0.25, 1, 0.3)

    def test_right_of_obstacle(self):
        assert classify(self.dom, (0.65, 0.0)) == RegionLabel.OMEGA_PLUS

    def test_mirror_of_plus_is_minus(self):
        assert classify(self.dom, (2 * 0.3 - 0.65, 0.0)) == RegionLabel.OMEGA_MINUS

    def test_far_left_is_minus_minus(self):
        x = np.array([-0.9, 0.0])
        assert classify(self.dom, x) == RegionLabel.OMEGA_MINUS_MINUS
        # brute force: the mirror image leaves the outer disk
        assert np.linalg.norm(self.dom.reflection(x)) > 1

    def test_on_plane(self):
        assert classify(self.dom, (0.3, 0.6)) == RegionLabel.INTERFACE_H

    def test_partition_and_mirror_consistency(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(20_000, 2))
        pts = pts[self.dom.contains(pts)]
        lab = classify(self.dom, pts)
        assert set(np.unique(lab)) <= {0, 1, 2, 3}
        plus = pts[lab == RegionLabel.OMEGA_PLUS]
        assert np.all(classify(self.dom, self.dom.reflection(plus)) == RegionLabel.OMEGA_MINUS)
        assert np.any(lab == RegionLabel.OMEGA_MINUS_MINUS)

    def test_concentric_has_no_minus_minus(self):
        dom = EccentricAnnulus(0.25, 1, 0.0)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1, 1, size=(20_000, 2))
        pts = pts[dom.contains(pts)]
        assert not np.any(classify(dom, pts) == RegionLabel.OMEGA_MINUS_MINUS)

    def test_boundary_point_is_exterior(self):
        assert classify(self.dom, (1.0, 0.0)) == RegionLabel.EXTERIOR

    def test_outside_closure_raises(self):
        with pytest.raises(ValueError):
            classify(self.dom, (1.5, 0.0))

    def test_requires_reflection(self):
        with pytest.raises(ValueError):
            classify(ball_domain(), (0.0, 0.0))


class TestDomains:
    @pytest.mark.parametrize("r1,r2,s", [(0.0, 1, 0), (1, 0.5, 0), (0.25, 1, 0.75), (0.25, 1, -0.1)])
    def test_annulus_validation(self, r1, r2, s):
        with pytest.raises(ValueError):
            EccentricAnnulus(r1, r2, s)

    def test_volume_independent_of_s(self):
        v = [EccentricAnnulus(0.25, 1, s).volume for s in (0, 0.3, 0.6)]
        assert np.allclose(v, math.pi * (1 - 0.0625), rtol=1e-15)

    def test_reflection_through_obstacle_center(self):
        d = EccentricAnnulus(0.25, 1, 0.3, V=(0.0, 1.0))
        assert d.reflection.normal == (0.0, 1.0) and d.reflection.offset == pytest.approx(0.3)

    def test_obstacle_must_fit(self):
        with pytest.raises(ValueError):
            Domain(Ball((0.0, 0.0), 1.0), Ball((0.9, 0.0), 0.2))

    def test_round_trip(self):
        for d in (EccentricAnnulus(0.25, 1, 0.3), ball_domain(), rectangle_domain((0, 0), (1, 2)),
                  ObstacleDomain(Ball((0.0, 0.0), 1.0), Ellipse((0.0, 0.0), 0.3, 0.15), 0.1)):
            e = domain_from_dict(d.to_dict())
            assert e.to_dict() == d.to_dict()

    def test_ellipse_symmetric_about_its_reflection(self):
        dom = ObstacleDomain(Ball((0.0, 0.0), 1.0), Ellipse((0.0, 0.0), 0.3, 0.15), 0.1)
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, size=(5000, 2))
        inside = dom.obstacle.inside(pts)
        mirrored = dom.obstacle.inside(dom.reflection(pts))
        assert np.array_equal(inside, mirrored)

    def test_exact_box_area_of_disk(self):
        d = ball_domain()
        g = np.linspace(-1, 1, 41)
        lo = np.array([(a, b) for a in g[:-1] for b in g[:-1]])
        hi = lo + (g[1] - g[0])
        assert d.box_area(lo, hi).sum() == pytest.approx(math.pi, rel=1e-12)
