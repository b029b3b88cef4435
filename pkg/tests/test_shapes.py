import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import anchors
from fracperim import shapes
from fracperim.errors import (
    DegenerateEdge,
    NonPositiveLambda,
    SelfIntersecting,
    WrongOrientation,
    ZeroSpeedNode,
)
from fracperim.shapes import (
    BallShape,
    Interval1D,
    Polygon2D,
    SmoothCurve2D,
    classical_perimeter,
    curvature,
    diameter,
    measure,
    rescale,
    shape_from_json,
    shape_to_json,
    validate,
)


def unit_square():
    return Polygon2D([(0, 0), (1, 0), (1, 1), (0, 1)])


def circle_curve(r=1.0, panels=64):
    return SmoothCurve2D(cos_x=[0.0, r], sin_x=[], cos_y=[0.0], sin_y=[r],
                         panels=panels)


def ellipse_curve():
    return SmoothCurve2D(cos_x=[0.0, 2.0], sin_x=[], cos_y=[0.0], sin_y=[1.0],
                         panels=64)


class TestValidate:
    def test_square_normals(self):
        sq = validate(unit_square())
        assert sq.n_edges == 4
        expected = [(0, -1), (1, 0), (0, 1), (-1, 0)]
        assert np.allclose(sq.edge_normals, expected, atol=1e-14)

    def test_bowtie_rejected(self):
        with pytest.raises(SelfIntersecting):
            Polygon2D([(0, 0), (1, 1), (1, 0), (0, 1)])

    def test_clockwise_auto_fixed(self):
        with pytest.warns(WrongOrientation):
            sq = Polygon2D([(0, 0), (0, 1), (1, 1), (1, 0)])
        assert sq.signed_area > 0
        assert np.allclose(sorted(map(tuple, sq.vertices_array.tolist())),
                           sorted([(0, 0), (1, 0), (1, 1), (0, 1)]))

    def test_zero_length_edge(self):
        with pytest.raises(DegenerateEdge):
            Polygon2D([(0, 0), (1, 0), (1, 0), (0, 1)])

    def test_interval_needs_order(self):
        with pytest.raises(ValueError):
            Interval1D(1.0, 0.0)

    def test_curve_zero_speed(self):
        # x(t) = cos 2t, y(t) = sin 2t has speed 2 everywhere -- fine;
        # a degenerate point parametrization must be rejected
        with pytest.raises(ZeroSpeedNode):
            SmoothCurve2D(cos_x=[0.0], sin_x=[], cos_y=[0.0], sin_y=[],
                          panels=16)

    def test_curve_self_intersection(self):
        # figure-eight: x = sin 2t, y = sin t
        with pytest.raises(SelfIntersecting):
            SmoothCurve2D(cos_x=[0.0], sin_x=[0.0, 1.0], cos_y=[0.0],
                          sin_y=[1.0], panels=32)


class TestMeasures:
    def test_unit_square(self):
        sq = unit_square()
        assert measure(sq) == pytest.approx(1.0, abs=1e-14)
        assert classical_perimeter(sq) == pytest.approx(4.0, abs=1e-14)
        assert diameter(sq) == pytest.approx(math.sqrt(2), abs=1e-14)

    def test_interval(self):
        iv = Interval1D(0.0, 1.0)
        assert measure(iv) == 1.0
        assert classical_perimeter(iv) == 2.0   # counting measure on the boundary
        assert diameter(iv) == 1.0

    def test_circle_perimeter(self):
        c = circle_curve()
        assert classical_perimeter(c) == pytest.approx(2 * math.pi, abs=1e-10)

    def test_ellipse_perimeter(self):
        e = ellipse_curve()
        assert classical_perimeter(e) == pytest.approx(anchors.ELLIPSE_PERIMETER,
                                                       abs=1e-9)

    def test_ball(self):
        b = BallShape(dim=2, radius=1.0, center=(0.0, 0.0))
        assert measure(b) == pytest.approx(math.pi)
        assert classical_perimeter(b) == pytest.approx(2 * math.pi)
        assert diameter(b) == 2.0

    def test_curve_diameter_is_safe_upper_bound(self):
        c = circle_curve()
        d = diameter(c)
        assert 2.0 <= d <= 2.0 * 1.011


class TestRescale:
    def test_square_doubled(self):
        big = rescale(unit_square(), 2.0)
        assert classical_perimeter(big) == pytest.approx(8.0)
        assert measure(big) == pytest.approx(4.0)

    def test_interval(self):
        iv = rescale(Interval1D(0.0, 1.0), 3.0)
        assert (iv.a, iv.b) == (0.0, 3.0)

    def test_circle_half(self):
        c = rescale(circle_curve(), 0.5)
        assert diameter(c) == pytest.approx(1.0, rel=1.2e-2)
        assert classical_perimeter(c) == pytest.approx(math.pi, abs=1e-10)

    def test_nonpositive_rejected(self):
        with pytest.raises(NonPositiveLambda):
            rescale(unit_square(), 0.0)

    @given(lam=st.floats(min_value=0.05, max_value=20.0,
                         allow_nan=False, allow_infinity=False))
    @settings(max_examples=40, deadline=None)
    def test_roundtrip(self, lam):
        sq = unit_square()
        back = rescale(rescale(sq, lam), 1.0 / lam)
        assert np.allclose(back.vertices_array, sq.vertices_array, atol=1e-12)


class TestNormalsAndCurvature:
    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
                    min_size=3, max_size=9))
    @settings(max_examples=60, deadline=None)
    def test_normals_integrate_to_zero(self, pts):
        try:
            poly = Polygon2D(pts)
        except Exception:
            return  # invalid random polygon: not the property under test
        total = (poly.edge_normals * poly.edge_lengths[:, None]).sum(axis=0)
        assert np.linalg.norm(total) < 1e-12 * max(1.0, poly.edge_lengths.sum())

    def test_circle_curvature(self):
        c = circle_curve(r=2.0)
        for t in (0.0, 0.7, 3.1):
            assert curvature(c, t) == pytest.approx(0.5, abs=1e-12)

    def test_ellipse_curvature_t0(self):
        assert curvature(ellipse_curve(), 0.0) == pytest.approx(
            anchors.ELLIPSE_CURVATURE_T0, abs=1e-12)

    def test_doubly_covered_circle_rejected(self):
        # (cos 2t, sin 2t) walks the circle twice: every point duplicated
        with pytest.raises(SelfIntersecting):
            SmoothCurve2D(cos_x=[0.0, 0.0, 1.0], sin_x=[], cos_y=[0.0],
                          sin_y=[0.0, 1.0], panels=32)

    def test_phase_shifted_circle_curvature(self):
        # same circle, parameter shifted by 0.7: curvature must not care
        phi = 0.7
        c = SmoothCurve2D(cos_x=[0.0, math.cos(phi)],
                          sin_x=[-math.sin(phi)],
                          cos_y=[0.0, math.sin(phi)],
                          sin_y=[math.cos(phi)], panels=32)
        assert curvature(c, 0.3) == pytest.approx(1.0, abs=1e-12)

    def test_curvature_matches_tangent_angle_differences(self):
        e = ellipse_curve()
        h = 1e-5
        for t in np.linspace(0.1, 2 * math.pi, 7):
            tx0, ty0 = e.tangent(t - h)
            tx1, ty1 = e.tangent(t + h)
            dphi = math.atan2(tx0 * ty1 - ty0 * tx1, tx0 * tx1 + ty0 * ty1)
            kappa_fd = dphi / (2 * h) / e.speed(t)
            assert curvature(e, t) == pytest.approx(kappa_fd, abs=1e-6)


class TestMembershipAndConvexity:
    def test_point_in_polygon(self):
        sq = unit_square()
        pts = np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2], [0.99, 0.01]])
        assert list(shapes.contains(sq, pts)) == [True, False, False, True]

    def test_point_in_curve(self):
        c = circle_curve()
        pts = np.array([[0.0, 0.0], [0.9, 0.0], [1.1, 0.0], [0.8, 0.8]])
        assert list(shapes.contains(c, pts)) == [True, True, False, False]

    def test_area_matches_rejection_sampling(self):
        # shoelace vs Monte Carlo rejection count, 3 sigma
        poly = Polygon2D([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])
        rng = np.random.default_rng(1234)
        n = 200_000
        lo = poly.vertices_array.min(axis=0)
        hi = poly.vertices_array.max(axis=0)
        pts = rng.uniform(lo, hi, size=(n, 2))
        hits = shapes.contains(poly, pts).mean()
        box = np.prod(hi - lo)
        est = hits * box
        sigma = box * math.sqrt(hits * (1 - hits) / n)
        assert abs(est - measure(poly)) < 3 * sigma

    def test_convexity_flags(self):
        assert shapes.is_convex(unit_square())
        lshape = Polygon2D([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])
        assert not shapes.is_convex(lshape)
        assert shapes.is_convex(circle_curve())


class TestJsonIO:
    @pytest.mark.parametrize("shape", [
        Interval1D(0.0, 1.0),
        Polygon2D([(0, 0), (1, 0), (1, 1), (0, 1)]),
        SmoothCurve2D(cos_x=[0.0, 2.0], sin_x=[], cos_y=[0.0], sin_y=[1.0],
                      panels=48),
        BallShape(dim=2, radius=1.5, center=(0.25, -1.0)),
    ])
    def test_roundtrip(self, shape):
        blob = json.dumps(shape_to_json(shape))
        back = shape_from_json(json.loads(blob))
        assert type(back) is type(shape)
        assert measure(back) == pytest.approx(measure(shape), rel=1e-14)
        assert classical_perimeter(back) == pytest.approx(
            classical_perimeter(shape), rel=1e-14)

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            shape_from_json({"type": "torus"})

    def test_packaged_shapes_load(self):
        for name in ("interval01", "square", "rect2x1", "lshape",
                     "circle", "ellipse", "ball1"):
            s = shapes.load_named_shape(name)
            assert measure(s) > 0
