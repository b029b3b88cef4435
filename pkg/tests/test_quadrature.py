import math

import numpy as np
import pytest

import anchors
from fracperim.errors import (
    DeltaTooLarge,
    MaxDepthExceeded,
    NonIntegrableDiagonal,
    QuadratureFailure,
    SeedRequired,
)
from fracperim.quadrature import (
    MCSpec,
    QuadratureSpec,
    edge_pair_integral,
    gauss_legendre,
    halfspace_cap_integral,
    integrate_adaptive,
    mc_double_volume,
    same_edge_pv_integral,
)
from fracperim.shapes import Interval1D, Polygon2D, load_named_shape


def unit_square():
    return Polygon2D([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


class TestSpecs:
    def test_defaults(self):
        spec = QuadratureSpec()
        assert spec.gauss_order == 16
        assert spec.max_depth == 30
        assert spec.split_radius_factor == 2.0

    def test_invariants(self):
        with pytest.raises(ValueError):
            QuadratureSpec(gauss_order=1)
        with pytest.raises(ValueError):
            QuadratureSpec(rel_tol=-1e-8)
        with pytest.raises(ValueError):
            MCSpec(samples=999, seed=1)

    def test_gauss_rule_exactness(self):
        # degree-(2n-1) exactness on [-1, 1]
        x, w = gauss_legendre(8)
        assert w.sum() == pytest.approx(2.0, abs=1e-14)
        for k in range(0, 16):
            exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
            assert np.sum(w * x ** k) == pytest.approx(exact, abs=1e-13)


class TestIntervalAdaptive:
    def test_inverse_sqrt(self):
        val, err = integrate_adaptive(lambda x: x ** -0.5, (0.0, 1.0))
        assert val == pytest.approx(2.0, abs=1e-8)
        assert err < 1e-6

    def test_log(self):
        val, err = integrate_adaptive(np.log, (0.0, 1.0))
        assert val == pytest.approx(-1.0, abs=1e-8)

    def test_smooth(self):
        val, _ = integrate_adaptive(np.sin, (0.0, math.pi))
        assert val == pytest.approx(2.0, abs=1e-12)

    def test_interior_singularity(self):
        val, _ = integrate_adaptive(lambda x: abs(x - 0.5) ** (-1.0 / 3.0),
                                    (0.0, 1.0))
        assert val == pytest.approx(3.0 * 0.5 ** (2.0 / 3.0), rel=1e-7)

    def test_nan_integrand_rejected(self):
        with pytest.raises(QuadratureFailure):
            integrate_adaptive(lambda x: np.full_like(x, np.nan), (0.0, 1.0))

    def test_max_depth_warns_not_raises(self):
        spec = QuadratureSpec(max_depth=2, rel_tol=1e-14)
        with pytest.warns(MaxDepthExceeded):
            val, err = integrate_adaptive(
                lambda x: np.abs(np.abs(x) - 0.3137) ** -0.5, (0.0, 1.0),
                spec)
        assert math.isfinite(val)
        assert err > 0

    def test_error_estimates_conservative(self):
        # battery with known antiderivatives; >= 95% of reported error
        # estimates must dominate the true error
        cases = [
            (lambda x, p=p: x ** p, (0.0, 1.0), 1.0 / (p + 1.0))
            for p in (-0.9, -0.5, -0.1, 0.5, 1.0, 2.0, 3.0, 4.0)
        ]
        cases += [
            (np.log, (0.0, 1.0), -1.0),
            (lambda x: x * np.log(x), (0.0, 1.0), -0.25),
            (lambda x: x ** -0.5 * np.log(1.0 / x), (0.0, 1.0), 4.0),
            (np.sin, (0.0, math.pi), 2.0),
            (np.exp, (0.0, 1.0), math.e - 1.0),
            (lambda x: 1.0 / (1.0 + x ** 2), (0.0, 1.0), math.pi / 4.0),
            (lambda x: np.sqrt(1.0 - np.minimum(x, 1.0) ** 2), (0.0, 1.0),
             math.pi / 4.0),
            (lambda x: np.cos(10.0 * x), (0.0, 1.0), math.sin(10.0) / 10.0),
            (lambda x: np.exp(-x), (0.0, 50.0), 1.0 - math.exp(-50.0)),
            (lambda x: abs(x - 0.5) ** (-1.0 / 3.0), (0.0, 1.0),
             3.0 * 0.5 ** (2.0 / 3.0)),
            (lambda x: 1.0 / np.sqrt(x * (1.0 - x) + 1e-300), (0.0, 1.0),
             math.pi),
            (lambda x: x ** 2.5, (0.0, 2.0), 2.0 ** 3.5 / 3.5),
        ]
        ok = 0
        for f, dom, truth in cases:
            val, est = integrate_adaptive(f, dom)
            if abs(val - truth) <= max(est, 1e-14):
                ok += 1
        assert ok / len(cases) >= 0.95


class TestTriangleAdaptive:
    def test_constant(self):
        tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        val, _ = integrate_adaptive(lambda x, y: np.ones_like(x), tri)
        assert val == pytest.approx(0.5, abs=1e-12)

    def test_linear(self):
        tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        val, _ = integrate_adaptive(lambda x, y: x, tri)
        assert val == pytest.approx(1.0 / 6.0, abs=1e-12)

    def test_inverse_radius_at_vertex(self):
        tri = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
        val, err = integrate_adaptive(
            lambda x, y: 1.0 / np.sqrt(x ** 2 + y ** 2), tri)
        assert val == pytest.approx(anchors.TRI_INV_R, rel=1e-6)


class TestHalfspaceCap:
    def test_paper_values(self):
        assert halfspace_cap_integral(2, 0.5, 1.0) == pytest.approx(
            anchors.CAP_D2_S05_R1, abs=1e-12)
        assert halfspace_cap_integral(3, 0.75, 1.0) == pytest.approx(
            anchors.CAP_D3_S075_R1, abs=1e-10)
        assert halfspace_cap_integral(2, 0.5, 4.0) == pytest.approx(
            anchors.CAP_D2_S05_R4, abs=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("s", [0.1, 0.5, 0.9, 0.99])
    @pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
    def test_quadrature_path_matches_closed_form(self, d, s, R):
        closed = halfspace_cap_integral(d, s, R)
        quad = halfspace_cap_integral(d, s, R, method="quadrature")
        assert quad == pytest.approx(closed, rel=1e-8)
        assert closed == pytest.approx(
            anchors.OMEGA[d - 1] * R ** (1.0 - s) / (1.0 - s), rel=1e-14)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            halfspace_cap_integral(2, 1.5, 1.0)
        with pytest.raises(ValueError):
            halfspace_cap_integral(0, 0.5, 1.0)
        with pytest.raises(ValueError):
            halfspace_cap_integral(2, 0.5, -1.0)


class TestSameEdgePV:
    def test_frozen_values(self):
        assert same_edge_pv_integral(1.0, 0.1) == pytest.approx(
            anchors.SAME_EDGE_L1_D01, abs=1e-13)
        assert same_edge_pv_integral(2.0, 0.1) == pytest.approx(
            anchors.SAME_EDGE_L2_D01, abs=1e-13)
        assert same_edge_pv_integral(1.0, 0.01) == pytest.approx(
            anchors.SAME_EDGE_L1_D001, abs=1e-13)

    def test_delta_equal_length_gives_zero(self):
        assert same_edge_pv_integral(1.0, 1.0) == pytest.approx(0.0,
                                                                abs=1e-14)

    def test_delta_too_large(self):
        with pytest.raises(DeltaTooLarge):
            same_edge_pv_integral(1.0, 1.5)

    def test_zero_delta_diverges(self):
        with pytest.raises(NonIntegrableDiagonal):
            same_edge_pv_integral(1.0, 0.0)

    def test_matches_quadrature(self):
        # brute double integral over {|u-v| > delta} inside [0,L]^2
        L, delta = 1.0, 0.1

        def outer(u):
            u = np.atleast_1d(u)
            out = np.zeros_like(u)
            for i, ui in enumerate(u):
                acc = 0.0
                if ui - delta > 0.0:
                    acc += math.log((ui) / delta)
                if ui + delta < L:
                    acc += math.log((L - ui) / delta)
                out[i] = acc
            return out

        val, _ = integrate_adaptive(outer, (0.0, L))
        assert same_edge_pv_integral(L, delta) == pytest.approx(val, rel=1e-9)

    @pytest.mark.parametrize("delta", [1e-2, 1e-4, 1e-6])
    def test_log_delta_structure(self, delta):
        # value + 2 L log(delta) - 2 delta must not depend on delta
        L = 1.7
        combo = (same_edge_pv_integral(L, delta)
                 + 2.0 * L * math.log(delta) - 2.0 * delta)
        assert combo == pytest.approx(
            2.0 * (L * math.log(L) - L), rel=1e-12)


class TestEdgePair:
    def test_orthogonal_normals_zero(self):
        a = ((0.0, 0.0), (1.0, 0.0))
        b = ((1.0, 0.0), (1.0, 1.0))
        val, _ = edge_pair_integral("nunu_inv_r", a, b)
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_opposed_parallel_sign_factorization(self):
        bottom = ((0.0, 0.0), (1.0, 0.0))
        top = ((1.0, 1.0), (0.0, 1.0))
        plain, _ = edge_pair_integral("inv_r", bottom, top)
        signed, _ = edge_pair_integral("nunu_inv_r", bottom, top)
        assert signed == pytest.approx(-plain, rel=1e-10)
        assert plain > 0

    def test_opposite_edges_closed_form(self):
        # int_0^1 int_0^1 (1 + (u-v)^2)^{-1/2} du dv
        # = 2 asinh(1) - 2 (sqrt(2) - 1)
        bottom = ((0.0, 0.0), (1.0, 0.0))
        top = ((1.0, 1.0), (0.0, 1.0))
        val, err = edge_pair_integral("inv_r", bottom, top)
        truth = 2.0 * math.asinh(1.0) - 2.0 * (math.sqrt(2.0) - 1.0)
        assert val == pytest.approx(truth, rel=1e-10)
        assert abs(val - truth) <= max(err, 1e-12)

    def test_shared_vertex_right_angle(self):
        # edges [0,1]x{0} and {0}x[0,1]:
        # int int (u^2+v^2)^{-1/2} = 2 asinh(1)
        a = ((0.0, 0.0), (1.0, 0.0))
        b = ((0.0, 0.0), (0.0, 1.0))
        val, _ = edge_pair_integral("inv_r", a, b)
        assert val == pytest.approx(2.0 * math.asinh(1.0), rel=1e-9)

    def test_same_edge_diverges(self):
        e = ((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(NonIntegrableDiagonal):
            edge_pair_integral("inv_r", e, e)
        with pytest.raises(NonIntegrableDiagonal):
            edge_pair_integral("nunu_inv_r", e, e)

    def test_same_edge_projection_kernel_vanishes(self):
        e = ((0.0, 0.0), (1.0, 0.0))
        val, err = edge_pair_integral("proj_inv_r", e, e)
        assert val == 0.0

    def test_unknown_kernel(self):
        a = ((0.0, 0.0), (1.0, 0.0))
        b = ((0.0, 1.0), (1.0, 1.0))
        with pytest.raises(ValueError):
            edge_pair_integral("no_such_kernel", a, b)


class TestMCDoubleVolume:
    def test_interval_anchor_3sigma(self):
        shape = Interval1D(0.0, 1.0)
        est, se = mc_double_volume(shape, 0.5,
                                   MCSpec(samples=200_000, seed=20240811))
        truth = anchors.PS_INTERVAL01[0.5]
        assert se > 0
        assert abs(est - truth) <= 3.0 * se
        # sanity: the estimate is actually informative
        assert se < 0.05 * truth

    def test_seed_required(self):
        with pytest.raises(SeedRequired):
            mc_double_volume(Interval1D(0.0, 1.0), 0.5,
                             MCSpec(samples=1000, seed=None))

    def test_deterministic(self):
        shape = unit_square()
        spec = MCSpec(samples=20_000, seed=77)
        a1 = mc_double_volume(shape, 0.5, spec)
        a2 = mc_double_volume(shape, 0.5, spec)
        assert a1 == a2

    def test_seed_changes_estimate(self):
        shape = Interval1D(0.0, 1.0)
        a = mc_double_volume(shape, 0.5, MCSpec(samples=5000, seed=1))
        b = mc_double_volume(shape, 0.5, MCSpec(samples=5000, seed=2))
        assert a != b

    def test_square_3sigma_against_frozen_quadrature(self):
        shape = load_named_shape("square")
        est, se = mc_double_volume(shape, 0.5,
                                   MCSpec(samples=200_000, seed=31415))
        truth = anchors.PS_SQUARE[0.5]
        assert abs(est - truth) <= 3.0 * se
        assert se < 0.05 * truth

    def test_stderr_scaling_slope(self):
        # doubling the sample count should shrink the standard error like
        # N^{-1/2}: regression slope -0.5 +/- 0.1 on log-log
        shape = Interval1D(0.0, 1.0)
        counts = [16000, 64000, 256000, 1024000]
        ses = []
        for n in counts:
            _, se = mc_double_volume(shape, 0.3,
                                     MCSpec(samples=n, seed=999))
            ses.append(se)
        slope = np.polyfit(np.log(counts), np.log(ses), 1)[0]
        assert -0.6 <= slope <= -0.4
