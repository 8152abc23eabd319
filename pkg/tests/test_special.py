import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cctlab.special import (cauchy_quantile, cauchy_tail, cauchy_tail_upper_bound,
                            gumbel_quantile, mills_tail_bounds, norm_cdf, norm_pdf,
                            norm_quantile, norm_sf, normal_quantile_sandwich,
                            quantile_expansion)

mpmath.mp.dps = 40


def mp_norm_cdf(x):
    return float(mpmath.ncdf(x))


class TestNormal:
    def test_center_and_saturation(self):
        assert norm_cdf(0.0) == 0.5
        assert abs(norm_cdf(40.0) - 1.0) <= 1e-15

    def test_table_value(self):
        assert abs(norm_cdf(1.959964) - 0.975) < 1e-6

    @pytest.mark.parametrize("x", np.linspace(-8, 8, 33))
    def test_absolute_accuracy_core(self, x):
        assert abs(norm_cdf(x) - mp_norm_cdf(x)) <= 1e-15

    @pytest.mark.parametrize("x", [-10.0, -20.0, -30.0, -37.5])
    def test_relative_accuracy_tail(self, x):
        ref = mp_norm_cdf(x)
        assert abs(norm_cdf(x) - ref) <= 1e-12 * ref
        assert abs(norm_sf(-x) - ref) <= 1e-12 * ref

    @given(st.floats(-30, 30))
    def test_symmetry(self, x):
        assert abs(norm_cdf(-x) - (1.0 - norm_cdf(x))) <= 1e-15

    def test_quantile_values(self):
        assert norm_quantile(0.5) == 0.0
        assert abs(norm_quantile(0.975) - 1.959964) < 1e-6
        assert abs(norm_quantile(norm_cdf(2.5)) - 2.5) < 1e-10

    @given(st.floats(1e-300, 1 - 1e-16))
    def test_quantile_roundtrip(self, p):
        assert abs(norm_cdf(norm_quantile(p)) - p) <= 1e-12 * max(p, 1e-3)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
    def test_quantile_domain(self, p):
        with pytest.raises(ValueError):
            norm_quantile(p)

    def test_vectorized(self):
        x = np.array([-1.0, 0.0, 1.0])
        out = norm_cdf(x)
        assert isinstance(out, np.ndarray) and out.shape == (3,)
        assert isinstance(norm_pdf(0.0), float)


class TestCauchy:
    def test_values(self):
        assert cauchy_tail(0.0) == 0.5
        assert abs(cauchy_tail(1.0) - 0.25) < 1e-16
        ref = float(mpmath.atan(mpmath.mpf("0.001")) / mpmath.pi)
        assert abs(cauchy_tail(1000.0) - ref) < 1e-15
        assert abs(cauchy_tail(1000.0) - 3.1831e-4) < 1e-8

    def test_huge_t_keeps_relative_precision(self):
        for t in (1e8, 1e12, 1e100, 1e300):
            ref = float(mpmath.atan(1 / mpmath.mpf(t)) / mpmath.pi)
            assert abs(cauchy_tail(t) - ref) <= 1e-15 * ref

    def test_strictly_decreasing(self):
        t = np.concatenate([-np.logspace(6, -3, 50), [0.0], np.logspace(-3, 6, 50)])
        assert np.all(np.diff(cauchy_tail(t)) < 0)

    def test_branch_seam(self):
        lo, hi = cauchy_tail(np.nextafter(1.0, 0.0)), cauchy_tail(np.nextafter(1.0, 2.0))
        assert abs(lo - hi) < 1e-15

    def test_quantile_values(self):
        assert abs(cauchy_quantile(0.5)) < 1e-16
        assert abs(cauchy_quantile(0.75) - 1.0) < 1e-15
        assert abs(cauchy_quantile(0.95) - 6.314) < 5e-4

    @pytest.mark.parametrize("alpha", [0.5, 0.1, 0.05, 1e-3, 1e-6, 1e-12])
    def test_quantile_inverts_tail(self, alpha):
        assert abs(cauchy_tail(cauchy_quantile(1.0 - alpha)) - alpha) <= 1e-12

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_exact_inverses(self, level):
        assert abs(cauchy_tail(cauchy_quantile(level)) - (1.0 - level)) <= 1e-10

    @pytest.mark.parametrize("level", [0.0, 1.0])
    def test_quantile_domain(self, level):
        with pytest.raises(ValueError):
            cauchy_quantile(level)


class TestGumbel:
    def test_values(self):
        assert abs(gumbel_quantile(math.exp(-1.0))) < 1e-15
        assert abs(gumbel_quantile(0.95) - 2.9702) < 1e-4
        assert abs(gumbel_quantile(0.5) - 0.36651) < 1e-5

    def test_bisection_oracle(self):
        target = 0.95
        root = mpmath.findroot(lambda q: mpmath.exp(-mpmath.exp(-q)) - target, (0, 10),
                               solver="bisect")
        assert abs(gumbel_quantile(target) - float(root)) < 1e-12

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_cdf_roundtrip(self, level):
        q = gumbel_quantile(level)
        assert abs(math.exp(-math.exp(-q)) - level) <= 1e-12

    @pytest.mark.parametrize("level", [0.0, 1.0])
    def test_domain(self, level):
        with pytest.raises(ValueError):
            gumbel_quantile(level)


class TestQuantileExpansion:
    def test_leading_term(self):
        ex = quantile_expansion(1.0, math.exp(8.0))
        assert abs(ex.leading - 4.0) < 1e-12
        assert ex.error_order == pytest.approx(1 / 8.0)

    def test_against_quantile_oracle(self):
        ex = quantile_expansion(1.0, 10**6)
        assert abs(ex.value - norm_quantile(1 - 1e-6)) <= ex.error_order

    def test_a_term(self):
        m = 10**6
        d = quantile_expansion(1.0, m).value - quantile_expansion(2.0, m).value
        assert abs(d - math.log(2.0) / math.sqrt(2 * math.log(m))) < 1e-14

    @pytest.mark.parametrize("m", [10**3, 10**4, 10**6])
    def test_error_within_two_over_log_m(self, m):
        ex = quantile_expansion(1.0, m)
        ref = float(mpmath.sqrt(2) * mpmath.erfinv(1 - 2 * mpmath.mpf(1) / m))
        assert abs(ex.value - ref) <= 2.0 / math.log(m)

    @pytest.mark.parametrize("a,m", [(0.0, 10), (-1.0, 10), (1.0, 1), (5.0, 10)])
    def test_domain(self, a, m):
        with pytest.raises(ValueError):
            quantile_expansion(a, m)


class TestAnalyticBounds:
    def test_cauchy_tail_bound(self):
        t = np.logspace(0, 6, 61)[1:]
        tail = cauchy_tail(t)
        assert np.all(tail > 0) and np.all(tail < cauchy_tail_upper_bound(t))

    def test_quantile_sandwich(self):
        y = np.logspace(-12, -2, 41)
        lo, hi = normal_quantile_sandwich(y)
        q = norm_quantile(1 - y)
        assert np.all(lo <= q) and np.all(q <= hi)

    def test_central_quantile_slope(self):
        y = np.logspace(-9, -3.01, 30)
        q = norm_quantile(0.5 + y)
        assert np.all(q <= math.pi * y)
        assert abs(norm_quantile(0.5 + 1e-9) / 1e-9 - math.sqrt(2 * math.pi)) < 1e-3

    @pytest.mark.parametrize("x", np.linspace(1.0, 8.0, 15))
    def test_mills_sandwich(self, x):
        lo, hi = mills_tail_bounds(x)
        assert lo < norm_sf(x) < hi
        # Phi^{-1}(1 - y) as -Phi^{-1}(y): 1 - y rounds away the tail near x = 8
        assert -norm_quantile(hi) <= x <= -norm_quantile(lo)
