import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmfund.numerics import (L_log_lower, L_log_upper, from_L, gauss_2f1, log_diff_exp,
                             log_ndtr, log_sum_exp, norm_cdf_inv_L, norm_cdf_L, to_L)

mpmath.mp.dps = 40


def mp_L_phi(z):
    u = mpmath.ncdf(z)
    if u <= 0.5:
        return float(mpmath.log(2 * u))
    return float(-mpmath.log(2 * mpmath.ncdf(-z)))


class TestLogArithmetic:
    def test_log_sum_exp_examples(self):
        assert log_sum_exp(0.0, -np.inf) == 0.0
        assert log_sum_exp(0.0, 0.0) == pytest.approx(math.log(2.0), rel=1e-15)
        assert log_sum_exp(1000.0, 1000.0) == pytest.approx(1000.0 + math.log(2.0), rel=1e-15)
        assert log_sum_exp(-np.inf, -np.inf) == -np.inf

    def test_log_diff_exp_examples(self):
        assert log_diff_exp(math.log(2.0), 0.0) == pytest.approx(0.0, abs=1e-15)
        assert log_diff_exp(3.0, 3.0) == -np.inf
        assert log_diff_exp(5.0, -np.inf) == 5.0
        with pytest.raises(ValueError):
            log_diff_exp(0.0, 1.0)

    @given(st.floats(-700, 700), st.floats(-700, 700))
    def test_log_sum_exp_matches_mpmath(self, a, b):
        ref = mpmath.log(mpmath.exp(a) + mpmath.exp(b))
        assert log_sum_exp(a, b) == pytest.approx(float(ref), rel=1e-14, abs=1e-14)

    @given(st.floats(-700, 700), st.floats(1e-12, 50))
    def test_log_diff_exp_matches_mpmath(self, a, gap):
        b = a - gap
        if b == a:
            return
        ref = mpmath.log(mpmath.exp(a) - mpmath.exp(mpmath.mpf(b)))
        assert log_diff_exp(a, b) == pytest.approx(float(ref), rel=1e-9, abs=1e-12)


class TestNormalL:
    def test_zero_and_ends(self):
        assert norm_cdf_L(0.0) == 0.0
        assert norm_cdf_L(-np.inf) == -np.inf
        assert norm_cdf_L(np.inf) == np.inf

    def test_deep_tail(self):
        ref = math.log(2.0) + float(mpmath.log(mpmath.ncdf(-40)))
        assert norm_cdf_L(-40.0) == pytest.approx(ref, rel=1e-13)
        assert norm_cdf_L(40.0) == pytest.approx(-ref, rel=1e-13)

    @pytest.mark.parametrize("z", [-300.0, -38.0, -9.0, -5.0, -4.99, -1.0, -1e-8, 0.3, 6.0, 37.0])
    def test_matches_mpmath(self, z):
        assert norm_cdf_L(z) == pytest.approx(mp_L_phi(z), rel=1e-13, abs=1e-300)

    def test_log_ndtr_matches_mpmath(self):
        for z in (-50.0, -6.0, -1.0, 0.0, 2.0, 8.0, 20.0, 36.0, 40.0):
            ref = float(mpmath.log(mpmath.ncdf(z)) if z <= 0 else mpmath.log1p(-mpmath.ncdf(-z)))
            assert log_ndtr(z) == pytest.approx(ref, rel=1e-12, abs=1e-300)

    def test_vectorised(self):
        z = np.linspace(-40, 40, 81)
        out = norm_cdf_L(z)
        assert out.shape == z.shape
        assert np.all(np.diff(out) > 0)

    @given(st.floats(-40, 40))
    def test_antisymmetric(self, z):
        assert norm_cdf_L(-z) == -norm_cdf_L(z)

    def test_inverse_examples(self):
        assert norm_cdf_inv_L(0.0) == 0.0
        assert norm_cdf_inv_L(to_L(0.975)) == pytest.approx(1.959963984540054, rel=1e-9)
        assert norm_cdf_inv_L(-np.inf) == -np.inf

    @given(st.floats(-30, 30))
    def test_inverse_round_trip(self, z):
        assert norm_cdf_inv_L(norm_cdf_L(z)) == pytest.approx(z, abs=1e-9)

    def test_inverse_far_tail(self):
        # log Phi below the double range of Phi itself
        z = -45.0
        assert norm_cdf_inv_L(norm_cdf_L(z)) == pytest.approx(z, rel=1e-12)


class TestLEncoding:
    @given(st.floats(0.0, 1.0))
    def test_round_trip(self, u):
        # relative error grows like |log u| eps in the lower tail
        assert from_L(to_L(u)) == pytest.approx(u, rel=1e-12, abs=1e-300)

    def test_tail_logs(self):
        assert L_log_lower(to_L(1e-200)) == pytest.approx(math.log(1e-200), rel=1e-14)
        assert L_log_upper(-to_L(1e-200)) == pytest.approx(math.log(1e-200), rel=1e-14)
        assert L_log_lower(to_L(0.8)) == pytest.approx(math.log(0.8), rel=1e-14)
        assert L_log_upper(to_L(0.3)) == pytest.approx(math.log(0.7), rel=1e-14)

    def test_rejects_outside_unit_interval(self):
        with pytest.raises(ValueError):
            to_L(1.5)


class TestHypergeometric:
    def test_examples(self):
        assert gauss_2f1(1.0, 1.0, 2.0, 0.0) == 1.0
        # 2F1(1,1;2;z) = -log(1-z)/z
        assert gauss_2f1(1.0, 1.0, 2.0, 0.5) == pytest.approx(2 * math.log(2.0), rel=1e-14)

    def test_series_example(self):
        z = 0.5
        ref = mpmath.nsum(lambda n: mpmath.rf(2, n) ** 2 / (mpmath.rf(3, n) * mpmath.factorial(n))
                          * mpmath.mpf(z) ** n, [0, mpmath.inf])
        assert gauss_2f1(2.0, 2.0, 3.0, z) == pytest.approx(float(ref), rel=1e-12)

    @pytest.mark.parametrize("z", [1.0, 1.5, -0.1])
    def test_domain(self, z):
        with pytest.raises(ValueError):
            gauss_2f1(1.0, 1.0, 2.0, z)

    @pytest.mark.parametrize("k", [0.3, 0.5, 0.7, 0.9])
    def test_mattress_family_near_one(self, k):
        # the family 2F1(1/k, 1/k; 1+1/k; z) appears in the closed-form wealth
        a = 1.0 / k
        for z in (0.6, 0.9, 0.99, 0.999):
            ref = float(mpmath.hyp2f1(a, a, 1 + a, z))
            assert gauss_2f1(a, a, 1 + a, z) == pytest.approx(ref, rel=1e-8)
