import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from kmfund.model import (FundMode, MarketParams, MortalityModel, PowerUtility,
                          builtin_mortality, gompertz_makeham_rates, mortality_exponential,
                          mortality_from_csv)


def write_csv(path, rows):
    path.write_text("age,rate\n" + "".join(f"{a},{q}\n" for a, q in rows), encoding="utf-8")
    return path


class TestMarket:
    def test_M(self):
        m = MarketParams(0.05, 0.15, 0.02, 0.02)
        assert m.M == pytest.approx(0.03 * math.sqrt(0.02) / 0.15, rel=1e-15)
        assert MarketParams(0.02, 0.15, 0.02, 1.0).M == 0.0
        assert MarketParams(0.0, 0.15, 0.02, 1.0).favourable_sign == -1.0

    @pytest.mark.parametrize("sigma,dt", [(0.0, 1.0), (-0.1, 1.0), (0.2, 0.0)])
    def test_rejects(self, sigma, dt):
        with pytest.raises(ValueError):
            MarketParams(0.05, sigma, 0.02, dt)

    def test_modes(self):
        assert FundMode.parse("individual").C == 0
        assert FundMode.parse("Collective").C == 1
        with pytest.raises(ValueError):
            FundMode.parse("hybrid")


class TestUtility:
    def test_examples(self):
        assert PowerUtility(-0.1, -2.0)(1.0) == pytest.approx(-0.1)
        assert PowerUtility(0.05, 0.5, 0.0, -0.01)(4.0) == pytest.approx(0.09)
        assert PowerUtility(-0.1, -2.0)(0.0) == -np.inf
        assert PowerUtility(-0.1, -2.0)(1e-200) < -1e300

    def test_gamma_min(self):
        assert PowerUtility(-0.1, -2.0).gamma_min == 0.0
        assert PowerUtility(1.0, 0.5, 5.0).gamma_min == 5.0
        assert PowerUtility(1.0, 0.5, -1.0).gamma_min == 0.0
        assert PowerUtility(1.0, 0.5, -1.0)(-0.5) == -np.inf

    @pytest.mark.parametrize("a,n", [(1.0, 1.5), (-1.0, 0.5), (1.0, -2.0), (0.0, 0.5)])
    def test_rejects_non_concave(self, a, n):
        with pytest.raises(ValueError):
            PowerUtility(a, n)

    def test_u_tilde_examples(self):
        assert PowerUtility(1.0, 0.5).u_tilde(math.log(0.5)) == pytest.approx(0.0, abs=1e-15)
        assert PowerUtility(-0.1, -2.0).u_tilde(math.log(0.2)) == pytest.approx(0.0, abs=1e-15)
        assert PowerUtility(1.0, 0.5).u_tilde(-700.0) > 1000.0

    @pytest.mark.parametrize("u", [PowerUtility(1.0, 0.5), PowerUtility(-0.1, -2.0),
                                   PowerUtility(2.0, 0.3, 1.5), PowerUtility(0.4, 0.7, -0.8, 1.0),
                                   PowerUtility(-3.0, -0.5, 0.2)])
    def test_dagger_inverts_derivative(self, u):
        # brute-force inverse of u' on the domain, against exp(u_tilde(log p))
        for logp in np.linspace(-6, 6, 25):
            p = math.exp(logp)
            lo = u.gamma_min
            if u.derivative(lo + 1e-300) <= p and lo > 0:
                assert u.dagger(p) == pytest.approx(lo, rel=1e-9)
                continue
            if u.x0 < 0 and u.derivative(0.0) <= p:
                assert u.dagger(p) <= 1e-12
                continue
            g = lambda x: math.log(u.derivative(x)) - logp
            hi = lo + 1.0
            while g(hi) > 0:
                hi = lo + 2 * (hi - lo)
            root = optimize.brentq(g, max(lo, 0.0) + 1e-300, hi, xtol=1e-300, rtol=1e-14)
            assert u.dagger(p) == pytest.approx(root, rel=1e-9)

    @given(st.floats(-50, 50), st.floats(0.01, 10))
    def test_u_tilde_decreasing(self, y, dy):
        for u in (PowerUtility(1.0, 0.5), PowerUtility(-0.1, -2.0), PowerUtility(1.0, 0.5, 0.7),
                  PowerUtility(1.0, 0.5, -0.7)):
            assert u.u_tilde(y + dy) <= u.u_tilde(y)


class TestMortality:
    def test_exponential(self):
        m = mortality_exponential(0.025, 1.0, 200.0)
        assert m.survival_step(0.0) == pytest.approx(math.exp(-0.025), rel=1e-15)
        assert m.survival_step(0.0) == pytest.approx(0.97531, abs=5e-6)
        assert m.death_mass[0] == pytest.approx(1 - math.exp(-0.025), rel=1e-14)
        assert m.death_mass[0] == pytest.approx(0.0246901, abs=5e-8)
        k = np.arange(m.n_steps)
        np.testing.assert_allclose(m.survival[:-1], np.exp(-0.025 * k), rtol=1e-14)
        assert m.death_mass.sum() == pytest.approx(1.0, abs=1e-14)
        assert m.survival_step(150.0) == pytest.approx(math.exp(-0.025), rel=1e-14)
        with pytest.raises(ValueError):
            mortality_exponential(0.0, 1.0, 10.0)

    def test_certain_death(self):
        m = MortalityModel.from_death_mass(1.0, [1.0])
        assert m.n_steps == 1
        assert m.survival_step(0.0) == 0.0
        with pytest.raises(ValueError):
            m.survival_step(1.0)

    def test_single_row_csv(self, tmp_path):
        m = mortality_from_csv(write_csv(tmp_path / "q.csv", [(70, 1.0)]), 1.0)
        assert m.n_steps == 1
        assert m.death_mass[0] == 1.0
        assert m.start_age == 70.0

    def test_flat_rate_geometric(self, tmp_path):
        q = 0.1
        m = mortality_from_csv(write_csv(tmp_path / "q.csv", [(a, q) for a in range(60, 70)]), 1.0)
        p = m.death_mass
        np.testing.assert_allclose(p[:-1], q * (1 - q) ** np.arange(9), rtol=1e-13)
        assert p[-1] == pytest.approx((1 - q) ** 9, rel=1e-13)

    def test_half_year_hazard(self, tmp_path):
        m = mortality_from_csv(write_csv(tmp_path / "q.csv", [(0, 0.1), (1, 0.2)]), 0.5)
        h1, h2 = -math.log(0.9), -math.log(0.8)
        expected = [1.0, math.exp(-0.5 * h1), 0.9, 0.9 * math.exp(-0.5 * h2), 0.0]
        np.testing.assert_allclose(m.survival, expected, rtol=1e-14)

    def test_survival_steps_are_cumulative_product(self):
        m = builtin_mortality(0.25, start_age=65)
        rates = gompertz_makeham_rates(np.arange(65, 65 + m.n_steps // 4 + 1))
        # reconstruct yearly survivals from the one-step factors
        prod = np.concatenate([[1.0], np.cumprod(m.one_step_survival)])[:-1]
        np.testing.assert_allclose(prod, m.survival[:-1], rtol=1e-12)
        yearly = m.survival[:-1][::4]
        np.testing.assert_allclose(yearly[1:8] / yearly[:7], 1 - rates[:7], rtol=1e-12)
        assert np.all((m.one_step_survival >= 0) & (m.one_step_survival <= 1))

    @pytest.mark.parametrize("rows,match", [
        ([(60, 0.1), (62, 0.1)], "consecutive"),
        ([(60, 1.2)], r"\[0, 1\]"),
        ([], "empty"),
    ])
    def test_csv_errors(self, tmp_path, rows, match):
        with pytest.raises(ValueError, match=match):
            mortality_from_csv(write_csv(tmp_path / "q.csv", rows), 1.0)

    def test_csv_header(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("x,y\n60,0.1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="header"):
            mortality_from_csv(path, 1.0)

    def test_residual_mass_at_end(self, tmp_path):
        m = mortality_from_csv(write_csv(tmp_path / "q.csv", [(a, 0.01) for a in range(5)]), 1.0)
        assert m.death_mass[-1] == pytest.approx(0.99**4, rel=1e-13)
        assert m.death_mass.sum() == pytest.approx(1.0, abs=1e-14)
