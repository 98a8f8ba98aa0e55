import numpy as np
import pytest

from condrisk import (Aggregator, ArctanPowerUtility, CustomUtility,
                      ExponentialUtility, GrowthBoundError, LambdaAggregator,
                      RationalPowerUtility, agg_grad, agg_value, conjugate_V,
                      growth_bound)

ALL_KINDS = [
    ExponentialUtility(1.0),
    ExponentialUtility(2.5, shifted=True),
    RationalPowerUtility(2.0),
    RationalPowerUtility(1.5),
    ArctanPowerUtility(2.0),
    ArctanPowerUtility(3.5),
]


@pytest.mark.parametrize("u", ALL_KINDS)
class TestUnivariate:
    def test_derivative_matches_differences(self, u):
        xs = np.linspace(-4.0, 4.0, 41)
        num = (u.value(xs + 1e-6) - u.value(xs - 1e-6)) / 2e-6
        np.testing.assert_allclose(u.deriv(xs), num, rtol=1e-5, atol=1e-7)

    def test_second_derivative_matches_differences(self, u):
        # skip the kink at zero where one-sided curvature differs
        xs = np.concatenate([np.linspace(-4, -0.2, 15),
                             np.linspace(0.2, 4, 15)])
        num = (u.deriv(xs + 1e-6) - u.deriv(xs - 1e-6)) / 2e-6
        np.testing.assert_allclose(u.deriv2(xs), num, rtol=1e-4, atol=1e-6)

    def test_inverse_deriv_roundtrip(self, u):
        xs = np.linspace(-3.0, 5.0, 30)
        m = u.deriv(xs)
        np.testing.assert_allclose(u.inverse_deriv(m), xs, rtol=1e-9,
                                   atol=1e-9)

    def test_strictly_increasing_and_concave(self, u):
        rng = np.random.default_rng(2)
        a = rng.uniform(-5, 5, size=64)
        b = rng.uniform(-5, 5, size=64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keep = hi - lo > 1e-3
        lo, hi = lo[keep], hi[keep]
        assert np.all(u.value(hi) > u.value(lo))
        mid = u.value((lo + hi) / 2)
        assert np.all(mid > (u.value(lo) + u.value(hi)) / 2)

    def test_bounded_above_by_sup(self, u):
        xs = np.linspace(-5, 60, 200)
        assert np.all(u.value(xs) <= u.sup + 1e-12)


class TestAggValue:
    def test_two_unit_agents_at_origin(self):
        a = Aggregator.exponential([1.0, 1.0])
        assert agg_value(a, [0.0, 0.0]) == pytest.approx(-2.0)

    def test_mixed_exponents(self):
        a = Aggregator.exponential([1.0, 2.0])
        got = agg_value(a, [1.0, 0.5])
        assert got == pytest.approx(-2.0 * np.exp(-1.0), abs=1e-12)
        assert got == pytest.approx(-0.7357589, abs=1e-7)

    def test_shifted_composite_vanishes_at_origin(self):
        lam = LambdaAggregator.composite(ExponentialUtility(1.0, shifted=True),
                                         [1.0, 1.0])
        a = Aggregator((ExponentialUtility(1.0, shifted=True),
                        ExponentialUtility(1.0, shifted=True)), lam)
        assert agg_value(a, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-15)


class TestAggGrad:
    def test_unit_exponentials_at_origin(self):
        a = Aggregator.exponential([1.0, 1.0])
        np.testing.assert_allclose(agg_grad(a, [0.0, 0.0]), [1.0, 1.0])

    def test_scaled_exponentials_at_origin(self):
        a = Aggregator.exponential([2.0, 3.0])
        np.testing.assert_allclose(agg_grad(a, [0.0, 0.0]), [2.0, 3.0])

    @pytest.mark.parametrize("lam", [
        LambdaAggregator.zero(),
        LambdaAggregator.composite(ArctanPowerUtility(2.0), [0.5, 1.5, 0.0]),
    ])
    def test_matches_central_differences(self, lam):
        a = Aggregator((ExponentialUtility(0.7), RationalPowerUtility(2.0),
                        ArctanPowerUtility(2.5)), lam)
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.uniform(-3, 3, size=3)
            g = agg_grad(a, x)
            for j in range(3):
                step = np.zeros(3)
                step[j] = 1e-6
                num = (agg_value(a, x + step) - agg_value(a, x - step)) / 2e-6
                assert g[j] == pytest.approx(num, rel=1e-6, abs=1e-8)
        assert np.all(agg_grad(a, rng.uniform(-3, 3, size=3)) > 0)

    def test_hessian_matches_differences(self):
        lam = LambdaAggregator.composite(ExponentialUtility(1.0, shifted=True),
                                         [1.0, 0.5])
        a = Aggregator((ExponentialUtility(1.2), ExponentialUtility(0.8)), lam)
        x = np.array([0.3, -0.7])
        h = a.hessian(x)
        for j in range(2):
            step = np.zeros(2)
            step[j] = 1e-6
            num = (a.grad(x + step) - a.grad(x - step)) / 2e-6
            np.testing.assert_allclose(h[:, j], num, rtol=1e-5, atol=1e-8)


class TestAggregatorProperties:
    def test_strict_monotonicity_and_concavity(self):
        a = Aggregator.exponential([1.0, 2.0, 0.5])
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(-4, 4, size=3)
            bump = rng.uniform(0.01, 1.0) * np.eye(3)[rng.integers(0, 3)]
            assert agg_value(a, x + bump) > agg_value(a, x)
            y = rng.uniform(-4, 4, size=3)
            if np.abs(x - y).max() > 1e-6:
                assert agg_value(a, (x + y) / 2) > (agg_value(a, x)
                                                    + agg_value(a, y)) / 2

    def test_sup_bounds_values(self):
        lam = LambdaAggregator.composite(RationalPowerUtility(2.0), [1.0, 1.0])
        a = Aggregator((ExponentialUtility(1.0, shifted=True),
                        ArctanPowerUtility(2.0)), lam)
        rng = np.random.default_rng(5)
        pts = rng.uniform(-10, 50, size=(2, 4000))
        assert np.all(a.value(pts) <= a.sup + 1e-12)

    def test_first_order_concavity_inequality(self):
        a = Aggregator.exponential([0.5, 1.5])
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.uniform(-3, 3, size=2)
            y = rng.uniform(-3, 3, size=2)
            bound = agg_value(a, x) + agg_grad(a, x) @ (y - x)
            assert agg_value(a, y) <= bound + 1e-12


class TestConjugate:
    def test_single_agent_unit(self):
        assert conjugate_V([1.0], [1.0]) == pytest.approx(-1.0)

    def test_two_agents_unit(self):
        assert conjugate_V([1.0, 1.0], [1.0, 1.0]) == pytest.approx(-2.0)

    def test_fenchel_inequality(self):
        alphas = np.array([1.0, 2.0, 0.7])
        a = Aggregator.exponential(alphas)
        rng = np.random.default_rng(7)
        for _ in range(200):
            x = rng.uniform(-5, 5, size=3)
            y = rng.uniform(1e-3, 5, size=3)
            assert agg_value(a, x) - conjugate_V(alphas, y) <= x @ y + 1e-10

    def test_fenchel_tight_at_gradient(self):
        alphas = np.array([1.0, 2.0])
        a = Aggregator.exponential(alphas)
        x = np.array([0.4, -0.3])
        y = agg_grad(a, x)
        gap = x @ y - (agg_value(a, x) - conjugate_V(alphas, y))
        assert gap == pytest.approx(0.0, abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            conjugate_V([1.0], [-0.5])


class TestGrowthBound:
    def test_raw_exponential_candidate(self):
        a = Aggregator.exponential([1.0, 1.0])
        acoef, bcoef = growth_bound(a, candidate=(1.0, 0.0))
        assert (acoef, bcoef) == (1.0, 0.0)

    def test_shifted_exponential_standard_inequality(self):
        a = Aggregator((ExponentialUtility(1.0, shifted=True),))
        growth_bound(a, candidate=(1.0, 0.0))  # 1 - e^{-x} <= x

    def test_wrong_candidate_fails(self):
        a = Aggregator((ExponentialUtility(1.0, shifted=True),))
        with pytest.raises(GrowthBoundError):
            growth_bound(a, candidate=(0.0, 0.0))

    @pytest.mark.parametrize("agg", [
        Aggregator.exponential([1.0, 2.0]),
        Aggregator((RationalPowerUtility(2.0), ArctanPowerUtility(2.0))),
        Aggregator((ExponentialUtility(0.5), ExponentialUtility(2.0)),
                   LambdaAggregator.composite(ExponentialUtility(1.0, shifted=True),
                                              [1.0, 1.0])),
    ])
    def test_derived_bound_certifies(self, agg):
        acoef, bcoef = growth_bound(agg)
        assert acoef > 0
        rng = np.random.default_rng(8)
        pts = rng.uniform(-30, 30, size=(agg.nagents, 2000))
        slack = acoef * pts.sum(axis=0) + bcoef - agg.value(pts)
        assert slack.min() >= -1e-9


class TestCustomUtility:
    def test_accepts_concave_increasing(self):
        u = CustomUtility(lambda x: -np.exp(-x), lambda x: np.exp(-x),
                          sup=0.0)
        assert u.value(0.0) == pytest.approx(-1.0)
        assert u.inverse_deriv(np.array([1.0]))[0] == pytest.approx(0.0, abs=1e-9)

    def test_rejects_convex(self):
        with pytest.raises(ValueError):
            CustomUtility(lambda x: x ** 2, lambda x: 2 * x)

    def test_rejects_decreasing(self):
        with pytest.raises(ValueError):
            CustomUtility(lambda x: -x - 0.001 * x ** 2 * np.sign(x) * x,
                          lambda x: -np.ones_like(x))
