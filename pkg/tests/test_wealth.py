import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paretomarket.errors import (
    DegenerateInputError,
    FitDomainError,
    ParameterError,
    RegimeError,
)
from paretomarket.wealth import (
    ShareTable,
    WealthVector,
    adjust_to_expected_mean,
    build_staircase,
    fit_pareto_exponent,
    gini,
    pareto_inverse_cdf,
    sample_pareto,
)


class TestParetoSampling:
    def test_inverse_cdf_quartile(self):
        # u = 0.25 at beta = 2 lands on the quartile c = (1/4)^(-1/2) = 2
        assert pareto_inverse_cdf(0.25, 2.0, 1.0) == pytest.approx(2.0, rel=1e-15)

    def test_inverse_cdf_at_one_is_floor(self):
        assert pareto_inverse_cdf(1.0, 1.7, 3.0) == pytest.approx(3.0)

    def test_inverse_cdf_rejects_zero(self):
        with pytest.raises(ParameterError):
            pareto_inverse_cdf(0.0, 2.0, 1.0)

    def test_sample_respects_floor_and_seed(self):
        w1 = sample_pareto(1.5, 2.0, 5000, seed=11)
        w2 = sample_pareto(1.5, 2.0, 5000, seed=11)
        assert np.array_equal(w1.values, w2.values)
        assert w1.values.min() >= 2.0
        assert w1.beta == 1.5

    def test_sample_tail_fraction(self):
        # P(c > x) = (x/c_min)^-beta; at x = 4, beta = 2, that is 1/16
        w = sample_pareto(2.0, 1.0, 200_000, seed=3)
        frac = np.mean(w.values > 4.0)
        assert frac == pytest.approx(1 / 16, abs=3 * math.sqrt((1 / 16) / 200_000))


class TestAdjustment:
    @pytest.mark.parametrize("beta", [1.1, 1.5, 2.0])
    def test_mean_is_exact(self, beta):
        w = sample_pareto(beta, 1.0, 20_000, seed=8)
        adjusted = adjust_to_expected_mean(w, seed=99)
        target = beta / (beta - 1.0)
        assert abs(adjusted.mean - target) / target < 1e-12
        assert adjusted.values.min() >= 1.0

    def test_deficit_raises_single_agent(self):
        # force the short branch: tiny sample far below its expected mean
        w = WealthVector(values=np.full(50, 1.0), c_min=1.0, beta=2.0)
        adjusted = adjust_to_expected_mean(w, seed=4)
        changed = np.flatnonzero(adjusted.values != 1.0)
        assert changed.size == 1
        assert adjusted.mean == pytest.approx(2.0, rel=1e-15)

    def test_deficit_without_seed_is_an_error(self):
        w = WealthVector(values=np.full(50, 1.0), c_min=1.0, beta=2.0)
        with pytest.raises(ParameterError):
            adjust_to_expected_mean(w)

    def test_surplus_strips_richest_first(self):
        values = np.array([1.0, 1.0, 1.0, 9.0])
        # target mean 2 -> total 8, so the rich agent drops from 9 to 5
        w = WealthVector(values=values, c_min=1.0, beta=2.0)
        adjusted = adjust_to_expected_mean(w)
        assert adjusted.values[:3] == pytest.approx([1.0, 1.0, 1.0])
        assert adjusted.values[3] == pytest.approx(5.0)

    def test_heavy_tail_regime_rejected(self):
        w = sample_pareto(0.9, 1.0, 100, seed=0)
        with pytest.raises(RegimeError):
            adjust_to_expected_mean(w, seed=1)


class TestStaircase:
    def test_counts_sum_exactly(self):
        stair = build_staircase(2.0, 1.0, 1.1, 64, 9_973)
        assert stair.counts.sum() == 9_973
        assert stair.levels[0] == pytest.approx(1.0)
        assert np.all(np.diff(stair.levels) > 0)

    def test_remainder_goes_to_lowest_levels(self):
        stair = build_staircase(1.5, 1.0, 1.3, 8, 101)
        # floors alone cannot exceed the total
        assert stair.counts.sum() == 101
        assert stair.counts[0] >= stair.counts[1]

    def test_expand_matches_counts(self):
        stair = build_staircase(2.0, 1.0, 1.2, 16, 500)
        expanded = stair.expand()
        assert expanded.n == 500
        values, counts = np.unique(expanded.values, return_counts=True)
        keep = stair.counts > 0
        assert np.allclose(values, stair.levels[keep])
        assert np.array_equal(counts, stair.counts[keep])

    def test_mean_approaches_continuum(self):
        # In levels the ladder's mean converges to (1-b^-beta)/(1-b^(1-beta)),
        # which for b = 1.1, beta = 2 is 1.909: near beta/(beta-1) = 2 but not
        # equal to it. Flooring the per-level counts trims another percent.
        coarse = build_staircase(2.0, 1.0, 1.1, 50, 100_000).mean
        fine = build_staircase(2.0, 1.0, 1.1, 500, 100_000).mean
        assert abs(fine - coarse) / fine < 0.01
        assert abs(fine - 2.0) / 2.0 < 0.075


class TestGini:
    def test_two_point_example(self):
        assert gini([0.0, 1.0]) == pytest.approx(0.5)

    def test_equal_values_zero(self):
        assert gini(np.full(10, 3.3)) == pytest.approx(0.0, abs=1e-15)

    def test_pareto_closed_form(self):
        # continuum value 1/(2 beta - 1)
        w = sample_pareto(2.0, 1.0, 400_000, seed=21)
        assert gini(w.values) == pytest.approx(1 / 3, abs=0.01)

    def test_rejects_negative(self):
        with pytest.raises(ParameterError):
            gini([-1.0, 2.0])

    def test_all_zero_degenerate(self):
        with pytest.raises(DegenerateInputError):
            gini([0.0, 0.0])

    @given(
        st.lists(st.floats(min_value=0.01, max_value=1e6), min_size=2, max_size=40),
        st.floats(min_value=0.1, max_value=100.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance_and_bounds(self, xs, scale):
        base = gini(xs)
        assert 0.0 <= base < 1.0
        assert gini([scale * x for x in xs]) == pytest.approx(base, abs=1e-9)


class TestShareFit:
    @staticmethod
    def synthetic_table(beta):
        p_top = np.array([0.5, 0.2, 0.1, 0.05, 0.01, 0.001])
        return ShareTable(p_top=p_top, w_share=p_top ** (1.0 - 1.0 / beta))

    @pytest.mark.parametrize("beta", [1.2, 1.43, 2.0, 3.5])
    def test_exact_recovery(self, beta):
        est, err = fit_pareto_exponent(self.synthetic_table(beta))
        assert est == pytest.approx(beta, abs=1e-9)
        assert err < 1e-9

    def test_error_bar_grows_with_noise(self):
        table = self.synthetic_table(1.5)
        rng = np.random.default_rng(0)
        noisy = ShareTable(
            p_top=table.p_top,
            w_share=np.clip(table.w_share * np.exp(rng.normal(0, 0.05, table.p_top.size)), 0, 1),
        )
        _, err_clean = fit_pareto_exponent(table)
        _, err_noisy = fit_pareto_exponent(noisy)
        assert err_noisy > err_clean

    def test_slope_at_least_one_rejected(self):
        # w_share ~ p_top means slope 1, i.e. beta -> infinity
        p = np.array([0.5, 0.1, 0.01])
        with pytest.raises(FitDomainError):
            fit_pareto_exponent(ShareTable(p_top=p, w_share=p))

    def test_csv_round_trip(self, tmp_path):
        table = self.synthetic_table(1.43)
        path = tmp_path / "shares.csv"
        with open(path, "w") as fh:
            fh.write("p_top,w_share\n")
            for a, b in zip(table.p_top, table.w_share):
                fh.write(f"{float(a)!r},{float(b)!r}\n")
        loaded = ShareTable.from_csv(path)
        est, _ = fit_pareto_exponent(loaded)
        assert est == pytest.approx(1.43, abs=1e-9)

    def test_csv_header_checked(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("fraction,share\n0.1,0.5\n")
        with pytest.raises(ParameterError):
            ShareTable.from_csv(path)

    @given(st.floats(min_value=1.05, max_value=5.0))
    @settings(max_examples=40, deadline=None)
    def test_recovery_property(self, beta):
        est, _ = fit_pareto_exponent(self.synthetic_table(beta))
        assert est == pytest.approx(beta, rel=1e-6)
