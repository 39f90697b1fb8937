import numpy as np
import pytest

from fdce.exceptions import DegenerateDataError
from fdce.stats import boxplot_stats, empirical_cdf, nmse, nmse_rows


class TestNmse:
    def test_perfect_estimate(self):
        h = np.array([1.0 + 1j, 2.0])
        assert nmse(h, h) == 0.0

    def test_zero_estimate(self):
        h = np.array([1.0 + 1j, 2.0])
        assert abs(nmse(np.zeros(2), h) - 1.0) < 1e-15

    def test_double_estimate(self):
        h = np.array([3.0, 4.0j])
        assert abs(nmse(2.0 * h, h) - 1.0) < 1e-15

    def test_zero_channel_rejected(self):
        with pytest.raises(DegenerateDataError):
            nmse(np.ones(3), np.zeros(3))

    def test_rows_match_scalar(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
        h_hat = h + 0.1 * rng.standard_normal((5, 4))
        rows = nmse_rows(h_hat, h)
        for i in range(5):
            assert abs(rows[i] - nmse(h_hat[i], h[i])) < 1e-15


class TestBoxplotStats:
    def test_five_point_example(self):
        s = boxplot_stats([1, 2, 3, 4, 5])
        assert (s.q1, s.median, s.q3) == (2.0, 3.0, 4.0)
        assert s.n_outliers == 0
        assert (s.whisker_low, s.whisker_high) == (1.0, 5.0)

    def test_outlier_example(self):
        s = boxplot_stats([1, 2, 3, 4, 100])
        assert (s.q1, s.q3) == (2.0, 4.0)
        assert s.whisker_high == 4.0
        assert s.whisker_low == 1.0
        assert list(s.outliers) == [100.0]

    def test_constant_list(self):
        s = boxplot_stats([7.0] * 9)
        assert s.q1 == s.median == s.q3 == 7.0
        assert s.n_outliers == 0

    def test_empty_rejected(self):
        with pytest.raises(DegenerateDataError):
            boxplot_stats([])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(300):
            n = int(rng.integers(1, 60))
            data = rng.standard_normal(n) * rng.uniform(0.5, 20)
            if rng.random() < 0.3:
                data[: max(1, n // 10)] *= 50.0  # force outliers sometimes
            s = boxplot_stats(data)
            q1, med, q3 = np.percentile(data, [25, 50, 75])
            assert (s.q1, s.median, s.q3) == (q1, med, q3)
            assert s.q1 <= s.median <= s.q3
            iqr = q3 - q1
            lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
            inside = data[(data >= lo) & (data <= hi)]
            outside = np.sort(data[(data < lo) | (data > hi)])
            assert s.whisker_low == inside.min()
            assert s.whisker_high == inside.max()
            assert np.array_equal(s.outliers, outside)
            assert data.min() <= s.whisker_low <= s.whisker_high <= data.max()


class TestEmpiricalCdf:
    def test_single_value(self):
        values, fractions = empirical_cdf([3.0])
        assert list(values) == [3.0]
        assert list(fractions) == [1.0]

    def test_ties(self):
        values, fractions = empirical_cdf([1.0, 1.0, 2.0])
        assert list(values) == [1.0, 2.0]
        assert abs(fractions[0] - 2.0 / 3.0) < 1e-15
        assert fractions[1] == 1.0

    def test_monotone_terminal_one(self):
        rng = np.random.default_rng(2)
        data = rng.standard_normal(500)
        values, fractions = empirical_cdf(data)
        assert np.all(np.diff(values) > 0)
        assert np.all(np.diff(fractions) > 0)
        assert fractions[-1] == 1.0

    def test_median_near_half(self):
        rng = np.random.default_rng(3)
        data = rng.standard_normal(801)
        values, fractions = empirical_cdf(data)
        med = np.median(data)
        frac_at_median = fractions[np.searchsorted(values, med)]
        assert abs(frac_at_median - 0.5) <= 1.0 / len(data) + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(DegenerateDataError):
            empirical_cdf([])
