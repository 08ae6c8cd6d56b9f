"""Quantile-to-normal scaling and ANOVA-F selection against naive oracles."""

import io
import math

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from quickroutes.errors import ValidationError
from quickroutes.features import FeatureMatrix
from quickroutes.preprocess import (
    FeatureScore,
    QuantileScaler,
    anova_f,
    fit_quantile,
    score_features,
    select_k_best,
)


def matrix_of(columns: dict, labels=None) -> FeatureMatrix:
    names = tuple(columns)
    values = np.column_stack([np.asarray(v, dtype=float) for v in columns.values()])
    return FeatureMatrix(
        names=names,
        values=values,
        climb_ids=tuple(range(values.shape[0])),
        labels=tuple(labels) if labels is not None else None,
    )


class TestQuantileScaler:
    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            fit_quantile(matrix_of({"a": [1.0]}))

    def test_median_maps_to_zero(self):
        m = matrix_of({"a": [3.0, 1.0, 2.0, 10.0, 7.0]})
        scaler = fit_quantile(m)
        out = scaler.transform_values(np.array([[3.0]]))
        assert out[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_even_count_median_interpolates_to_zero(self):
        m = matrix_of({"a": [1.0, 2.0, 3.0, 4.0]})
        scaler = fit_quantile(m)
        out = scaler.transform_values(np.array([[2.5]]))
        assert out[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_constant_column_flagged_and_zeroed(self):
        m = matrix_of({"a": [5.0, 5.0, 5.0], "b": [1.0, 2.0, 3.0]})
        scaler = fit_quantile(m)
        assert scaler.is_constant(0)
        assert not scaler.is_constant(1)
        out = scaler.transform(m)
        assert (out.values[:, 0] == 0.0).all()

    def test_distinct_values_keep_strict_order(self):
        values = np.arange(1.0, 34.0)
        m = matrix_of({"a": values})
        out = fit_quantile(m).transform(m)
        col = out.values[:, 0]
        assert (np.diff(col) > 0).all()

    def test_transformed_column_is_nearly_standard_normal(self):
        values = np.arange(1.0, 34.0)
        m = matrix_of({"a": values})
        col = np.sort(fit_quantile(m).transform(m).values[:, 0])
        n = len(col)
        # Kolmogorov-Smirnov distance against the normal CDF
        cdf = ndtr(col)
        upper = np.arange(1, n + 1) / n
        lower = np.arange(0, n) / n
        ks = max(np.abs(cdf - upper).max(), np.abs(cdf - lower).max())
        assert ks <= 0.1

    def test_out_of_range_clamps_to_half_rank(self):
        values = [1.0, 2.0, 3.0, 4.0, 5.0]
        m = matrix_of({"a": values})
        scaler = fit_quantile(m)
        lo = ndtri(1 / (2 * 5))
        hi = ndtri(1 - 1 / (2 * 5))
        out = scaler.transform_values(np.array([[0.0], [99.0]]))
        assert out[0, 0] == pytest.approx(lo)
        assert out[1, 0] == pytest.approx(hi)

    def test_monotone_non_decreasing(self):
        rng = np.random.default_rng(5)
        fit = rng.normal(size=40)
        m = matrix_of({"a": fit})
        scaler = fit_quantile(m)
        probes = np.sort(rng.normal(size=200) * 2)
        out = scaler.transform_values(probes[:, None])[:, 0]
        assert (np.diff(out) >= 0).all()

    def test_rank_idempotence(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=25)
        m = matrix_of({"a": values})
        once = fit_quantile(m).transform(m)
        twice = fit_quantile(once).transform(once)
        assert (np.argsort(once.values[:, 0]) == np.argsort(twice.values[:, 0])).all()

    def test_column_mismatch_rejected(self):
        scaler = fit_quantile(matrix_of({"a": [1.0, 2.0]}))
        with pytest.raises(ValidationError):
            scaler.transform(matrix_of({"b": [1.0, 2.0]}))

    def test_save_load_round_trip(self):
        rng = np.random.default_rng(3)
        m = matrix_of({"a": rng.normal(size=9), "b": rng.uniform(size=9)})
        scaler = fit_quantile(m)
        buf = io.StringIO()
        scaler.save(buf)
        buf.seek(0)
        back = QuantileScaler.load(buf)
        assert back.names == scaler.names
        assert back.n_fit == scaler.n_fit
        assert (back.transform(m).values == scaler.transform(m).values).all()

    def test_ties_share_mid_rank(self):
        m = matrix_of({"a": [1.0, 2.0, 2.0, 3.0]})
        scaler = fit_quantile(m)
        out = scaler.transform(m).values[:, 0]
        # both ties map to the average of ranks 2 and 3 -> ecdf 0.5 -> 0
        assert out[1] == out[2] == pytest.approx(0.0, abs=1e-12)


def naive_anova_f(groups):
    """Textbook two-pass computation over explicit group lists."""
    all_values = [v for g in groups for v in g]
    n = len(all_values)
    k = len(groups)
    grand = sum(all_values) / n
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups)
    ssw = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups)
    if ssw == 0:
        return math.inf if ssb > 0 else 0.0
    return (ssb / (k - 1)) / (ssw / (n - k))


class TestAnovaF:
    def test_no_between_group_variance(self):
        assert anova_f([5, 5, 5, 5, 5, 5], ["a", "a", "b", "b", "c", "c"]) == 0.0

    def test_zero_within_variance_distinct_means_is_infinite(self):
        f = anova_f([1, 1, 2, 2, 3, 3], ["a", "a", "b", "b", "c", "c"])
        assert f == math.inf

    def test_worked_example_against_oracle(self):
        column = [1, 2, 2, 3, 5, 6]
        labels = ["a", "a", "b", "b", "c", "c"]
        expected = naive_anova_f([[1, 2], [2, 3], [5, 6]])
        assert anova_f(column, labels) == pytest.approx(expected, rel=1e-9)

    def test_oracle_agreement_on_random_data(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            sizes = rng.integers(2, 8, size=3)
            groups = [list(rng.normal(loc=i, size=s)) for i, s in enumerate(sizes)]
            column = [v for g in groups for v in g]
            labels = [i for i, g in enumerate(groups) for _ in g]
            assert anova_f(column, labels) == pytest.approx(
                naive_anova_f(groups), rel=1e-9
            )

    def test_needs_two_groups(self):
        with pytest.raises(ValidationError):
            anova_f([1, 2, 3], ["a", "a", "a"])

    def test_needs_more_samples_than_groups(self):
        with pytest.raises(ValidationError):
            anova_f([1, 2], ["a", "b"])

    def test_scaling_invariance_of_ranking(self):
        rng = np.random.default_rng(8)
        labels = ["a"] * 5 + ["b"] * 5 + ["c"] * 5
        base = {f"c{i}": rng.normal(size=15) + rng.normal() for i in range(12)}
        m1 = matrix_of(base, labels)
        affine = {
            name: 3.7 * (i + 1) * col + 11.0 * i - 4.0
            for i, (name, col) in enumerate(base.items())
        }
        m2 = matrix_of(affine, labels)
        s1 = score_features(m1)
        s2 = score_features(m2)
        assert select_k_best(s1, 12) == select_k_best(s2, 12)


class TestSelectKBest:
    SCORES = [
        FeatureScore("a", 5.0),
        FeatureScore("b", math.inf),
        FeatureScore("c", 5.0),
        FeatureScore("d", 1.0),
    ]

    def test_infinity_sorts_first_then_column_order(self):
        assert select_k_best(self.SCORES, 2) == ["b", "a"]

    def test_all_columns_keeps_tie_order(self):
        assert select_k_best(self.SCORES, 4) == ["b", "a", "c", "d"]

    def test_k_out_of_range(self):
        with pytest.raises(ValidationError):
            select_k_best(self.SCORES, 0)
        with pytest.raises(ValidationError):
            select_k_best(self.SCORES, 5)

    def test_constant_columns_score_zero(self):
        m = matrix_of(
            {"flat": [7.0, 7.0, 7.0, 7.0], "real": [1.0, 2.0, 1.0, 2.0]},
            labels=["a", "a", "b", "b"],
        )
        scores = {s.name: s.f for s in score_features(m)}
        assert scores["flat"] == 0.0
