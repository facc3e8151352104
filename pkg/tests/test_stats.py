"""Variance decomposition fits and the SNK multiple mean comparison."""

import math

import numpy as np
import pytest

from hierlabel import queryeval as qe
from hierlabel import stats as st
from hierlabel.errors import NumericalError


def make_table(rows):
    """rows: (method, level, value) -> ObservationTable with f carrying value."""
    table = qe.ObservationTable()
    for i, (method, level, value) in enumerate(rows):
        table.rows.append(qe.ObservationRow(
            method=method, node_id=i, level=level, kind="specific",
            precision=value, recall=value, f=value))
    return table


class TestAdditiveModel:

    def test_balanced_effects_are_marginal_deviations(self):
        rng = np.random.default_rng(1)
        methods = ["A", "B", "C"]
        levels = [0, 1]
        rows = []
        for method in methods:
            for level in levels:
                for _ in range(4):
                    rows.append((method, level, float(rng.normal())))
        table = make_table(rows)
        fit = st.fit_additive_model(table, "f")
        y = table.values("f")
        grand = y.mean()
        for method in methods:
            marginal = np.mean([v for m, l, v in rows if m == method])
            assert fit.effects["method"][method] == \
                pytest.approx(marginal - grand, abs=1e-10)
            assert fit.adjusted_means["method"][method] == \
                pytest.approx(marginal, abs=1e-10)
        for level in levels:
            marginal = np.mean([v for m, l, v in rows if l == level])
            assert fit.effects["level"][level] == \
                pytest.approx(marginal - grand, abs=1e-10)

    def test_perfectly_additive_zero_residual(self):
        rows = []
        for mi, method in enumerate(["A", "B"]):
            for level in (0, 1, 2):
                rows.append((method, level, 1.0 + 0.5 * mi + 0.1 * level))
        fit = st.fit_additive_model(make_table(rows), "f")
        assert fit.resid_var == pytest.approx(0.0, abs=1e-20)

    def test_unbalanced_matches_normal_equations(self):
        rng = np.random.default_rng(2)
        methods = ["A", "B", "C"]
        levels = [0, 1, 2]
        rows = []
        for method in methods:
            for level in levels:
                for _ in range(int(rng.integers(1, 5))):
                    rows.append((method, level, float(rng.normal())))
        table = make_table(rows)
        fit = st.fit_additive_model(table, "f")

        # independent oracle: dummy coding with explicit normal equations
        y = table.values("f")
        n = len(rows)
        x = np.ones((n, 1 + (len(levels) - 1) + (len(methods) - 1)))
        for i, (method, level, _) in enumerate(rows):
            for j, lv in enumerate(levels[:-1]):
                x[i, 1 + j] = 1.0 if level == lv else 0.0
                if level == levels[-1]:
                    x[i, 1 + j] = -1.0
            off = len(levels)
            for j, mname in enumerate(methods[:-1]):
                x[i, off + j] = 1.0 if method == mname else 0.0
                if method == methods[-1]:
                    x[i, off + j] = -1.0
        beta = np.linalg.solve(x.T @ x, x.T @ y)
        resid = y - x @ beta
        df = n - x.shape[1]
        assert fit.mu == pytest.approx(beta[0], rel=1e-9)
        assert fit.df_resid == df
        assert fit.resid_var == pytest.approx(resid @ resid / df, rel=1e-9)
        for j, lv in enumerate(levels[:-1]):
            assert fit.effects["level"][lv] == pytest.approx(beta[1 + j], rel=1e-9)
        for j, mname in enumerate(methods[:-1]):
            assert fit.effects["method"][mname] == \
                pytest.approx(beta[len(levels) + j], rel=1e-9)

    def test_missing_level_is_named(self):
        rows = [("A", 0, 1.0), ("A", 1, 2.0), ("B", 0, 1.5), ("B", 1, 2.5)]
        with pytest.raises(NumericalError, match="'C'"):
            st.fit_additive_model(make_table(rows), "f",
                                  methods=["A", "B", "C"])

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        rows = [(m, l, float(rng.normal()))
                for m in "AB" for l in (0, 1) for _ in range(3)]
        shifted = [(m, l, v + 10.0) for m, l, v in rows]
        f1 = st.fit_additive_model(make_table(rows), "f")
        f2 = st.fit_additive_model(make_table(shifted), "f")
        assert f2.mu == pytest.approx(f1.mu + 10.0, abs=1e-10)
        assert f2.resid_var == pytest.approx(f1.resid_var, abs=1e-12)
        for name in ("method", "level"):
            for lv, e in f1.effects[name].items():
                assert f2.effects[name][lv] == pytest.approx(e, abs=1e-10)


class TestLevelModel:

    def test_saturated_fit(self):
        rows = [("A", 0, 0.3), ("A", 1, 0.6), ("A", 2, 0.9)]
        fit = st.fit_level_model(make_table(rows), "f")
        for level, value in ((0, 0.3), (1, 0.6), (2, 0.9)):
            assert fit.adjusted_means["level"][level] == pytest.approx(value)
        assert fit.df_resid == 0

    def test_constant_measure_null_effects(self):
        rows = [("A", l, 0.5) for l in (0, 1, 2) for _ in range(3)]
        fit = st.fit_level_model(make_table(rows), "f")
        for level in (0, 1, 2):
            assert fit.effects["level"][level] == pytest.approx(0.0, abs=1e-12)

    def test_balanced_group_means(self):
        rng = np.random.default_rng(4)
        rows = [("A", l, float(rng.normal())) for l in (0, 1) for _ in range(5)]
        fit = st.fit_level_model(make_table(rows), "f")
        for level in (0, 1):
            mean = np.mean([v for _, l, v in rows if l == level])
            assert fit.adjusted_means["level"][level] == \
                pytest.approx(mean, abs=1e-10)

    def test_single_level_errors(self):
        rows = [("A", 0, 0.5), ("A", 0, 0.7)]
        with pytest.raises(NumericalError):
            st.fit_level_model(make_table(rows), "f")

    def test_two_methods_rejected(self):
        rows = [("A", 0, 0.5), ("B", 1, 0.7)]
        with pytest.raises(NumericalError):
            st.fit_level_model(make_table(rows), "f")


# upper 5% studentized range quantiles from standard published tables
PUBLISHED_Q = {
    (2, 10): 3.151, (3, 10): 3.877, (5, 10): 4.654, (10, 10): 5.598,
    (2, 30): 2.888, (3, 30): 3.486, (5, 30): 4.102, (10, 30): 4.824,
    (2, math.inf): 2.772, (3, math.inf): 3.314,
    (5, math.inf): 3.858, (10, math.inf): 4.474,
}


class TestStudentizedRange:

    def test_published_table_anchors(self):
        for (k, df), expect in PUBLISHED_Q.items():
            got = st.studentized_range_quantile(0.05, k, df)
            assert got == pytest.approx(expect, abs=1e-3), (k, df)

    def test_monotone_in_k(self):
        prev = 0.0
        for k in range(2, 12):
            q = st.studentized_range_quantile(0.05, k, 20)
            assert q > prev
            prev = q

    def test_t_identity(self):
        from scipy.stats import t
        for df in (5, 15, 60):
            q2 = st.studentized_range_quantile(0.05, 2, df)
            expect = math.sqrt(2) * t.ppf(1 - 0.025, df)
            assert q2 == pytest.approx(expect, abs=1e-3)

    def test_domain_errors(self):
        with pytest.raises(NumericalError):
            st.studentized_range_quantile(0.0, 2, 10)
        with pytest.raises(NumericalError):
            st.studentized_range_quantile(0.05, 1, 10)
        with pytest.raises(NumericalError):
            st.studentized_range_quantile(0.05, 2, 0)


def snk_toy_fit(group_means, n_rep=6, mse=1.0):
    """One-factor toy data with exact group means, residual MSE, and
    df = groups * (n_rep - 1), built from a fixed residual pattern."""
    assert n_rep == 6
    unit = np.array([1.5, -1.5, 0.5, -0.5, 0.0, 0.0])
    assert unit.sum() == 0 and unit @ unit == 5.0   # per-group SS = 5
    rows = []
    for level, mean in enumerate(group_means):
        for r in range(n_rep):
            rows.append(("A", level, mean + math.sqrt(mse) * unit[r]))
    return st.fit_level_model(make_table(rows), "f")


class TestSnk:

    def test_all_equal_single_group(self):
        fit = snk_toy_fit([5.0, 5.0, 5.0])
        g = st.snk_compare(fit, "level", 0.05)
        assert all(letters == "a" for _, _, letters in g.entries)

    def test_forced_separation(self):
        # two means 100 standard errors apart
        fit = snk_toy_fit([50.0, 0.0])
        g = st.snk_compare(fit, "level", 0.05)
        assert [letters for _, _, letters in g.entries] == ["a", "b"]

    def test_worked_example_letters(self):
        """Four groups, n=6 each, MSE=1, df=20.  Hand-run SNK at the
        published table values q(.05; 2,3,4; 20) = 2.950, 3.578, 3.958
        with SE = sqrt(1/6) = 0.4082:
          span A-D: 3.0  > 3.958*0.4082 = 1.616  -> split
          span A-C: 1.8  > 3.578*0.4082 = 1.461  -> split
          span A-B: 1.0 <= 2.950*0.4082 = 1.204  -> group {A,B}
          span B-C: 0.8 <= 1.204                 -> group {B,C}
          span B-D: 2.0  > 1.461                 -> split
          span C-D: 1.2 <= 1.204?  1.2 <= 1.204  -> group {C,D}
        Letters: A=a, B=ab, C=bc, D=c."""
        fit = snk_toy_fit([10.0, 9.0, 8.2, 7.0])
        assert fit.df_resid == 20
        assert fit.resid_var == pytest.approx(1.0, rel=1e-12)
        g = st.snk_compare(fit, "level", 0.05)
        means = [m for _, m, _ in g.entries]
        assert means == sorted(means, reverse=True)
        assert [(lv, letters) for lv, _, letters in g.entries] == \
            [(0, "a"), (1, "ab"), (2, "bc"), (3, "c")]

    def test_letters_contiguous_random(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            means = sorted(rng.uniform(0, 5, size=int(rng.integers(3, 7))),
                           reverse=True)
            fit = snk_toy_fit(list(means))
            g = st.snk_compare(fit, "level", 0.05)
            for letter in set("".join(l for _, _, l in g.entries)):
                where = [i for i, (_, _, l) in enumerate(g.entries)
                         if letter in l]
                assert where == list(range(where[0], where[-1] + 1))

    def test_shift_leaves_grouping(self):
        fit1 = snk_toy_fit([10.0, 9.0, 8.2, 7.0])
        fit2 = snk_toy_fit([11.0, 10.0, 9.2, 8.0])
        g1 = st.snk_compare(fit1, "level", 0.05)
        g2 = st.snk_compare(fit2, "level", 0.05)
        assert [l for _, _, l in g1.entries] == [l for _, _, l in g2.entries]

    def test_zero_variance_distinct_letters(self):
        rows = [("A", l, v) for l, v in ((0, 3.0), (1, 2.0), (2, 2.0))
                for _ in range(2)]
        fit = st.fit_level_model(make_table(rows), "f")
        assert fit.resid_var == pytest.approx(0.0, abs=1e-18)
        g = st.snk_compare(fit, "level", 0.05)
        by_level = {lv: letters for lv, _, letters in g.entries}
        assert by_level[0] != by_level[1]
        assert by_level[1] == by_level[2]

    def test_unknown_factor(self):
        fit = snk_toy_fit([1.0, 2.0])
        with pytest.raises(NumericalError):
            st.snk_compare(fit, "method", 0.05)
