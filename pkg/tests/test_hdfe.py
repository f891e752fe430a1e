"""Tests for the fixed-effects machinery against explicit-dummy oracles."""

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from vaxho.errors import DataQualityError, OracleError, RankError
from vaxho.hdfe import (
    DEFAULT_FE_DIMS,
    FEGroups,
    RegressionSpec,
    absorbed_count,
    build_fe_groups,
    estimate,
    estimate_by_group,
    ols,
    robust_vcov,
    spec_quartet,
    within_demean,
)
from vaxho.synth import dummy_ols_oracle


def make_panel(rng, n_o=4, n_i=3, n_t=2, beta=(0.7, -0.4)):
    """Full bilateral grid with planted coefficients and two FE layers."""
    rows = []
    fe_dit = {}
    fe_ot = {}
    countries = [f"C{j}" for j in range(n_o)]
    sections = ["A", "B", "C", "D+E", "F"]
    for t in range(2000, 2000 + n_t):
        for o in countries:
            fe_ot[(o, t)] = rng.normal(0, 1)
            for d in countries:
                if d == o:
                    continue
                for i in range(n_i):
                    key = (d, i, t)
                    if key not in fe_dit:
                        fe_dit[key] = rng.normal(0, 1)
                    x1 = rng.normal()
                    x2 = rng.normal()
                    y = (fe_dit[key] + fe_ot[(o, t)]
                         + beta[0] * x1 + beta[1] * x2 + rng.normal(0, 0.1))
                    rows.append({
                        "o": o, "d": d, "i": f"I{i}", "t": t,
                        "x1": x1, "x2": x2, "y": y,
                        "broad_industry": sections[i % len(sections)],
                    })
    return pd.DataFrame(rows)


def one_hot(ids, size):
    H = np.zeros((ids.size, size))
    H[np.arange(ids.size), ids] = 1.0
    return H


def base_spec(**kw):
    defaults = dict(name="fw", dependent="y", regressors=("x1", "x2"), vcov="HC0")
    defaults.update(kw)
    return RegressionSpec(**defaults)


# ---------------------------------------------------------------------------
# Grouping
# ---------------------------------------------------------------------------

class TestGroups:
    def test_ids_follow_first_appearance(self):
        df = pd.DataFrame({"a": ["p", "p", "q", "q", "p"]})
        g = build_fe_groups(df, (("a",),))
        assert g.ids[0].tolist() == [0, 0, 1, 1, 0]
        assert g.sizes == (5,)[:0] + (2,)

    def test_compound_dimension(self):
        df = pd.DataFrame({"a": ["p", "p", "q"], "b": [1, 2, 1]})
        g = build_fe_groups(df, (("a", "b"),))
        assert g.sizes == (3,)
        assert g.ids[0].tolist() == [0, 1, 2]

    def test_absorbed_count_connected(self):
        # every (dim1, dim2) pair occurs: one component, rank g1 + g2 - 1
        ids1 = np.array([0, 0, 1, 1])
        ids2 = np.array([0, 1, 0, 1])
        g = FEGroups(ids=(ids1, ids2), sizes=(2, 2))
        assert absorbed_count(g) == 3

    def test_absorbed_count_disconnected(self):
        ids1 = np.array([0, 0, 1, 1])
        ids2 = np.array([0, 0, 1, 1])
        g = FEGroups(ids=(ids1, ids2), sizes=(2, 2))
        assert absorbed_count(g) == 2

    def test_absorbed_count_matches_dummy_rank(self):
        rng = np.random.default_rng(41)
        for _ in range(25):
            n = int(rng.integers(10, 60))
            g1 = int(rng.integers(2, 6))
            g2 = int(rng.integers(2, 6))
            ids1 = rng.integers(0, g1, n)
            ids2 = rng.integers(0, g2, n)
            # make every label appear so sizes are honest
            ids1[:g1] = np.arange(g1)
            ids2[:g2] = np.arange(g2)
            g = FEGroups(ids=(ids1, ids2), sizes=(g1, g2))
            D = np.hstack([one_hot(ids1, g1), one_hot(ids2, g2)])
            assert absorbed_count(g) == np.linalg.matrix_rank(D)

    def test_single_dimension_count(self):
        g = FEGroups(ids=(np.array([0, 1, 1, 2]),), sizes=(3,))
        assert absorbed_count(g) == 3


# ---------------------------------------------------------------------------
# Demeaning
# ---------------------------------------------------------------------------

class TestDemean:
    def test_single_dimension_is_exact(self):
        rng = np.random.default_rng(5)
        ids = np.repeat(np.arange(4), 5)
        X = rng.normal(size=(20, 3))
        g = FEGroups(ids=(ids,), sizes=(4,))
        out, _, converged = within_demean(X, g, tol=1e-12)
        assert converged
        manual = X - np.vstack([X[ids == j].mean(axis=0) for j in range(4)])[ids]
        assert_allclose(out, manual, atol=1e-14)

    def test_group_means_vanish(self):
        rng = np.random.default_rng(6)
        df = make_panel(rng)
        g = build_fe_groups(df, DEFAULT_FE_DIMS)
        out, _, converged = within_demean(df[["x1", "y"]].to_numpy(), g, tol=1e-11)
        assert converged
        for ids, size in zip(g.ids, g.sizes):
            for j in range(out.shape[1]):
                means = np.bincount(ids, weights=out[:, j], minlength=size)
                assert np.abs(means).max() < 1e-9

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        df = make_panel(rng)
        g = build_fe_groups(df, DEFAULT_FE_DIMS)
        once, _, _ = within_demean(df[["x1"]].to_numpy(), g, tol=1e-12)
        twice, iters, _ = within_demean(once, g, tol=1e-12)
        assert_allclose(twice, once, atol=1e-10)
        assert iters <= 2

    def test_linear_operator(self):
        rng = np.random.default_rng(8)
        df = make_panel(rng)
        g = build_fe_groups(df, DEFAULT_FE_DIMS)
        a = df["x1"].to_numpy()
        b = df["x2"].to_numpy()
        combo, _, _ = within_demean(2.0 * a - 3.0 * b, g, tol=1e-12)
        da, _, _ = within_demean(a, g, tol=1e-12)
        db, _, _ = within_demean(b, g, tol=1e-12)
        assert_allclose(combo[:, 0], 2.0 * da[:, 0] - 3.0 * db[:, 0], atol=1e-9)

    def test_max_iter_reports_no_convergence(self):
        rng = np.random.default_rng(9)
        df = make_panel(rng)
        g = build_fe_groups(df, DEFAULT_FE_DIMS)
        _, iters, converged = within_demean(df[["x1"]].to_numpy(), g,
                                            tol=1e-16, max_iter=2)
        assert iters == 2 and not converged


# ---------------------------------------------------------------------------
# OLS core and covariance
# ---------------------------------------------------------------------------

class TestOLS:
    def test_recovers_exact_solution(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(50, 3))
        beta_true = np.array([1.5, -2.0, 0.25])
        beta, resid = ols(X @ beta_true, X)
        assert_allclose(beta, beta_true, atol=1e-12)
        assert np.abs(resid).max() < 1e-12

    def test_duplicate_column_named(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=20)
        X = np.column_stack([x, x])
        with pytest.raises(RankError) as exc:
            ols(rng.normal(size=20), X, names=("first", "second"))
        assert exc.value.column in ("first", "second")

    def test_zero_design_rejected(self):
        with pytest.raises(RankError, match="identically zero"):
            ols(np.ones(5), np.zeros((5, 2)))


class TestRobustVcov:
    def setup_method(self):
        rng = np.random.default_rng(12)
        self.X = rng.normal(size=(200, 3))
        self.resid = rng.normal(size=200)

    def test_zero_residuals_zero_vcov(self):
        V = robust_vcov(self.X, np.zeros(200), 200, 3, 10, "HC0")
        assert_allclose(V, 0.0, atol=1e-30)

    def test_hc1_is_scaled_hc0(self):
        V0 = robust_vcov(self.X, self.resid, 200, 3, 40, "HC0")
        V1 = robust_vcov(self.X, self.resid, 200, 3, 40, "HC1")
        assert_allclose(V1, V0 * (200 / (200 - 3 - 40)), rtol=1e-13)

    def test_homoskedastic_case_near_classical(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(20000, 2))
        resid = rng.normal(0, 0.5, size=20000)
        V = robust_vcov(X, resid, 20000, 2, 0, "HC0")
        classical = 0.25 * np.linalg.inv(X.T @ X)
        assert np.abs(V - classical).max() / np.abs(classical).max() < 0.05

    def test_nonpositive_df_rejected(self):
        with pytest.raises(DataQualityError, match="degrees of freedom"):
            robust_vcov(self.X, self.resid, 200, 3, 197, "HC1")

    def test_symmetric_and_psd(self):
        V = robust_vcov(self.X, self.resid, 200, 3, 0, "HC1")
        assert_allclose(V, V.T, atol=0)
        assert np.linalg.eigvalsh(V).min() > -1e-12


# ---------------------------------------------------------------------------
# Full estimation against the explicit-dummy oracle
# ---------------------------------------------------------------------------

class TestEstimate:
    def test_matches_dummy_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            df = make_panel(rng, n_o=int(rng.integers(3, 6)),
                            n_i=int(rng.integers(2, 4)), n_t=2)
            fit = estimate(df, base_spec())
            g = build_fe_groups(df, DEFAULT_FE_DIMS)
            coef, se, _ = dummy_ols_oracle(
                df["y"].to_numpy(), df[["x1", "x2"]].to_numpy(),
                g.ids[0], g.ids[1],
            )
            assert np.abs(fit.coef - coef).max() < 1e-8
            assert np.abs(fit.se - se).max() < 1e-8

    def test_recovers_planted_coefficients(self):
        rng = np.random.default_rng(22)
        df = make_panel(rng, n_o=8, n_i=5, n_t=3, beta=(0.7, -0.4))
        fit = estimate(df, base_spec())
        assert np.abs(fit.coef - [0.7, -0.4]).max() < 5 * fit.se.max()

    def test_scale_equivariance(self):
        rng = np.random.default_rng(23)
        df = make_panel(rng)
        fit = estimate(df, base_spec())
        scaled = df.assign(y=df["y"] * 100.0)
        fit2 = estimate(scaled, base_spec())
        assert_allclose(fit2.coef, fit.coef * 100.0, rtol=1e-9)
        assert_allclose(fit2.se, fit.se * 100.0, rtol=1e-9)
        assert_allclose(fit2.r2_within, fit.r2_within, rtol=1e-9)

    def test_absorbed_shift_changes_nothing(self):
        rng = np.random.default_rng(24)
        df = make_panel(rng)
        fit = estimate(df, base_spec())
        bump = ((df["d"] == "C1") & (df["i"] == "I0") & (df["t"] == 2000))
        shifted = df.assign(y=df["y"] + 10.0 * bump)
        fit2 = estimate(shifted, base_spec())
        assert_allclose(fit2.coef, fit.coef, atol=1e-8)
        assert_allclose(fit2.se, fit.se, atol=1e-8)

    def test_regressor_constant_within_groups_rejected(self):
        rng = np.random.default_rng(25)
        df = make_panel(rng)
        # varies only across (o, t) cells, so the second FE layer eats it
        df["x3"] = df["o"].map(lambda c: float(ord(c[-1]))) + df["t"]
        spec = base_spec(regressors=("x1", "x3"))
        with pytest.raises(RankError) as exc:
            estimate(df, spec)
        assert exc.value.column == "x3"
        g = build_fe_groups(df, DEFAULT_FE_DIMS)
        with pytest.raises(OracleError):
            dummy_ols_oracle(df["y"].to_numpy(), df[["x1", "x3"]].to_numpy(),
                             g.ids[0], g.ids[1])

    def test_interaction_equals_precomputed_product(self):
        rng = np.random.default_rng(26)
        df = make_panel(rng)
        fit = estimate(df, base_spec(regressors=("x1", "x1*x2")))
        manual = df.assign(x12=df["x1"] * df["x2"])
        fit2 = estimate(manual, base_spec(regressors=("x1", "x12")))
        assert_allclose(fit.coef, fit2.coef, atol=1e-12)
        assert fit.terms == ("x1", "x1*x2")

    def test_adjusted_r2_formula(self):
        rng = np.random.default_rng(27)
        df = make_panel(rng)
        fit = estimate(df, base_spec())
        expect = 1.0 - (1.0 - fit.r2_full) * (fit.n_obs - 1) / (
            fit.n_obs - fit.k - fit.g_absorbed)
        assert_allclose(fit.r2_adj_full, expect, rtol=1e-12)
        assert fit.r2_within <= fit.r2_full

    def test_missing_column_rejected(self):
        rng = np.random.default_rng(28)
        df = make_panel(rng)
        with pytest.raises(DataQualityError, match="missing"):
            estimate(df, base_spec(regressors=("x1", "nope")))

    def test_empty_sample_rejected(self):
        rng = np.random.default_rng(29)
        df = make_panel(rng)
        with pytest.raises(DataQualityError, match="empty sample"):
            estimate(df, base_spec(years=(1900,)))

    def test_nan_rows_dropped(self):
        rng = np.random.default_rng(30)
        df = make_panel(rng)
        df.loc[df.index[:7], "x1"] = np.nan
        fit = estimate(df, base_spec())
        assert fit.n_obs == len(df) - 7


class TestEstimateByGroup:
    def test_per_year_fits(self):
        rng = np.random.default_rng(31)
        df = make_panel(rng, n_o=5, n_i=3, n_t=3)
        fits = estimate_by_group(df, base_spec(min_obs=10), "year")
        assert [f.name for f in fits] == ["fw:2000", "fw:2001", "fw:2002"]
        assert all(f.n_obs == len(df) // 3 for f in fits)

    def test_per_section_fits(self):
        rng = np.random.default_rng(32)
        df = make_panel(rng, n_o=6, n_i=3, n_t=2)
        fits = estimate_by_group(df, base_spec(min_obs=10), "broad_industry")
        assert [f.name for f in fits] == ["fw:A", "fw:B", "fw:C"]

    def test_min_obs_skips_small_groups(self):
        rng = np.random.default_rng(33)
        df = make_panel(rng, n_o=4, n_i=2, n_t=2)
        fits = estimate_by_group(df, base_spec(min_obs=10 ** 6), "year")
        assert fits == []

    def test_threads_do_not_change_results(self):
        rng = np.random.default_rng(34)
        df = make_panel(rng, n_o=5, n_i=3, n_t=3)
        serial = estimate_by_group(df, base_spec(min_obs=10), "year")
        pooled = estimate_by_group(df, base_spec(min_obs=10), "year", threads=3)
        assert len(serial) == len(pooled)
        for a, b in zip(serial, pooled):
            assert_allclose(a.coef, b.coef, atol=0)
            assert_allclose(a.vcov, b.vcov, atol=0)

    def test_unknown_grouping_rejected(self):
        rng = np.random.default_rng(35)
        df = make_panel(rng)
        with pytest.raises(DataQualityError, match="grouping"):
            estimate_by_group(df, base_spec(), "industry")


class TestSpecQuartet:
    def test_names_and_terms(self):
        specs = spec_quartet()
        assert [s.name for s in specs] == ["comp", "comp_skill", "phys", "phys_skill"]
        assert specs[0].regressors == ("log_lk_comp", "log_lk_comp*log_LK_comp")
        assert specs[1].regressors[2:] == ("log_skill_int",
                                           "log_skill_int*log_skill_end")
        assert all(s.vcov == "HC1" for s in specs)

    def test_bad_vcov_rejected(self):
        with pytest.raises(DataQualityError, match="vcov"):
            RegressionSpec(name="x", vcov="HC3")
