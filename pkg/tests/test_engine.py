import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdml import (
    GbtSpec,
    OracleSpec,
    RidgeSpec,
    SplitScheme,
    generate,
    orthogonality_check,
    rate_diagnostic,
    repeat_splits,
    run_crossfit,
    run_split,
    score_psi,
    solve_theta,
)
from mmdml.core import NuisancePredictions
from mmdml.engine import z_quantile
from mmdml.errors import ConfigError, IdentificationError, InSamplePredictionError, MissingOracleError
from mmdml.learners.base import FittedLearner

from conftest import oracle_preds, three_modality_config


def make_preds(l_hat, m_hat, tag="test"):
    n = len(l_hat)
    return NuisancePredictions(
        l_hat=np.asarray(l_hat, float),
        m_hat=np.asarray(m_hat, float),
        fold_id=np.zeros(n, dtype=int),
        learner_tag=tag,
    )


class TestScorePsi:
    def test_exact_score_vanishes_on_noiseless_fixture(self):
        d = np.array([1.0, -2.0, 0.5])
        m0 = d.copy()  # nu = 0
        g0 = np.array([0.3, -0.1, 0.2])
        y = 0.5 * d + g0  # eps = 0
        l0 = 0.5 * m0 + g0
        assert np.allclose(score_psi(y, d, l0, m0, 0.5), 0.0)

    def test_single_value(self):
        assert score_psi([1.0], [1.0], [0.0], [0.0], 0.0) == pytest.approx([1.0])

    def test_affine_in_theta_with_quadratic_slope(self):
        rng = np.random.default_rng(0)
        y, d, l, m = (rng.standard_normal(20) for _ in range(4))
        psi0 = score_psi(y, d, l, m, 0.0)
        psi1 = score_psi(y, d, l, m, 1.0)
        assert np.allclose(psi1 - psi0, -((d - m) ** 2))


class TestSolveTheta:
    def test_zero_nuisances_reduce_to_no_intercept_ols(self):
        rng = np.random.default_rng(1)
        d = rng.standard_normal(200)
        y = 0.7 * d + 0.1 * rng.standard_normal(200)
        est = solve_theta(make_preds(np.zeros(200), np.zeros(200)), y, d)
        assert est.theta_hat == pytest.approx(np.sum(y * d) / np.sum(d * d), abs=1e-12)

    def test_root_property(self):
        rng = np.random.default_rng(2)
        y, d = rng.standard_normal(500), rng.standard_normal(500)
        l, m = 0.3 * y, 0.5 * d
        est = solve_theta(make_preds(l, m), y, d)
        psi = score_psi(y, d, l, m, est.theta_hat)
        scale = np.sqrt(np.mean(psi**2))
        assert abs(np.mean(psi)) <= 1e-10 * max(scale, 1e-12)

    def test_oracle_nuisances_recover_theta0(self, paper_scale_ds):
        est = solve_theta(oracle_preds(paper_scale_ds), paper_scale_ds.y, paper_scale_ds.d)
        assert est.se == pytest.approx(1 / np.sqrt(paper_scale_ds.n), rel=0.05)
        assert abs(est.theta_hat - 0.5) <= 4 * est.se

    def test_memorized_treatment_is_unidentified(self):
        rng = np.random.default_rng(3)
        d = rng.standard_normal(50)
        y = rng.standard_normal(50)
        with pytest.raises(IdentificationError):
            solve_theta(make_preds(np.zeros(50), d.copy()), y, d)

    def test_in_sample_predictions_rejected(self):
        rng = np.random.default_rng(4)
        y, d = rng.standard_normal(30), rng.standard_normal(30)
        preds = NuisancePredictions(
            l_hat=np.zeros(30), m_hat=np.zeros(30), fold_id=np.full(30, -1), learner_tag="x"
        )
        with pytest.raises(InSamplePredictionError):
            solve_theta(preds, y, d)
        est = solve_theta(preds, y, d, allow_in_sample=True)
        assert np.isfinite(est.theta_hat)

    @settings(max_examples=25, deadline=None)
    @given(kappa=st.floats(0.1, 10), shift=st.floats(-5, 5))
    def test_equivariance(self, kappa, shift):
        rng = np.random.default_rng(5)
        y, d = rng.standard_normal(80), rng.standard_normal(80)
        l, m = 0.2 * y, 0.1 * d
        base = solve_theta(make_preds(l, m), y, d)
        scaled = solve_theta(make_preds(kappa * l, m), kappa * y, d)
        assert scaled.theta_hat == pytest.approx(kappa * base.theta_hat, rel=1e-9)
        shifted = solve_theta(make_preds(l, m + shift), y, d + shift)
        assert shifted.theta_hat == pytest.approx(base.theta_hat, abs=1e-9)

    def test_bisection_agrees_with_closed_form(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            n = rng.integers(20, 200)
            y, d = rng.standard_normal(n), rng.standard_normal(n)
            l, m = rng.standard_normal(n) * 0.3, rng.standard_normal(n) * 0.3
            est = solve_theta(make_preds(l, m), y, d)

            def mean_score(theta):
                return np.mean(score_psi(y, d, l, m, theta))

            lo, hi = est.theta_hat - 10, est.theta_hat + 10
            assert mean_score(lo) * mean_score(hi) < 0
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if mean_score(lo) * mean_score(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            assert 0.5 * (lo + hi) == pytest.approx(est.theta_hat, abs=1e-8)

    def test_z_quantile_precision(self):
        assert z_quantile(0.05) == pytest.approx(1.959963984540054, abs=1e-9)


class TestRunSplit:
    def test_deterministic(self, small_ds):
        scheme = SplitScheme(kind="single", train_fraction=0.5, seed=12)
        a = run_split(small_ds, RidgeSpec(seed=1), scheme)
        b = run_split(small_ds, RidgeSpec(seed=1), scheme)
        assert a.estimate.theta_hat == b.estimate.theta_hat
        assert np.array_equal(a.test_idx, b.test_idx)

    def test_oracle_learner_recovers_theta0(self, small_ds):
        scheme = SplitScheme(kind="single", train_fraction=0.5, seed=12)
        res = run_split(small_ds, OracleSpec(), scheme)
        assert abs(res.estimate.theta_hat - 0.5) <= 4 * res.estimate.se

    def test_out_of_sample_audit_holds(self, small_ds):
        scheme = SplitScheme(kind="single", train_fraction=0.6, seed=12)
        res = run_split(small_ds, RidgeSpec(), scheme)
        assert res.preds.verify_out_of_sample()
        assert len(res.test_idx) == small_ds.n - int(round(0.6 * small_ds.n))

    def test_tab_only_is_biased_downward(self):
        # one adjusted channel of three leaves negative confounding behind
        full, partial = [], []
        scheme = SplitScheme(kind="single", train_fraction=0.5, seed=0)
        for seed in range(20):
            ds = generate(three_modality_config(n=1500, seed=200 + seed))
            partial.append(run_split(ds, RidgeSpec(), scheme, modality_subset=("tab",)).estimate.theta_hat)
            full.append(run_split(ds, RidgeSpec(), scheme).estimate.theta_hat)
        assert np.mean(partial) < np.mean(full) - 0.3


class TestCrossfit:
    def test_pooled_theta_between_fold_thetas(self, small_ds):
        scheme = SplitScheme(kind="kfold", k=2, seed=3)
        res = run_crossfit(small_ds, OracleSpec(), scheme)
        thetas = []
        for fid in (0, 1):
            mask = res.preds.fold_id == fid
            sub_preds = make_preds(res.preds.l_hat[mask], res.preds.m_hat[mask])
            thetas.append(solve_theta(sub_preds, small_ds.y[mask], small_ds.d[mask]).theta_hat)
        assert min(thetas) - 1e-12 <= res.estimate.theta_hat <= max(thetas) + 1e-12

    def test_micro_folds_smoke(self, small_ds):
        ds = small_ds.take(range(100))
        scheme = SplitScheme(kind="kfold", k=50, seed=3)
        res = run_crossfit(ds, RidgeSpec(penalty=10.0), scheme)
        assert np.isfinite(res.estimate.theta_hat)

    def test_k_too_large_rejected(self, small_ds):
        ds = small_ds.take(range(40))
        with pytest.raises(ConfigError):
            run_crossfit(ds, RidgeSpec(), SplitScheme(kind="kfold", k=21, seed=0))

    def test_kfold_ridge_accuracy(self):
        ds = generate(three_modality_config(n=10_000, seed=404))
        res = run_crossfit(ds, RidgeSpec(penalty=1.0), SplitScheme(kind="kfold", k=5, seed=2))
        assert abs(res.estimate.theta_hat - 0.5) <= 0.03
        assert res.preds.verify_out_of_sample()


class TestRepeatSplits:
    def test_five_repeats_summary_shape(self, small_ds):
        scheme = SplitScheme(kind="single", train_fraction=0.5, repeats=5, seed=1)
        summary = repeat_splits(small_ds, RidgeSpec(), scheme)
        assert len(summary.results) == 5
        assert np.isfinite(summary.theta_sd)
        assert summary.r2_y_rel_mean is not None
        payload = summary.to_dict()
        assert len(payload["repeats"]) == 5

    def test_duplicate_repeat_labels_rejected(self, small_ds):
        scheme = SplitScheme(kind="single", train_fraction=0.5, repeats=2, seed=1)
        with pytest.raises(ConfigError):
            repeat_splits(small_ds, RidgeSpec(), scheme, repeat_labels=["a", "a"])

    def test_single_repeat_rejected(self, small_ds):
        scheme = SplitScheme(kind="single", train_fraction=0.5, repeats=1, seed=1)
        with pytest.raises(ConfigError):
            repeat_splits(small_ds, RidgeSpec(), scheme)


class TestOrthogonality:
    def test_orthogonal_score_is_insensitive(self, paper_scale_ds):
        dl, dm = orthogonality_check(paper_scale_ds, t=0.1)
        assert abs(dl) <= 0.05
        assert abs(dm) <= 0.05

    def test_naive_score_is_sensitive(self, paper_scale_ds):
        dl, dm = orthogonality_check(paper_scale_ds, t=0.1, score="naive")
        assert abs(dl) > 0.2
        assert abs(dm) > 0.2

    def test_random_directions_supported(self, small_ds):
        dl, dm = orthogonality_check(small_ds, t=0.1, direction="random", seed=3)
        assert np.isfinite(dl) and np.isfinite(dm)

    def test_zero_scale_rejected(self, small_ds):
        with pytest.raises(ConfigError):
            orthogonality_check(small_ds, t=0.0)

    def test_requires_oracle(self, small_ds):
        bare = dataclasses.replace(small_ds, oracle=None)
        with pytest.raises(MissingOracleError):
            orthogonality_check(bare)


class _ConstantLearner(FittedLearner):
    def __init__(self, y_mean, d_mean):
        super().__init__(tag="constant", schema=tuple())
        self.y_mean, self.d_mean = y_mean, d_mean

    def check_schema(self, ds):
        pass

    def _predict_arrays(self, ds):
        return np.full(ds.n, self.y_mean), np.full(ds.n, self.d_mean)


class TestRateDiagnostic:
    def test_oracle_learner_gives_zero(self, small_ds):
        assert rate_diagnostic(oracle_preds(small_ds), small_ds.oracle, small_ds.n) == 0.0

    def test_parametric_learner_rate_decreases(self):
        values = []
        scheme = SplitScheme(kind="single", train_fraction=0.5, seed=8)
        for n in (1000, 4000, 16000):
            ds = generate(three_modality_config(n=n, seed=500 + n))
            res = run_split(ds, RidgeSpec(penalty=1e-6), scheme)
            values.append(res.diagnostics.rate_product)
        assert values[0] > values[1] > values[2]

    def test_constant_learner_rate_grows(self):
        values = []
        for n in (1000, 4000, 16000):
            ds = generate(three_modality_config(n=n, seed=600 + n))
            learner = _ConstantLearner(float(ds.y.mean()), float(ds.d.mean()))
            preds = learner.predict(ds)
            values.append(rate_diagnostic(preds, ds.oracle, ds.n))
        assert values[2] > values[1] > values[0]
        # non-vanishing bias grows like sqrt(n): quadrupling n roughly doubles it
        assert values[1] / values[0] == pytest.approx(2.0, rel=0.2)

    def test_missing_oracle(self, small_ds):
        with pytest.raises(MissingOracleError):
            rate_diagnostic(oracle_preds(small_ds), None, small_ds.n)
