import itertools
import math

import numpy as np
import pytest

from artval import boost, ensemble


def _small_params(rounds=40, depth=3):
    return boost.BoostParams(n_rounds=rounds, max_depth=depth, subsample=1.0)


class TestOofPredictions:
    def test_leave_one_out_matches_refit(self, rng):
        X = rng.normal(size=(5, 2))
        y = X @ np.array([1.0, -1.0]) + 0.1 * rng.normal(size=5)
        cfg = ensemble.StackConfig(
            k_folds=5, base_params=_small_params(10, 2), seed=0
        )
        oof, _ = ensemble.oof_predictions(X, y, X[:1], cfg)
        fold = ensemble.fold_assignment(5, 5, 0)
        for k in range(5):
            tr = fold != k
            params = boost.BoostParams(
                **{**cfg.base_params.__dict__, "seed": cfg.base_params.seed + k}
            )
            model = boost.fit_boost(X[tr], y[tr], params)
            assert np.allclose(oof[fold == k], model.predict(X[fold == k]))

    def test_constant_y(self, rng):
        X = rng.normal(size=(20, 2))
        cfg = ensemble.StackConfig(base_params=_small_params(5))
        oof, test = ensemble.oof_predictions(X, np.full(20, 4.0), X[:3], cfg)
        assert np.allclose(oof, 4.0) and np.allclose(test, 4.0)

    def test_each_row_predicted_once(self):
        fold = ensemble.fold_assignment(100, 5, 3)
        counts = np.bincount(fold, minlength=5)
        assert counts.sum() == 100 and counts.min() >= 1

    def test_no_leakage_from_test_targets(self, rng):
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        Xte = rng.normal(size=(10, 2))
        cfg = ensemble.StackConfig(base_params=_small_params(10))
        oof1, _ = ensemble.oof_predictions(X, y, Xte, cfg)
        oof2, _ = ensemble.oof_predictions(X, y, Xte * 100, cfg)
        assert np.array_equal(oof1, oof2)

    def test_tiny_fold_rejected(self, rng):
        cfg = ensemble.StackConfig(k_folds=2)
        with pytest.raises(ensemble.EnsembleError, match="fold"):
            ensemble.oof_predictions(rng.normal(size=(2, 2)), rng.normal(size=2), rng.normal(size=(2, 2)), cfg)


class TestFitStack:
    def _data(self, n=300, seed=0, estimates_sufficient=False):
        rng = np.random.default_rng(seed)
        y = rng.normal(11.0, 1.0, size=n)
        if estimates_sufficient:
            oof = rng.normal(size=n)  # stage-1 predictions carry no signal
        else:
            oof = y + rng.normal(0, 0.3, size=n)
        mid = np.exp(y + rng.normal(0, 0.05, size=n))
        return oof, mid * 0.85, mid * 1.15, y

    def test_meta_sees_exactly_three_columns(self):
        oof, lo, hi, y = self._data()
        stack = ensemble.fit_stack(oof, lo, hi, y, ensemble.StackConfig(meta_params=_small_params()))
        assert stack.meta.n_features == 3
        assert stack.meta.columns == ensemble.META_COLUMNS

    def test_estimates_sufficient_oof_shap_near_zero(self):
        oof, lo, hi, y = self._data(estimates_sufficient=True)
        stack = ensemble.fit_stack(oof, lo, hi, y, ensemble.StackConfig(meta_params=_small_params()))
        doc = ensemble.shap_summary(stack, oof, lo, hi)
        oof_abs = doc["features"]["oof_log_pred"]["mean_abs"]
        est_abs = doc["features"]["estimate_low_log"]["mean_abs"]
        assert oof_abs < 0.2 * est_abs

    def test_predictions_finite(self):
        oof, lo, hi, y = self._data()
        stack = ensemble.fit_stack(oof, lo, hi, y, ensemble.StackConfig(meta_params=_small_params()))
        assert np.all(np.isfinite(stack.predict(oof, lo, hi)))


class TestStackReport:
    def test_tail_calibration_on_biased_estimates(self):
        rng = np.random.default_rng(0)
        n = 2000
        y = rng.normal(11.0, 1.0, size=n)
        # tail-biased estimates: overshoot cheap lots, undershoot dear ones
        pct = y.argsort().argsort() / (n - 1)
        # noisy estimates: the realized-price tails are partly noise, so an
        # estimates-only model regresses to the mean there
        mid_log = y - 0.3 * (2 * pct - 1) + rng.normal(0, 0.4, size=n)
        lo, hi = np.exp(mid_log) * 0.85, np.exp(mid_log) * 1.15
        oof = y + rng.normal(0, 0.15, size=n)  # stage 1 is unbiased and sharper
        tr = slice(0, 1500)
        te = slice(1500, n)
        cfg = ensemble.StackConfig(meta_params=_small_params(100))
        stack = ensemble.fit_stack(oof[tr], lo[tr], hi[tr], y[tr], cfg)
        stack_pred = stack.predict(oof[te], lo[te], hi[te])
        est_model = ensemble.estimates_only_model(lo[tr], hi[tr], y[tr], _small_params(100))
        est_pred = est_model.predict(np.column_stack([np.log(lo[te]), np.log(hi[te])]))
        rep = ensemble.stack_report(stack_pred, est_pred, y[te], np.zeros(n - 1500, bool))
        for tail in (0, -1):
            assert abs(rep["stack_deciles"][tail]["mean_residual"]) <= abs(
                rep["estimates_only_deciles"][tail]["mean_residual"]
            )

    def test_report_shapes(self, rng):
        y = rng.normal(size=100)
        rep = ensemble.stack_report(y, y, y, rng.random(100) > 0.5)
        assert set(rep) == {"stack", "estimates_only", "stack_deciles", "estimates_only_deciles"}
        assert len(rep["stack_deciles"]) == 10


class TestShapSummary:
    def test_local_accuracy(self, rng):
        y = rng.normal(11.0, 1.0, size=200)
        oof = y + rng.normal(0, 0.3, size=200)
        lo, hi = np.exp(y) * 0.8, np.exp(y) * 1.2
        stack = ensemble.fit_stack(oof, lo, hi, y, ensemble.StackConfig(meta_params=_small_params()))
        M = np.column_stack([oof, np.log(lo), np.log(hi)])
        phi, base = boost.shap_values(stack.meta, M)
        assert np.allclose(base + phi.sum(axis=1), stack.meta.margin(M), atol=1e-8)

    def test_exhaustive_three_feature_oracle(self, rng):
        y = rng.normal(11.0, 1.0, size=150)
        oof = y + rng.normal(0, 0.3, size=150)
        lo, hi = np.exp(y) * 0.8, np.exp(y) * 1.2
        stack = ensemble.fit_stack(
            oof, lo, hi, y, ensemble.StackConfig(meta_params=_small_params(10, 3))
        )
        M = np.column_stack([oof, np.log(lo), np.log(hi)])
        x = M[0]
        phi, _ = boost.tree_shap(stack.meta, x)

        def cond(tree, subset):
            def walk(j):
                if tree.feature[j] < 0:
                    return tree.value[j]
                f = tree.feature[j]
                if f in subset:
                    return walk(tree.left[j] if x[f] < tree.threshold[j] else tree.right[j])
                wl = tree.cover[tree.left[j]] / tree.cover[j]
                return wl * walk(tree.left[j]) + (1 - wl) * walk(tree.right[j])

            return walk(0)

        expected = np.zeros(3)
        for tree in stack.meta.trees:
            for i in range(3):
                others = [f for f in range(3) if f != i]
                for r in range(3):
                    for S in itertools.combinations(others, r):
                        w = math.factorial(len(S)) * math.factorial(2 - len(S)) / 6
                        expected[i] += w * (cond(tree, set(S) | {i}) - cond(tree, set(S)))
        expected *= stack.meta.params.learning_rate
        assert np.allclose(phi, expected, atol=1e-6)

    def test_group_means_emitted(self, rng):
        y = rng.normal(11.0, 1.0, size=100)
        oof = y
        lo, hi = np.exp(y) * 0.8, np.exp(y) * 1.2
        stack = ensemble.fit_stack(oof, lo, hi, y, ensemble.StackConfig(meta_params=_small_params(5)))
        doc = ensemble.shap_summary(stack, oof, lo, hi, group_by=["a"] * 50 + ["b"] * 50)
        assert set(doc["by_group"]) == {"a", "b"}
