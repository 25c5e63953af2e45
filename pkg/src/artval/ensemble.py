"""Two-stage stacking: boosted-tree predictions folded out-of-sample, then a
meta learner over {stage-1 prediction, log low estimate, log high estimate}."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import boost
from . import evaluate as ev

META_COLUMNS = ["oof_log_pred", "estimate_low_log", "estimate_high_log"]


class EnsembleError(ValueError):
    pass


@dataclass
class StackConfig:
    k_folds: int = 5
    base_params: boost.BoostParams = field(default_factory=boost.BoostParams)
    meta_params: boost.BoostParams = field(
        default_factory=lambda: boost.BoostParams(n_rounds=200, max_depth=3)
    )
    seed: int = 0

    def __post_init__(self):
        if self.k_folds < 2:
            raise EnsembleError("k_folds must be >= 2")


def fold_assignment(n, k_folds, seed):
    rng = np.random.default_rng(seed)
    return rng.permutation(n) % k_folds


def oof_predictions(X_train, y_train, X_test, config: StackConfig):
    """Out-of-fold stage-1 predictions for training rows; K-model average on test.

    The caller must pass a design matrix *without* the estimate columns; the
    stack only sees expert estimates at stage 2.
    """
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    n = len(y_train)
    fold = fold_assignment(n, config.k_folds, config.seed)
    counts = np.bincount(fold, minlength=config.k_folds)
    if counts.min() < 1 or n - counts.max() < 2:
        raise EnsembleError(f"fold leaves {n - counts.max()} training rows; reduce k_folds")
    oof = np.empty(n)
    test_pred = np.zeros(len(X_test))
    for k in range(config.k_folds):
        tr = fold != k
        params = boost.BoostParams(**{**config.base_params.__dict__, "seed": config.base_params.seed + k})
        model = boost.fit_boost(X_train[tr], y_train[tr], params)
        oof[fold == k] = model.predict(X_train[fold == k])
        test_pred += model.predict(X_test) / config.k_folds
    return oof, test_pred


@dataclass
class StackModel:
    meta: boost.BoostModel
    config: StackConfig

    def predict(self, stage1_pred, estimate_low, estimate_high) -> np.ndarray:
        return self.meta.predict(_meta_matrix(stage1_pred, estimate_low, estimate_high))


def _meta_matrix(stage1_pred, estimate_low, estimate_high) -> np.ndarray:
    lo = np.log(np.asarray(estimate_low, dtype=float))
    hi = np.log(np.asarray(estimate_high, dtype=float))
    return np.column_stack([np.asarray(stage1_pred, dtype=float), lo, hi])


def fit_stack(oof, estimate_low, estimate_high, y, config: StackConfig = None) -> StackModel:
    """Meta learner over exactly the three stacked inputs."""
    config = config or StackConfig()
    M = _meta_matrix(oof, estimate_low, estimate_high)
    meta = boost.fit_boost(M, np.asarray(y, dtype=float), config.meta_params, columns=META_COLUMNS)
    return StackModel(meta=meta, config=config)


def estimates_only_model(estimate_low, estimate_high, y, params: boost.BoostParams = None):
    """The expert benchmark: boost on {log low, log high} alone."""
    params = params or boost.BoostParams(n_rounds=200, max_depth=3)
    lo = np.log(np.asarray(estimate_low, dtype=float))
    hi = np.log(np.asarray(estimate_high, dtype=float))
    X = np.column_stack([lo, hi])
    return boost.fit_boost(X, np.asarray(y, dtype=float), params, columns=["estimate_low_log", "estimate_high_log"])


def stack_report(stack_pred, est_only_pred, y_true_log, is_fresh, n_deciles=10):
    """Stratified metrics for the stack plus a tail-calibration comparison."""
    rep = ev.stratified_report(y_true_log, stack_pred, is_fresh, model_tag="stack")
    base_rep = ev.stratified_report(y_true_log, est_only_pred, is_fresh, model_tag="estimates_only")
    stack_dec = ev.residual_deciles(y_true_log, stack_pred, n_deciles)
    base_dec = ev.residual_deciles(y_true_log, est_only_pred, n_deciles)
    return {
        "stack": rep.to_doc(),
        "estimates_only": base_rep.to_doc(),
        "stack_deciles": stack_dec,
        "estimates_only_deciles": base_dec,
    }


def shap_summary(stack: StackModel, stage1_pred, estimate_low, estimate_high, group_by=None):
    """Per-feature signed contributions; optional per-category means."""
    M = _meta_matrix(stage1_pred, estimate_low, estimate_high)
    phi, base = boost.shap_values(stack.meta, M)
    out = {
        "base_value": float(base),
        "features": {
            name: {
                "mean": float(phi[:, j].mean()),
                "mean_abs": float(np.abs(phi[:, j]).mean()),
                "values": phi[:, j].tolist(),
            }
            for j, name in enumerate(META_COLUMNS)
        },
    }
    if group_by is not None:
        groups = np.asarray(group_by)
        by_group = {}
        for g in sorted(set(groups.tolist())):
            mask = groups == g
            by_group[str(g)] = {
                name: float(phi[mask, j].mean()) for j, name in enumerate(META_COLUMNS)
            }
        out["by_group"] = by_group
    return out
