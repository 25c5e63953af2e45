"""Out-of-sample evaluation: temporal splits, stratified metrics, importance,
ablations, residual diagnostics, and classification reports.

MAPE convention: percent errors are computed on *log prices*
(100 * mean|log_pred - log_true| / |log_true|), the scale on which reported
magnitudes of a few percent are meaningful for auction prices spanning many
orders of magnitude. A raw-price MAPE is emitted alongside as a secondary
column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import featurize as fz
from . import net as nn


class EvalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# splits and metrics


def temporal_split(rows, train_years, test_years):
    """Split panel rows by sale year into disjoint train/test periods."""
    a, b = train_years
    c, d = test_years
    if not (a <= b and c <= d):
        raise EvalError("year ranges must be ordered")
    if b >= c:
        raise EvalError(f"train years {train_years} overlap test years {test_years}")
    train = [r for r in rows if a <= r.sale_year <= b]
    test = [r for r in rows if c <= r.sale_year <= d]
    if not test:
        raise EvalError(f"no rows in test range {test_years}")
    if not train:
        raise EvalError(f"no rows in train range {train_years}")
    return train, test


def r2_log(y_true_log, y_pred_log) -> float:
    """1 - SSE/SST in log space, SST about the evaluation-set mean."""
    y = np.asarray(y_true_log, dtype=float)
    p = np.asarray(y_pred_log, dtype=float)
    if len(y) == 0:
        raise EvalError("empty evaluation set")
    sse = float(np.sum((y - p) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else -np.inf)


def mape(y_true_log, y_pred_log) -> float:
    """Percent error on log prices (see module docstring)."""
    y = np.asarray(y_true_log, dtype=float)
    p = np.asarray(y_pred_log, dtype=float)
    if len(y) == 0:
        raise EvalError("empty evaluation set")
    return 100.0 * float(np.mean(np.abs(p - y) / np.abs(y)))


def mape_raw(y_true_log, y_pred_log) -> float:
    y = np.exp(np.asarray(y_true_log, dtype=float))
    p = np.exp(np.asarray(y_pred_log, dtype=float))
    return 100.0 * float(np.mean(np.abs(p - y) / y))


def mae_log(y_true_log, y_pred_log) -> float:
    y = np.asarray(y_true_log, dtype=float)
    p = np.asarray(y_pred_log, dtype=float)
    if len(y) == 0:
        raise EvalError("empty evaluation set")
    return float(np.mean(np.abs(p - y)))


@dataclass
class EvalReport:
    model_tag: str
    strata: dict  # name -> {r2, mape_pct, mape_raw_pct, mae_log, n}
    residuals: np.ndarray  # log-space, full evaluation set
    flags: list = field(default_factory=list)

    def to_doc(self) -> dict:
        return {"model": self.model_tag, "strata": self.strata, "flags": self.flags}


def stratified_report(y_true_log, y_pred_log, is_fresh, model_tag="model") -> EvalReport:
    """Metrics for all rows and the fresh / previously-auctioned strata."""
    y = np.asarray(y_true_log, dtype=float)
    p = np.asarray(y_pred_log, dtype=float)
    fresh = np.asarray(is_fresh, dtype=bool)
    strata = {}
    flags = []
    for name, mask in (("all", np.ones(len(y), bool)), ("previous", ~fresh), ("fresh", fresh)):
        if not mask.any():
            strata[name] = {"r2": None, "mape_pct": None, "mape_raw_pct": None, "mae_log": None, "n": 0}
            flags.append(f"stratum {name} is empty")
            continue
        strata[name] = {
            "r2": r2_log(y[mask], p[mask]),
            "mape_pct": mape(y[mask], p[mask]),
            "mape_raw_pct": mape_raw(y[mask], p[mask]),
            "mae_log": mae_log(y[mask], p[mask]),
            "n": int(mask.sum()),
        }
    return EvalReport(model_tag=model_tag, strata=strata, residuals=y - p, flags=flags)


# ---------------------------------------------------------------------------
# heterogeneity and importance


def subgroup_gain(abs_err_tab, abs_err_img, groups, n_boot=200, seed=0, wide_ci=0.2):
    """Relative MAE reduction (tab - img)/tab per group, with a bootstrap
    confidence flag for thin groups."""
    et = np.asarray(abs_err_tab, dtype=float)
    ei = np.asarray(abs_err_img, dtype=float)
    groups = np.asarray(groups)
    out = {}
    for g in sorted(set(groups.tolist())):
        mask = groups == g
        mt, mi = et[mask].mean(), ei[mask].mean()
        gain = (mt - mi) / mt if mt > 0 else 0.0
        rng = np.random.default_rng([seed, abs(hash(str(g))) % 2**31])
        n = int(mask.sum())
        boots = []
        for _ in range(n_boot):
            idx = rng.integers(0, n, size=n)
            bt = et[mask][idx].mean()
            boots.append((bt - ei[mask][idx].mean()) / bt if bt > 0 else 0.0)
        lo, hi = np.percentile(boots, [2.5, 97.5])
        out[g] = {
            "gain": float(gain),
            "n": n,
            "ci_low": float(lo),
            "ci_high": float(hi),
            "low_confidence": bool(hi - lo > wide_ci or n < 30),
        }
    return out


def permutation_importance(predict_fn, X, y, blocks=None, n_repeats=5, seed=0):
    """Mean MSE increase when shuffling each feature block on the test set.

    One-hot columns of a single source variable are permuted jointly;
    permuting them independently would fabricate impossible rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if blocks is None:
        blocks = [(str(j), [j]) for j in range(X.shape[1])]
    base_mse = float(np.mean((predict_fn(X) - y) ** 2))
    out = {}
    for b_idx, (name, cols) in enumerate(blocks):
        deltas = []
        for rep in range(n_repeats):
            rng = np.random.default_rng([seed, b_idx, rep])
            perm = rng.permutation(len(X))
            Xp = X.copy()
            Xp[:, cols] = X[perm][:, cols]
            deltas.append(float(np.mean((predict_fn(Xp) - y) ** 2)) - base_mse)
        deltas = np.asarray(deltas)
        out[name] = {
            "mean_delta_mse": float(deltas.mean()),
            "std": float(deltas.std(ddof=1)) if n_repeats > 1 else 0.0,
            "n_repeats": n_repeats,
        }
    return out


# ---------------------------------------------------------------------------
# ablation runner

ABLATION_CONFIGS = ("baseline", "no_object", "no_artist", "minimal")


def ablation_columns(matrix: fz.FeatureMatrix, config: str) -> fz.FeatureMatrix:
    if config == "baseline":
        return matrix
    if config == "no_object":
        keep = [t for t in fz.GROUP_TAGS if t != "object" and t in set(matrix.groups.values())]
        return fz.select_groups(matrix, keep)
    if config == "no_artist":
        keep = [t for t in fz.GROUP_TAGS if t != "artist" and t in set(matrix.groups.values())]
        return fz.select_groups(matrix, keep)
    if config == "minimal":
        names = [
            n
            for n in matrix.column_names
            if matrix.groups[n] == "artist" or n in ("sale_year", "has_prev")
        ]
        if not names:
            raise EvalError("minimal config found no artist/year/flag columns")
        return matrix.subset(names)
    raise EvalError(f"unknown ablation config {config!r}")


def ablation_run(
    encoder,
    train_rows,
    test_rows,
    emb_table,
    d_images=(10, 1000),
    train_config: nn.TrainConfig = None,
    configs=ABLATION_CONFIGS,
):
    """Retrain the multi-modal net per feature-group configuration.

    Returns one row per (config, d_image) with stratified test R^2.
    """
    train_config = train_config or nn.TrainConfig(epochs=20)
    Xtr_full = fz.transform(encoder, train_rows)
    Xte_full = fz.transform(encoder, test_rows)
    ytr = np.array([r.log_price for r in train_rows])
    yte = np.array([r.log_price for r in test_rows])
    Etr = emb_table.matrix([r.lot_id for r in train_rows])
    Ete = emb_table.matrix([r.lot_id for r in test_rows])
    years = np.array([r.sale_year for r in train_rows])
    fresh_te = np.array([r.is_fresh for r in test_rows])

    results = []
    for config in configs:
        Xtr = ablation_columns(Xtr_full, config)
        Xte = Xte_full.subset(Xtr.column_names)
        for d_image in d_images:
            model = nn.MultiModalNet(
                n_feature=Xtr.values.shape[1],
                d_backbone=Etr.shape[1],
                d_image=d_image,
                dropout_p=train_config.dropout_p,
                seed=train_config.seed,
            )
            nn.train(model, Xtr.values, ytr, train_config, image_e=Etr, years=years)
            pred = model.forward(Xte.values, Ete, train=False)
            rep = stratified_report(yte, pred, fresh_te, model_tag=f"{config}/d{d_image}")
            results.append(
                {
                    "config": config,
                    "d_image": d_image,
                    "n_columns": Xtr.values.shape[1],
                    "r2_all": rep.strata["all"]["r2"],
                    "r2_previous": rep.strata["previous"]["r2"],
                    "r2_fresh": rep.strata["fresh"]["r2"],
                }
            )
    return results


# ---------------------------------------------------------------------------
# residual analytics


def estimation_error_target(rows) -> np.ndarray:
    """log(price) - log(midpoint estimate); the expert's estimation error."""
    out = []
    for r in rows:
        if r.log_price is None or r.estimate_low is None or r.estimate_high is None:
            raise EvalError(f"row {r.lot_id}: needs price and both estimates")
        out.append(r.log_price - np.log((r.estimate_low + r.estimate_high) / 2.0))
    return np.asarray(out)


def residual_deciles(y_true, y_pred, n_deciles=10):
    """Mean/median residual per realized-value decile (ties kept stable)."""
    y = np.asarray(y_true, dtype=float)
    resid = y - np.asarray(y_pred, dtype=float)
    order = np.argsort(y, kind="stable")
    out = []
    for d, chunk in enumerate(np.array_split(order, n_deciles)):
        out.append(
            {
                "decile": d + 1,
                "n": len(chunk),
                "mean_residual": float(resid[chunk].mean()),
                "median_residual": float(np.median(resid[chunk])),
            }
        )
    return out


def grouped_residual_bias(residuals, groups, top_k=10):
    """Most under- and overpredicted groups by mean log residual."""
    resid = np.asarray(residuals, dtype=float)
    groups = np.asarray(groups)
    means = []
    for g in sorted(set(groups.tolist())):
        mask = groups == g
        means.append({"group": g, "mean_residual": float(resid[mask].mean()), "n": int(mask.sum())})
    under = sorted(means, key=lambda m: (-m["mean_residual"], m["group"]))[:top_k]
    over = sorted(means, key=lambda m: (m["mean_residual"], m["group"]))[:top_k]
    return {"underpredicted": under, "overpredicted": over}


# ---------------------------------------------------------------------------
# classification


@dataclass
class ClassificationReport:
    tp: int
    fp: int
    tn: int
    fn: int
    recall_pos: float
    recall_neg: float
    accuracy: float
    roc_points: list  # (fpr, tpr) pairs over the threshold sweep
    auc: float

    def to_doc(self) -> dict:
        return {
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "recall_pos": self.recall_pos,
            "recall_neg": self.recall_neg,
            "accuracy": self.accuracy,
            "auc": self.auc,
        }


def roc_auc(scores, labels, threshold=0.5) -> ClassificationReport:
    """Full-sweep ROC with trapezoid AUC (ties averaged, Mann-Whitney U)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if set(np.unique(y)) - {0, 1}:
        raise EvalError("labels must be 0/1")
    n_pos, n_neg = int(y.sum()), int(len(y) - y.sum())
    if n_pos == 0 or n_neg == 0:
        raise EvalError("need both classes for ROC")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    points = [(0.0, 0.0)]
    tp_c = fp_c = 0
    i = 0
    while i < len(s_sorted):
        j = i
        while j < len(s_sorted) and s_sorted[j] == s_sorted[i]:
            j += 1
        tp_c += int(y_sorted[i:j].sum())
        fp_c += (j - i) - int(y_sorted[i:j].sum())
        points.append((fp_c / n_neg, tp_c / n_pos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0

    pred = (s >= threshold).astype(int)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    return ClassificationReport(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        recall_pos=tp / n_pos,
        recall_neg=tn / n_neg,
        accuracy=(tp + tn) / len(y),
        roc_points=points,
        auc=float(auc),
    )


def error_type_distributions(scores, labels, feature_values, threshold=0.5):
    """Summary of a feature's distribution per confusion cell."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    f = np.asarray(feature_values, dtype=float)
    pred = (s >= threshold).astype(int)
    cells = {
        "tp": (pred == 1) & (y == 1),
        "fp": (pred == 1) & (y == 0),
        "tn": (pred == 0) & (y == 0),
        "fn": (pred == 0) & (y == 1),
    }
    out = {}
    for name, mask in cells.items():
        if not mask.any():
            out[name] = {"n": 0}
            continue
        vals = f[mask]
        out[name] = {
            "n": int(mask.sum()),
            "mean": float(vals.mean()),
            "median": float(np.median(vals)),
            "min": float(vals.min()),
            "max": float(vals.max()),
        }
    return out
