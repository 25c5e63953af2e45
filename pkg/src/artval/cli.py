"""Command-line orchestration and artifact emission.

Every subcommand writes a resolved ``runconfig.json`` plus a version string
into its output directory so any run can be reproduced from its artifacts.
All randomness is seeded through flags; rerunning a subcommand with the same
inputs and seed produces byte-identical metrics files.

Exit codes: 0 ok, 2 usage, 3 missing file/artifact, 4 schema or format
mismatch, 5 data/model error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import boost, embed, ensemble, linmod, svgplot, synth
from . import evaluate as ev
from . import featurize as fz
from . import net as nn
from . import panel as pnl

MODELS = ("hedonic", "ridge", "lasso", "boost", "net", "mmnet")

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_DATA = 5

_SCHEMA_ERRORS = (embed.EmbeddingError,)


class CliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_runconfig(out: Path, args) -> None:
    doc = {
        "tool": "artval",
        "version": f"artval-{__version__}",
        "subcommand": args.subcommand,
        "args": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "subcommand")},
    }
    _write_json(out / "runconfig.json", doc)
    (out / "VERSION").write_text(f"artval-{__version__}\n", encoding="utf-8")


def _parse_years(text: str):
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise CliError(f"year range must look like A:B, got {text!r}") from None


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing input: {p}")
    return p


def _sold_rows(rows):
    return [r for r in rows if r.sold and r.log_price is not None]


def _targets(rows, target: str) -> np.ndarray:
    if target == "esterr":
        return ev.estimation_error_target(rows)
    return np.array([r.log_price for r in rows])


def _fit_features(train_rows, args):
    include_estimates = args.target == "esterr" or getattr(args, "with_estimates", False)
    encoder = fz.fit_encoder(
        train_rows,
        include_prev_price=(not args.no_prev_price) and args.target != "esterr",
        include_estimates=include_estimates,
    )
    return encoder


def _write_metrics(out: Path, report: ev.EvalReport):
    _write_json(out / "metrics.json", report.to_doc())
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "stratum", "n", "r2", "mape_pct", "mape_raw_pct", "mae_log"])
        for name, s in report.strata.items():
            writer.writerow(
                [report.model_tag, name, s["n"], s["r2"], s["mape_pct"], s["mape_raw_pct"], s["mae_log"]]
            )


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    out = _out_dir(args)
    cfg = synth.DGPConfig(
        n_objects=args.n_objects,
        resale_prob=args.resale_prob,
        beta_img=args.beta_img,
        rho=args.rho,
        est_tail_bias=args.est_tail_bias,
        est_pred_coef=args.est_pred_coef,
        seed=args.seed,
    )
    records, table, truth = synth.generate(cfg)
    pnl.write_records(records, out / "records.csv")
    rows = pnl.impute_prev_price(pnl.build_panel(records))
    filtered = pnl.apply_filters(rows, train_end_year=args.train_end_year)
    pnl.write_rows(filtered.rows, out / "panel.csv")
    embed.write_embeddings(table, out / "embeddings.aemb")
    _write_json(out / "truth.json", truth)
    _write_runconfig(out, args)
    print(f"synth: {len(records)} records, {len(filtered.rows)} filtered panel rows -> {out}")


def cmd_prep(args):
    out = _out_dir(args)
    records = pnl.read_records(_require(args.input))
    rows = pnl.impute_prev_price(pnl.build_panel(records))
    filtered = pnl.apply_filters(
        rows,
        train_end_year=args.train_end_year,
        min_price=args.min_price,
        min_cat_count=args.min_cat_count,
    )
    pnl.write_rows(filtered.rows, out / "panel.csv")
    _write_json(out / "category_maps.json", filtered.category_maps)
    _write_runconfig(out, args)
    print(f"prep: {len(filtered.rows)} rows -> {out / 'panel.csv'}")


def _load_embeddings_for(args, rows):
    table = embed.read_embeddings(_require(args.embeddings))
    return table.matrix([r.lot_id for r in rows]), table


def cmd_train(args):
    out = _out_dir(args)
    rows = pnl.read_rows(_require(args.panel))
    a, b = _parse_years(args.train_years)
    train_rows = [r for r in _sold_rows(rows) if a <= r.sale_year <= b]
    if not train_rows:
        raise CliError(f"no sold rows in training years {args.train_years}")
    encoder = _fit_features(train_rows, args)
    X = fz.transform(encoder, train_rows)
    if args.model == "ridge" and args.poly:
        X = fz.polynomial_expand(X)
    y = _targets(train_rows, args.target)
    years = np.array([r.sale_year for r in train_rows])

    if args.model == "hedonic":
        fit = linmod.fit_ols(X.values, y, columns=X.column_names, allow_rank_deficient=True)
        _save_linear(out, fit, X.column_names)
    elif args.model == "ridge":
        fit = linmod.fit_ridge(X.values, y, lam=args.ridge_lambda, columns=X.column_names)
        _save_linear(out, fit, X.column_names)
    elif args.model == "lasso":
        fit = linmod.fit_lasso_cv(X.values, y, seed=args.seed, columns=X.column_names)
        _save_linear(out, fit, X.column_names)
    elif args.model == "boost":
        params = boost.BoostParams(n_rounds=args.rounds, max_depth=args.max_depth, seed=args.seed)
        model = boost.fit_boost(X.values, y, params, columns=X.column_names)
        model.save(out / "model.boost.json")
    elif args.model in ("net", "mmnet"):
        emb_matrix = None
        d_backbone = 0
        if args.model == "mmnet":
            if not args.embeddings:
                raise CliError("mmnet requires --embeddings")
            emb_matrix, _ = _load_embeddings_for(args, train_rows)
            d_backbone = emb_matrix.shape[1]
        cfg = nn.TrainConfig(
            learning_rate=args.lr,
            batch_size=args.batch_size,
            epochs=args.epochs,
            dropout_p=args.dropout,
            seed=args.seed,
            d_image=args.d_image if args.model == "mmnet" else 0,
        )
        model = nn.MultiModalNet(
            n_feature=X.values.shape[1],
            d_backbone=d_backbone,
            d_image=cfg.d_image,
            dropout_p=cfg.dropout_p,
            seed=cfg.seed,
        )
        result = nn.train(model, X.values, y, cfg, image_e=emb_matrix, years=years)
        model.save(out / "model.mmnet")
        _write_json(
            out / "training.json",
            {
                "train_curve": result.train_curve,
                "val_curve": result.val_curve,
                "best_epoch": result.best_epoch,
                "diverged": result.diverged,
            },
        )
    else:
        raise CliError(f"unknown model {args.model!r}")

    (out / "encoder.json").write_text(encoder.to_json(), encoding="utf-8")
    _write_runconfig(out, args)
    print(f"train: {args.model} on {len(train_rows)} rows -> {out}")


def _save_linear(out: Path, fit: linmod.LinearFit, columns):
    _write_json(
        out / "model.linear.json",
        {
            "format": "artval-linear",
            "version": 1,
            "method": fit.method,
            "lambda": fit.lam,
            "intercept": fit.intercept,
            "beta": fit.beta.tolist(),
            "columns": list(columns),
        },
    )


def _load_model_dir(model_dir: Path):
    run = json.loads((_require(model_dir / "runconfig.json")).read_text(encoding="utf-8"))
    train_args = run["args"]
    encoder = fz.Encoder.from_json(_require(model_dir / "encoder.json").read_text(encoding="utf-8"))
    model_name = train_args["model"]
    if model_name in ("hedonic", "ridge", "lasso"):
        doc = json.loads(_require(model_dir / "model.linear.json").read_text(encoding="utf-8"))
        if doc.get("format") != "artval-linear":
            raise boost.BoostError(f"{model_dir}: unrecognized linear model document")
        fit = linmod.LinearFit(
            beta=np.array(doc["beta"]),
            intercept=doc["intercept"],
            method=doc["method"],
            lam=doc["lambda"],
            training_columns=doc["columns"],
        )
        return encoder, train_args, fit
    if model_name == "boost":
        return encoder, train_args, boost.BoostModel.load(_require(model_dir / "model.boost.json"))
    return encoder, train_args, nn.MultiModalNet.load(_require(model_dir / "model.mmnet"))


def _predict_with(model, train_args, encoder, rows, args):
    X = fz.transform(encoder, rows)
    if train_args["model"] == "ridge" and train_args.get("poly"):
        X = fz.polynomial_expand(X)
    if isinstance(model, nn.MultiModalNet):
        emb_matrix = None
        if model.config["d_image"]:
            if not args.embeddings:
                raise CliError("model has an image branch; pass --embeddings")
            emb_matrix, _ = _load_embeddings_for(args, rows)
        return model.forward(X.values, emb_matrix, train=False)
    return model.predict(X.values)


def cmd_eval(args):
    out = _out_dir(args)
    rows = pnl.read_rows(_require(args.panel))
    c, d = _parse_years(args.test_years)
    test_rows = [r for r in _sold_rows(rows) if c <= r.sale_year <= d]
    if not test_rows:
        raise CliError(f"no sold rows in test years {args.test_years}")
    encoder, train_args, model = _load_model_dir(Path(args.model_dir))
    pred = _predict_with(model, train_args, encoder, test_rows, args)
    y = _targets(test_rows, train_args.get("target", "price"))
    fresh = np.array([r.is_fresh for r in test_rows])
    report = ev.stratified_report(y, pred, fresh, model_tag=train_args["model"])
    _write_metrics(out, report)

    est_resid = None
    if train_args.get("target", "price") == "price":
        mid = np.array([(r.estimate_low + r.estimate_high) / 2.0 for r in test_rows])
        est_resid = y - np.log(mid)
    series = [("model", report.residuals)]
    if est_resid is not None:
        series.append(("estimate midpoint", est_resid))
    svgplot.write(
        svgplot.histogram(series, title="Residuals (log space)", x_label="residual"),
        out / "residual_hist.svg",
    )
    deciles = ev.residual_deciles(y, pred)
    svgplot.write(
        svgplot.line_chart(
            [
                ("mean", [d_["decile"] for d_ in deciles], [d_["mean_residual"] for d_ in deciles]),
                ("median", [d_["decile"] for d_ in deciles], [d_["median_residual"] for d_ in deciles]),
            ],
            title="Residual by realized-value decile",
            x_label="decile",
            y_label="residual",
        ),
        out / "residual_deciles.svg",
    )
    _write_json(out / "residual_deciles.json", deciles)

    if args.compare_dir:
        enc2, ta2, model2 = _load_model_dir(Path(args.compare_dir))
        pred2 = _predict_with(model2, ta2, enc2, test_rows, args)
        gains = {}
        for dim in ("category", "medium"):
            groups = [getattr(r, dim) for r in test_rows]
            gains[dim] = ev.subgroup_gain(
                np.abs(y - pred2), np.abs(y - pred), groups, seed=args.seed
            )
            items = sorted(gains[dim].items())
            svgplot.write(
                svgplot.bar_chart(
                    [k for k, _ in items],
                    [v["gain"] for _, v in items],
                    title=f"Relative MAE gain by {dim}",
                    y_label="(MAE_base - MAE_model)/MAE_base",
                ),
                out / f"subgroup_gain_{dim}.svg",
            )
        _write_json(out / "subgroup_gains.json", gains)
    _write_runconfig(out, args)
    print(f"eval: {report.model_tag} on {len(test_rows)} rows -> {out}")


def cmd_importance(args):
    out = _out_dir(args)
    rows = pnl.read_rows(_require(args.panel))
    c, d = _parse_years(args.test_years)
    test_rows = [r for r in _sold_rows(rows) if c <= r.sale_year <= d]
    encoder, train_args, model = _load_model_dir(Path(args.model_dir))
    if not isinstance(model, boost.BoostModel):
        raise CliError("importance requires a boost model directory")
    X = fz.transform(encoder, test_rows)
    y = _targets(test_rows, train_args.get("target", "price"))

    gain = boost.gain_importance(model)
    perm = ev.permutation_importance(
        model.predict, X.values, y, blocks=fz.feature_blocks(X), n_repeats=args.repeats, seed=args.seed
    )
    _write_json(out / "importance.json", {"gain": gain, "permutation": perm})
    with open(out / "importance.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "feature", "value"])
        for k, v in sorted(gain.items()):
            writer.writerow(["gain_total", k, v["total"]])
        for k, v in sorted(perm.items()):
            writer.writerow(["perm_delta_mse", k, v["mean_delta_mse"]])

    top_gain = sorted(gain.items(), key=lambda kv: -kv[1]["total"])[:15]
    svgplot.write(
        svgplot.bar_chart(
            [k for k, _ in top_gain], [v["total"] for _, v in top_gain], title="Gain importance"
        ),
        out / "gain_importance.svg",
    )
    top_perm = sorted(perm.items(), key=lambda kv: -kv[1]["mean_delta_mse"])[:15]
    svgplot.write(
        svgplot.bar_chart(
            [k for k, _ in top_perm],
            [v["mean_delta_mse"] for _, v in top_perm],
            title="Permutation importance (delta MSE)",
        ),
        out / "permutation_importance.svg",
    )
    _write_runconfig(out, args)
    print(f"importance: {len(gain)} split features -> {out}")


def cmd_ablate(args):
    out = _out_dir(args)
    rows = pnl.read_rows(_require(args.panel))
    a, b = _parse_years(args.train_years)
    c, d = _parse_years(args.test_years)
    train_rows = [r for r in _sold_rows(rows) if a <= r.sale_year <= b]
    test_rows = [r for r in _sold_rows(rows) if c <= r.sale_year <= d]
    table = embed.read_embeddings(_require(args.embeddings))
    encoder = fz.fit_encoder(train_rows, include_prev_price=not args.no_prev_price)
    configs = tuple(args.groups.split(",")) if args.groups else ev.ABLATION_CONFIGS
    cfg = nn.TrainConfig(epochs=args.epochs, seed=args.seed, dropout_p=args.dropout)
    results = ev.ablation_run(
        encoder,
        train_rows,
        test_rows,
        table,
        d_images=tuple(int(x) for x in args.d_image.split(",")),
        train_config=cfg,
        configs=configs,
    )
    _write_json(out / "ablation.json", results)
    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "d_image", "n_columns", "r2_all", "r2_previous", "r2_fresh"])
        for r in results:
            writer.writerow([r["config"], r["d_image"], r["n_columns"], r["r2_all"], r["r2_previous"], r["r2_fresh"]])
    _write_runconfig(out, args)
    print(f"ablate: {len(results)} configurations -> {out}")


def cmd_stack(args):
    out = _out_dir(args)
    rows = pnl.read_rows(_require(args.panel))
    a, b = _parse_years(args.train_years)
    c, d = _parse_years(args.test_years)
    train_rows = [r for r in _sold_rows(rows) if a <= r.sale_year <= b]
    test_rows = [r for r in _sold_rows(rows) if c <= r.sale_year <= d]
    encoder = fz.fit_encoder(train_rows, include_prev_price=True, include_estimates=False)
    Xtr = fz.transform(encoder, train_rows).values
    Xte = fz.transform(encoder, test_rows).values
    ytr = np.array([r.log_price for r in train_rows])
    yte = np.array([r.log_price for r in test_rows])
    lo_tr = np.array([r.estimate_low for r in train_rows])
    hi_tr = np.array([r.estimate_high for r in train_rows])
    lo_te = np.array([r.estimate_low for r in test_rows])
    hi_te = np.array([r.estimate_high for r in test_rows])

    cfg = ensemble.StackConfig(
        k_folds=args.folds,
        base_params=boost.BoostParams(n_rounds=args.rounds, seed=args.seed),
        meta_params=boost.BoostParams(n_rounds=args.rounds, max_depth=3, seed=args.seed),
        seed=args.seed,
    )
    oof, stage1_test = ensemble.oof_predictions(Xtr, ytr, Xte, cfg)
    stack = ensemble.fit_stack(oof, lo_tr, hi_tr, ytr, cfg)
    stack_pred = stack.predict(stage1_test, lo_te, hi_te)
    est_model = ensemble.estimates_only_model(lo_tr, hi_tr, ytr, cfg.meta_params)
    est_pred = est_model.predict(np.column_stack([np.log(lo_te), np.log(hi_te)]))
    fresh = np.array([r.is_fresh for r in test_rows])
    report = ensemble.stack_report(stack_pred, est_pred, yte, fresh)
    _write_json(out / "stack_report.json", report)

    xs = [d_["decile"] for d_ in report["stack_deciles"]]
    svgplot.write(
        svgplot.line_chart(
            [
                ("stack", xs, [d_["mean_residual"] for d_ in report["stack_deciles"]]),
                ("estimates only", xs, [d_["mean_residual"] for d_ in report["estimates_only_deciles"]]),
            ],
            title="Mean residual by realized-price decile",
            x_label="decile",
            y_label="mean residual",
        ),
        out / "stack_deciles.svg",
    )
    shap_doc = ensemble.shap_summary(
        stack, stage1_test, lo_te, hi_te, group_by=[r.category for r in test_rows]
    )
    slim = {
        "base_value": shap_doc["base_value"],
        "features": {
            k: {kk: vv for kk, vv in v.items() if kk != "values"}
            for k, v in shap_doc["features"].items()
        },
        "by_group": shap_doc.get("by_group", {}),
    }
    _write_json(out / "stack_shap.json", slim)
    svgplot.write(
        svgplot.bar_chart(
            ensemble.META_COLUMNS,
            [shap_doc["features"][c]["mean_abs"] for c in ensemble.META_COLUMNS],
            title="Mean |SHAP| of stack inputs",
        ),
        out / "stack_shap.svg",
    )
    _write_runconfig(out, args)
    print(f"stack: {len(test_rows)} test rows -> {out}")


def cmd_classify(args):
    out = _out_dir(args)
    rows = pnl.read_rows(_require(args.panel))
    unsold = [r for r in rows if not r.sold]
    sold = [r for r in rows if r.sold]
    if not unsold or not sold:
        raise CliError("classification needs both sold and unsold rows")
    rng = np.random.default_rng(args.seed)
    n = min(len(sold), len(unsold))
    sold = [sold[i] for i in sorted(rng.choice(len(sold), size=n, replace=False))]
    unsold = [unsold[i] for i in sorted(rng.choice(len(unsold), size=n, replace=False))]
    # stratified split preserving the sold/unsold balance
    data, labels = [], []
    for group, label in ((sold, 1), (unsold, 0)):
        perm = rng.permutation(len(group))
        cut = int(round(len(group) * (1 - args.test_frac)))
        for i in perm[:cut]:
            data.append((group[i], label, "train"))
        for i in perm[cut:]:
            data.append((group[i], label, "test"))
    train_rows = [r for r, _, s in data if s == "train"]
    ytr = np.array([l for _, l, s in data if s == "train"], dtype=float)
    test_rows = [r for r, _, s in data if s == "test"]
    yte = np.array([l for _, l, s in data if s == "test"], dtype=float)

    encoder = fz.fit_encoder(train_rows, include_prev_price=True, include_estimates=True)
    Xtr = fz.transform(encoder, train_rows)
    Xte = fz.transform(encoder, test_rows)

    emb_tr = emb_te = None
    d_backbone = 0
    if args.model == "mmnet":
        if not args.embeddings:
            raise CliError("mmnet requires --embeddings")
        table = embed.read_embeddings(_require(args.embeddings))
        emb_tr = table.matrix([r.lot_id for r in train_rows])
        emb_te = table.matrix([r.lot_id for r in test_rows])
        d_backbone = table.dim

    cfg = nn.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        dropout_p=args.dropout,
        seed=args.seed,
        loss="bce",
        d_image=args.d_image if args.model == "mmnet" else 0,
    )
    model = nn.MultiModalNet(
        n_feature=Xtr.values.shape[1],
        d_backbone=d_backbone,
        d_image=cfg.d_image,
        classifier=True,
        seed=cfg.seed,
    )
    nn.train(model, Xtr.values, ytr, cfg, image_e=emb_tr)
    logits = model.forward(Xte.values, emb_te, train=False)
    scores = 1.0 / (1.0 + np.exp(-logits))
    report = ev.roc_auc(scores, yte.astype(int))

    bparams = boost.BoostParams(n_rounds=args.rounds, max_depth=4, loss="logistic", seed=args.seed)
    bmodel = boost.fit_boost(Xtr.values, ytr, bparams, columns=Xtr.column_names)
    perm = ev.permutation_importance(
        bmodel.predict, Xte.values, yte, blocks=fz.feature_blocks(Xte), n_repeats=args.repeats, seed=args.seed
    )
    dists = {
        col: ev.error_type_distributions(scores, yte.astype(int), Xte.values[:, Xte.column_index(col)])
        for col in ("estimate_low_log", "estimate_high_log")
        if col in Xte.column_names
    }
    _write_json(
        out / "metrics.json",
        {
            "classification": report.to_doc(),
            "permutation_importance": perm,
            "estimate_distributions_by_error_type": dists,
        },
    )
    svgplot.write(
        svgplot.line_chart(
            [
                ("model", [p[0] for p in report.roc_points], [p[1] for p in report.roc_points]),
                ("chance", [0.0, 1.0], [0.0, 1.0]),
            ],
            title=f"ROC (AUC = {report.auc:.3f})",
            x_label="false positive rate",
            y_label="true positive rate",
        ),
        out / "roc.svg",
    )
    _write_runconfig(out, args)
    print(f"classify: AUC {report.auc:.3f} on {len(test_rows)} rows -> {out}")


def cmd_pca(args):
    out = _out_dir(args)
    table = embed.read_embeddings(_require(args.embeddings))
    lot_ids = sorted(table.entries)
    vectors = table.matrix(lot_ids)
    color = {r.lot_id: r.category for r in pnl.read_rows(_require(args.panel))} if args.panel else {}
    if args.model_dir:
        if not args.panel:
            raise CliError("--model-dir projection requires --panel")
        encoder, train_args, model = _load_model_dir(Path(args.model_dir))
        if not isinstance(model, nn.MultiModalNet) or not model.config["d_image"]:
            raise CliError("--model-dir must hold a trained multi-modal net")
        rows = [r for r in pnl.read_rows(_require(args.panel)) if r.lot_id in table.entries]
        lot_ids = [r.lot_id for r in rows]
        X = fz.transform(encoder, rows)
        _, vectors = model.extract_fused_embedding(X.values, table.matrix(lot_ids))
    proj, points = embed.pca_project(vectors)
    _write_json(
        out / "pca.json",
        {
            "explained_variance_ratio": proj.explained_variance_ratio.tolist(),
            "n": len(points),
            "dim": int(vectors.shape[1]),
        },
    )
    with open(out / "pca_points.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lot_id", "pc1", "pc2", "color_key"])
        for lid, (p1, p2) in zip(lot_ids, points):
            writer.writerow([lid, repr(float(p1)), repr(float(p2)), color.get(lid, "all")])
    svgplot.write(
        svgplot.scatter(
            points[:, 0],
            points[:, 1],
            [color.get(l, "all") for l in lot_ids],
            title=(
                f"PCA projection (PC1 {proj.explained_variance_ratio[0]*100:.1f}%, "
                f"PC2 {proj.explained_variance_ratio[1]*100:.1f}%)"
            ),
            x_label="PC1",
            y_label="PC2",
        ),
        out / "pca_scatter.svg",
    )
    _write_runconfig(out, args)
    print(f"pca: ratios {proj.explained_variance_ratio.round(4).tolist()} -> {out}")


def cmd_report(args):
    out = _out_dir(args)
    rows = []
    for run in args.runs.split(","):
        path = _require(Path(run) / "metrics.csv")
        with open(path, newline="", encoding="utf-8") as fh:
            for line in csv.DictReader(fh):
                line["run"] = run
                rows.append(line)
    if not rows:
        raise CliError("no metrics found in the given runs")
    cols = ["run", "model", "stratum", "n", "r2", "mape_pct", "mape_raw_pct", "mae_log"]
    with open(out / "combined_metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow([r.get(c, "") for c in cols])
    widths = [max(len(c), max((len(str(r.get(c, ""))[:12]) for r in rows), default=0)) for c in cols]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    for r in rows:
        lines.append("  ".join(str(r.get(c, ""))[:12].ljust(w) for c, w in zip(cols, widths)))
    (out / "combined_metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_runconfig(out, args)
    print(f"report: {len(rows)} metric rows -> {out}")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artval", description=__doc__)
    parser.add_argument("--version", action="version", version=f"artval-{__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="generate a synthetic panel + embeddings")
    common(p)
    p.add_argument("--n-objects", type=int, default=2000)
    p.add_argument("--resale-prob", type=float, default=0.45)
    p.add_argument("--beta-img", type=float, default=0.7)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--est-tail-bias", type=float, default=0.0)
    p.add_argument("--est-pred-coef", type=float, default=0.0)
    p.add_argument("--train-end-year", type=int, default=2021)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prep", help="build and filter the panel from raw records")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--train-end-year", type=int, required=True)
    p.add_argument("--min-price", type=float, default=10_000.0)
    p.add_argument("--min-cat-count", type=int, default=20)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="fit a price / estimation-error model")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--train-years", required=True, metavar="A:B")
    p.add_argument("--target", choices=("price", "esterr"), default="price")
    p.add_argument("--no-prev-price", action="store_true", help="keep only the prior-sale flag")
    p.add_argument("--with-estimates", action="store_true")
    p.add_argument("--d-image", type=int, default=100)
    p.add_argument("--poly", action="store_true", help="degree-2 expansion (ridge)")
    p.add_argument("--ridge-lambda", type=float, default=1.0)
    p.add_argument("--rounds", type=int, default=400)
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="stratified out-of-sample metrics")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--compare-dir", help="baseline model dir for subgroup gains")
    p.add_argument("--test-years", required=True, metavar="A:B")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("importance", help="gain + permutation importance (boost)")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--model-dir", required=True)
    p.add_argument("--test-years", required=True, metavar="A:B")
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("ablate", help="feature-group ablation grid")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--train-years", required=True, metavar="A:B")
    p.add_argument("--test-years", required=True, metavar="A:B")
    p.add_argument("--d-image", default="10,1000")
    p.add_argument("--groups", help="comma list of configs (default: all four)")
    p.add_argument("--no-prev-price", action="store_true")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--dropout", type=float, default=0.1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stack", help="two-stage ensemble with expert estimates")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--train-years", required=True, metavar="A:B")
    p.add_argument("--test-years", required=True, metavar="A:B")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--rounds", type=int, default=200)
    p.set_defaults(func=cmd_stack)

    p = sub.add_parser("classify", help="sold/unsold probability model")
    common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--model", choices=("net", "mmnet"), default="net")
    p.add_argument("--d-image", type=int, default=10)
    p.add_argument("--test-frac", type=float, default=0.25)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--rounds", type=int, default=150)
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("pca", help="2-d PCA projection of embeddings")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--panel", help="optional: colors points by category")
    p.add_argument("--model-dir", help="optional: project the net's image-branch output")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("report", help="combine metrics from several runs")
    common(p)
    p.add_argument("--runs", required=True, help="comma list of run directories")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except _SCHEMA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (
        CliError,
        ValueError,
    ) as exc:
        # format/document mismatches exit 4, data/model errors 5
        schema = any(
            word in str(exc).lower()
            for word in ("magic", "version", "format", "document", "missing columns", "not an encoder")
        )
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA if schema else EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
