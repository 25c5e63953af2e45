"""Hedonic baselines on a synthetic auction panel.

Generates a seeded panel, encodes it into a design matrix, and walks
through the three linear price models: OLS, ridge, and the
cross-validated Lasso with an OLS refit on the selected support.
"""

import numpy as np

from artval import linmod, panel, synth
from artval import evaluate as ev
from artval import featurize as fz

# ---------------------------------------------------------------------------
# data: 800 objects, ~45% of which come back to auction at least once

records, _, _ = synth.generate(synth.DGPConfig(n_objects=800, seed=0))
rows = [r for r in panel.impute_prev_price(panel.build_panel(records)) if r.sold]
train = [r for r in rows if r.sale_year <= 2020]
test = [r for r in rows if r.sale_year > 2020]
print(f"panel: {len(rows)} sold lots, {len(train)} train / {len(test)} test")

encoder = fz.fit_encoder(train)
Xtr, Xte = fz.transform(encoder, train), fz.transform(encoder, test)
ytr = np.array([r.log_price for r in train])
yte = np.array([r.log_price for r in test])
fresh = np.array([r.is_fresh for r in test])

# ---------------------------------------------------------------------------
# three linear models on log price

fits = {
    "ols": linmod.fit_ols(Xtr.values, ytr, columns=Xtr.column_names),
    "ridge": linmod.fit_ridge(Xtr.values, ytr, lam=5.0, columns=Xtr.column_names),
    "lasso": linmod.fit_lasso_cv(Xtr.values, ytr, seed=0, columns=Xtr.column_names),
}
print("\nmodel   stratum   R^2     MAPE%   MAE(log)")
for tag, fit in fits.items():
    report = ev.stratified_report(yte, fit.predict(Xte.values), fresh, model_tag=tag)
    for stratum in ("all", "fresh", "previous"):
        s = report.strata[stratum]
        print(f"{tag:<7} {stratum:<9} {s['r2']:.3f}   {s['mape_pct']:.2f}    {s['mae_log']:.3f}")

lasso = fits["lasso"]
support = [n for n, b in zip(Xtr.column_names, lasso.beta) if b != 0.0]
print(f"\nlasso kept {len(support)}/{len(lasso.beta)} columns at lambda={lasso.lam:.4g}")

# ---------------------------------------------------------------------------
# attribution: OLS refit on the Lasso support, with standard errors

table = linmod.lasso_then_ols(Xtr.values, ytr, columns=Xtr.column_names, top_k=10, seed=0)
print("\n" + table.render())
