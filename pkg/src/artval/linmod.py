"""Hedonic linear models: OLS, ridge, Lasso with CV, and Lasso->OLS attribution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats


class LinModError(ValueError):
    pass


@dataclass
class LinearFit:
    beta: np.ndarray
    intercept: float
    method: str  # ols | ridge | lasso
    lam: float = 0.0
    training_columns: Optional[list] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        return X @ self.beta + self.intercept


def _center(X, y):
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    return X - x_mean, y - y_mean, x_mean, y_mean


def fit_ols(X, y, columns=None, allow_rank_deficient=False) -> LinearFit:
    """Least squares via QR; refuses silently dropping collinear columns."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n <= d and not allow_rank_deficient:
        raise LinModError(f"n={n} <= d={d}; pass allow_rank_deficient to pseudo-invert")
    Xa = np.column_stack([np.ones(n), X])
    rank = np.linalg.matrix_rank(Xa)
    if rank < d + 1 and not allow_rank_deficient:
        # QR with column pivoting flags the dependent columns
        from scipy.linalg import qr

        _, R, piv = qr(Xa, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = diag.max() * max(Xa.shape) * np.finfo(float).eps
        bad = sorted(piv[i] - 1 for i in range(len(diag)) if diag[i] < tol and piv[i] > 0)
        names = [columns[i] for i in bad] if columns else bad
        raise LinModError(f"design matrix is rank deficient; collinear columns: {names}")
    coef, *_ = np.linalg.lstsq(Xa, y, rcond=None)
    return LinearFit(beta=coef[1:], intercept=float(coef[0]), method="ols", training_columns=columns)


def fit_ridge(X, y, lam: float, columns=None) -> LinearFit:
    """L2-penalized least squares; the intercept is left unpenalized."""
    if lam < 0:
        raise LinModError("lambda must be nonnegative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc, yc, x_mean, y_mean = _center(X, y)
    d = X.shape[1]
    beta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(d), Xc.T @ yc)
    return LinearFit(
        beta=beta,
        intercept=float(y_mean - x_mean @ beta),
        method="ridge",
        lam=float(lam),
        training_columns=columns,
    )


def _coordinate_descent(Xc, yc, lam, beta, max_iter=2000, tol=1e-9):
    """Lasso on centered data: min (1/2n)||y - Xb||^2 + lam * ||b||_1."""
    n, d = Xc.shape
    col_ss = (Xc**2).sum(axis=0) / n
    resid = yc - Xc @ beta
    for _ in range(max_iter):
        max_delta = 0.0
        for j in range(d):
            if col_ss[j] == 0.0:
                continue
            old = beta[j]
            rho = (Xc[:, j] @ resid) / n + col_ss[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_ss[j]
            if new != old:
                resid += Xc[:, j] * (old - new)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            break
    beta[np.abs(beta) < 1e-12] = 0.0  # KKT-tight coordinates leave fp dust
    return beta


def default_lambda_grid(X, y, n_points=50, decades=4.0):
    Xc, yc, *_ = _center(np.asarray(X, float), np.asarray(y, float))
    lam_max = np.max(np.abs(Xc.T @ yc)) / len(yc)
    if lam_max <= 0:
        lam_max = 1e-3
    return np.geomspace(lam_max, lam_max * 10.0**-decades, n_points)


def fit_lasso_cv(X, y, lambda_grid=None, k_folds=5, seed=0, columns=None) -> LinearFit:
    """Coordinate-descent Lasso tuned by k-fold CV with the one-SE rule.

    The selected lambda is the largest grid point whose mean CV MSE is within
    one standard error of the minimum; the plain argmin over-selects badly on
    noise targets.
    """
    if k_folds < 2:
        raise LinModError("k_folds must be >= 2")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(X, y)
    lambda_grid = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]

    rng = np.random.default_rng(seed)
    fold = rng.permutation(n) % k_folds
    fold_mse = np.zeros((len(lambda_grid), k_folds))
    for k in range(k_folds):
        tr, te = fold != k, fold == k
        Xc, yc, x_mean, y_mean = _center(X[tr], y[tr])
        beta = np.zeros(d)
        for li, lam in enumerate(lambda_grid):  # warm start down the path
            beta = _coordinate_descent(Xc, yc, lam, beta)
            pred = (X[te] - x_mean) @ beta + y_mean
            fold_mse[li, k] = np.mean((y[te] - pred) ** 2)
    cv_mse = fold_mse.mean(axis=1)
    best_idx = int(np.argmin(cv_mse))
    se = fold_mse[best_idx].std(ddof=1) / np.sqrt(k_folds) if k_folds > 1 else 0.0
    # grid is descending, so the first qualifying index is the largest lambda
    one_se_idx = int(np.flatnonzero(cv_mse <= cv_mse[best_idx] + se)[0])
    best_lam = float(lambda_grid[one_se_idx])

    Xc, yc, x_mean, y_mean = _center(X, y)
    beta = np.zeros(d)
    for lam in lambda_grid[lambda_grid >= best_lam]:
        beta = _coordinate_descent(Xc, yc, lam, beta)
    beta = _coordinate_descent(Xc, yc, best_lam, beta, max_iter=5000)
    if not np.any(beta):
        import warnings

        warnings.warn("lasso selected the empty model at every lambda; returning intercept only")
    return LinearFit(
        beta=beta,
        intercept=float(y_mean - x_mean @ beta),
        method="lasso",
        lam=best_lam,
        training_columns=columns,
    )


@dataclass
class OLSAttributionReport:
    """Per-coefficient inference table for the Lasso-selected OLS refit."""

    columns: list
    coef: np.ndarray
    std_err: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    r2: float
    n: int
    selected_support: list = field(default_factory=list)

    def rows(self):
        out = []
        for i, name in enumerate(self.columns):
            out.append(
                {
                    "feature": name,
                    "coef": float(self.coef[i]),
                    "std_err": float(self.std_err[i]),
                    "t": float(self.t_stat[i]),
                    "p": float(self.p_value[i]),
                    "ci_low": float(self.ci_low[i]),
                    "ci_high": float(self.ci_high[i]),
                }
            )
        return out

    def render(self) -> str:
        header = f"{'feature':<32}{'coef':>12}{'std err':>12}{'t':>10}{'P>|t|':>10}{'[0.025':>12}{'0.975]':>12}"
        lines = [f"OLS attribution  n={self.n}  R2={self.r2:.4f}", header, "-" * len(header)]
        for r in self.rows():
            lines.append(
                f"{r['feature']:<32}{r['coef']:>12.4f}{r['std_err']:>12.4f}"
                f"{r['t']:>10.3f}{r['p']:>10.4f}{r['ci_low']:>12.4f}{r['ci_high']:>12.4f}"
            )
        return "\n".join(lines)


def ols_inference(X, y, columns) -> OLSAttributionReport:
    """OLS with classical homoskedastic standard errors."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    Xa = np.column_stack([np.ones(n), X])
    coef, *_ = np.linalg.lstsq(Xa, y, rcond=None)
    resid = y - Xa @ coef
    dof = n - d - 1
    if dof <= 0:
        raise LinModError("not enough observations for inference")
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(Xa.T @ Xa)
    se = np.sqrt(np.diag(cov))
    t_stat = coef / se
    p = 2.0 * stats.t.sf(np.abs(t_stat), dof)
    crit = stats.t.ppf(0.975, dof)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    names = ["const"] + list(columns)
    return OLSAttributionReport(
        columns=names,
        coef=coef,
        std_err=se,
        t_stat=t_stat,
        p_value=p,
        ci_low=coef - crit * se,
        ci_high=coef + crit * se,
        r2=r2,
        n=n,
    )


def lasso_then_ols(
    X,
    y,
    columns,
    top_k: int = 10,
    exclude_prefixes=("artist=", "house="),
    k_folds=5,
    seed=0,
) -> OLSAttributionReport:
    """Select features by CV Lasso, then refit OLS on the strongest ones.

    Artist and house indicators are held out of the candidate set by default:
    they would dominate selection and obscure the general drivers.
    """
    X = np.asarray(X, dtype=float)
    keep = [
        i for i, name in enumerate(columns) if not any(name.startswith(p) for p in exclude_prefixes)
    ]
    Xk = X[:, keep]
    names = [columns[i] for i in keep]
    lasso = fit_lasso_cv(Xk, y, k_folds=k_folds, seed=seed, columns=names)
    support = np.flatnonzero(lasso.beta)
    if support.size == 0:
        raise LinModError("lasso support is empty; nothing to attribute")
    order = support[np.argsort(-np.abs(lasso.beta[support]))]
    chosen = order[: min(top_k, len(order))]
    report = ols_inference(Xk[:, chosen], y, [names[i] for i in chosen])
    report.selected_support = [names[i] for i in support]
    return report
