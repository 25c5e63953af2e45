"""Gradient-boosted regression/classification trees built from scratch.

Second-order boosting in the XGBoost style: squared or logistic loss,
greedy exact split enumeration over sorted unique values, L2 leaf
regularization, split-gain pruning, and row/column subsampling. Ships with
gain importance and exact path-dependent tree SHAP attribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np


class BoostError(ValueError):
    pass


@dataclass
class BoostParams:
    n_rounds: int = 400
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    subsample: float = 0.8
    colsample: float = 1.0
    loss: str = "squared"  # squared | logistic
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("squared", "logistic"):
            raise BoostError(f"unknown loss {self.loss!r}")
        if not (0 < self.subsample <= 1 and 0 < self.colsample <= 1):
            raise BoostError("subsample/colsample must lie in (0, 1]")


@dataclass
class Tree:
    """Binary tree as flat node arrays; feature == -1 marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray  # hessian sum of training rows reaching the node
    gain: np.ndarray

    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] < self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def expected_value(self) -> float:
        """Cover-weighted mean over leaves (prediction for the empty feature set)."""

        def rec(j):
            if self.feature[j] < 0:
                return self.value[j]
            l, r = self.left[j], self.right[j]
            wl = self.cover[l] / self.cover[j]
            return wl * rec(l) + (1 - wl) * rec(r)

        return float(rec(0))


def _build_tree(X, g, h, params: BoostParams) -> Tree:
    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value", "cover", "gain")}

    def add_node():
        for v in nodes.values():
            v.append(0)
        return len(nodes["feature"]) - 1

    lam, mcw = params.reg_lambda, params.min_child_weight

    def build(idx, depth):
        j = add_node()
        gn, hn = g[idx], h[idx]
        G, H = gn.sum(), hn.sum()
        nodes["cover"][j] = H
        best = None
        if depth < params.max_depth and len(idx) >= 2:
            Xn = X[idx]
            order = np.argsort(Xn, axis=0, kind="stable")
            Xs = np.take_along_axis(Xn, order, axis=0)
            GL = np.cumsum(gn[order], axis=0)[:-1]
            HL = np.cumsum(hn[order], axis=0)[:-1]
            GR, HR = G - GL, H - HL
            parent = G * G / (H + lam)
            gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent) - params.gamma
            valid = (Xs[1:] > Xs[:-1]) & (HL >= mcw) & (HR >= mcw)
            gain = np.where(valid, gain, -np.inf)
            flat = int(np.argmax(gain))
            pos, feat = divmod(flat, gain.shape[1])
            if gain[pos, feat] > 0:
                best = (feat, 0.5 * (Xs[pos, feat] + Xs[pos + 1, feat]), float(gain[pos, feat]), order[: pos + 1, feat])
        if best is None:
            nodes["feature"][j] = -1
            nodes["value"][j] = -G / (H + lam)
            return j
        feat, thr, gval, left_local = best
        left_mask = np.zeros(len(idx), dtype=bool)
        left_mask[left_local] = True
        nodes["feature"][j] = feat
        nodes["threshold"][j] = float(thr)
        nodes["gain"][j] = gval
        nodes["left"][j] = build(idx[left_mask], depth + 1)
        nodes["right"][j] = build(idx[~left_mask], depth + 1)
        return j

    build(np.arange(len(g)), 0)
    return Tree(
        feature=np.array(nodes["feature"], dtype=np.int64),
        threshold=np.array(nodes["threshold"], dtype=float),
        left=np.array(nodes["left"], dtype=np.int64),
        right=np.array(nodes["right"], dtype=np.int64),
        value=np.array(nodes["value"], dtype=float),
        cover=np.array(nodes["cover"], dtype=float),
        gain=np.array(nodes["gain"], dtype=float),
    )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


@dataclass
class BoostModel:
    trees: list
    tree_columns: list  # per tree: global column indices used for its split features
    params: BoostParams
    base_score: float
    n_features: int
    columns: list = None
    train_loss: list = field(default_factory=list)

    # -- prediction ---------------------------------------------------------
    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features:
            raise BoostError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(X)
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Log price for squared loss, probability for logistic loss."""
        m = self.margin(X)
        return _sigmoid(m) if self.params.loss == "logistic" else m

    # -- serialization ------------------------------------------------------
    def to_doc(self) -> dict:
        return {
            "format": "artval-boost",
            "version": 1,
            "params": asdict(self.params),
            "base_score": self.base_score,
            "n_features": self.n_features,
            "columns": self.columns,
            "trees": [
                {k: getattr(t, k).tolist() for k in ("feature", "threshold", "left", "right", "value", "cover", "gain")}
                for t in self.trees
            ],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "BoostModel":
        if doc.get("format") != "artval-boost" or doc.get("version") != 1:
            raise BoostError("unrecognized boost model document")
        trees = [
            Tree(
                feature=np.array(t["feature"], dtype=np.int64),
                threshold=np.array(t["threshold"], dtype=float),
                left=np.array(t["left"], dtype=np.int64),
                right=np.array(t["right"], dtype=np.int64),
                value=np.array(t["value"], dtype=float),
                cover=np.array(t["cover"], dtype=float),
                gain=np.array(t["gain"], dtype=float),
            )
            for t in doc["trees"]
        ]
        return cls(
            trees=trees,
            tree_columns=[None] * len(trees),
            params=BoostParams(**doc["params"]),
            base_score=doc["base_score"],
            n_features=doc["n_features"],
            columns=doc.get("columns"),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_doc(), fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))


def fit_boost(X, y, params: BoostParams = None, columns=None) -> BoostModel:
    """Greedy second-order boosting; stops early once trees stop improving."""
    params = params or BoostParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise BoostError("targets must be finite")
    n, d = X.shape

    if params.loss == "squared":
        base = float(np.mean(y))
    else:
        p = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
        base = math.log(p / (1 - p))

    margin = np.full(n, base)
    model = BoostModel(
        trees=[], tree_columns=[], params=params, base_score=base, n_features=d, columns=columns
    )
    rng = np.random.default_rng(params.seed)
    for _round in range(params.n_rounds):
        if params.loss == "squared":
            g, h = margin - y, np.ones(n)
        else:
            p = _sigmoid(margin)
            g, h = p - y, p * (1 - p)

        if params.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=max(2, int(round(params.subsample * n))), replace=False))
        else:
            rows = np.arange(n)
        if len(rows) < 2:
            raise BoostError("no usable rows after subsampling")
        if params.colsample < 1.0:
            cols = np.sort(rng.choice(d, size=max(1, int(round(params.colsample * d))), replace=False))
        else:
            cols = np.arange(d)

        tree = _build_tree(X[np.ix_(rows, cols)], g[rows], h[rows], params)
        # map subsampled column indices back to global ones
        internal = tree.feature >= 0
        tree.feature[internal] = cols[tree.feature[internal]]
        if not np.any(internal) and abs(tree.value[0]) < 1e-12:
            break  # no split improves the loss; further rounds are no-ops
        model.trees.append(tree)
        model.tree_columns.append(cols)
        margin += params.learning_rate * tree.predict(X)
        if params.loss == "squared":
            loss = float(np.mean((y - margin) ** 2))
        else:
            p = _sigmoid(margin)
            loss = float(-np.mean(y * np.log(p + 1e-12) + (1 - y) * np.log(1 - p + 1e-12)))
        model.train_loss.append(loss)
    return model


def predict(model: BoostModel, X) -> np.ndarray:
    return model.predict(np.asarray(X, dtype=float))


def gain_importance(model: BoostModel) -> dict:
    """Total and mean split gain per feature; unsplit features are absent."""
    total, count = {}, {}
    for tree in model.trees:
        for j in range(tree.n_nodes()):
            f = int(tree.feature[j])
            if f >= 0:
                total[f] = total.get(f, 0.0) + float(tree.gain[j])
                count[f] = count.get(f, 0) + 1
    out = {}
    for f in sorted(total):
        name = model.columns[f] if model.columns else str(f)
        out[name] = {"total": total[f], "mean": total[f] / count[f], "n_splits": count[f]}
    return out


# ---------------------------------------------------------------------------
# exact path-dependent tree SHAP


def _path_extend(m, pz, po, pi):
    m = [entry[:] for entry in m]
    m.append([pi, pz, po, 1.0 if not m else 0.0])
    L = len(m)
    for i in range(L - 2, -1, -1):
        m[i + 1][3] += po * m[i][3] * (i + 1) / L
        m[i][3] = pz * m[i][3] * (L - 1 - i) / L
    return m


def _path_unwind(m, i):
    m = [entry[:] for entry in m]
    L = len(m)
    z, o = m[i][1], m[i][2]
    carry = m[L - 1][3]
    for j in range(L - 2, -1, -1):
        if o != 0:
            tmp = m[j][3]
            m[j][3] = carry * L / ((j + 1) * o)
            carry = tmp - m[j][3] * z * (L - 1 - j) / L
        else:
            m[j][3] = m[j][3] * L / (z * (L - 1 - j))
    for j in range(i, L - 1):
        m[j] = [m[j + 1][0], m[j + 1][1], m[j + 1][2], m[j][3]]
    m.pop()
    return m


def _path_unwound_sum(m, i):
    L = len(m)
    z, o = m[i][1], m[i][2]
    carry = m[L - 1][3]
    total = 0.0
    for j in range(L - 2, -1, -1):
        if o != 0:
            tmp = carry * L / ((j + 1) * o)
            total += tmp
            carry = m[j][3] - tmp * z * (L - 1 - j) / L
        else:
            total += m[j][3] * L / (z * (L - 1 - j))
    return total


def _tree_shap_single(tree: Tree, x: np.ndarray, phi: np.ndarray):
    def recurse(j, m, pz, po, pi):
        m = _path_extend(m, pz, po, pi)
        if tree.feature[j] < 0:
            for i in range(1, len(m)):
                w = _path_unwound_sum(m, i)
                phi[m[i][0]] += w * (m[i][2] - m[i][1]) * tree.value[j]
            return
        f = int(tree.feature[j])
        if x[f] < tree.threshold[j]:
            hot, cold = int(tree.left[j]), int(tree.right[j])
        else:
            hot, cold = int(tree.right[j]), int(tree.left[j])
        iz = io = 1.0
        k = next((i for i in range(1, len(m)) if m[i][0] == f), None)
        if k is not None:
            iz, io = m[k][1], m[k][2]
            m = _path_unwind(m, k)
        rj = tree.cover[j]
        recurse(hot, m, iz * tree.cover[hot] / rj, io, f)
        recurse(cold, m, iz * tree.cover[cold] / rj, 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)


def tree_shap(model: BoostModel, x) -> tuple:
    """Signed per-feature contributions and base value on the margin scale.

    Local accuracy: ``base + contributions.sum() == margin(x)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_features,):
        raise BoostError(f"expected feature vector of length {model.n_features}")
    phi = np.zeros(model.n_features)
    base = model.base_score
    for tree in model.trees:
        tphi = np.zeros(model.n_features)
        _tree_shap_single(tree, x, tphi)
        phi += model.params.learning_rate * tphi
        base += model.params.learning_rate * tree.expected_value()
    return phi, base


def shap_values(model: BoostModel, X) -> tuple:
    """Row-wise tree SHAP; returns (n x d contributions, base value)."""
    X = np.asarray(X, dtype=float)
    out = np.zeros_like(X)
    base = 0.0
    for i in range(len(X)):
        out[i], base = tree_shap(model, X[i])
    return out, base
