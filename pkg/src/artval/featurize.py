"""Design-matrix construction from panel rows.

One-hot encodes categoricals (reference level dropped), standardizes
continuous columns with training-sample moments, and tags every encoded
column with a feature group so ablations can drop whole groups at once.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

GROUP_TAGS = ("object", "artist", "venue", "timing", "history", "estimates")

_NUMERIC_FIELDS = [
    ("height", "object"),
    ("width", "object"),
    ("n_exhibitions", "object"),
    ("n_citations", "object"),
    ("sale_year", "timing"),
]
_BOOL_FIELDS = [("signed", "object"), ("dated", "object"), ("has_prev", "history")]
_CATEGORICAL_FIELDS = [
    ("artist", "artist"),
    ("house", "venue"),
    ("location", "venue"),
    ("category", "object"),
    ("medium", "object"),
    ("shape", "object"),
    ("sale_month", "timing"),
]


class FeaturizeError(ValueError):
    pass


@dataclass
class FeatureMatrix:
    values: np.ndarray
    column_names: list
    groups: dict  # column name -> group tag
    numeric_columns: list = field(default_factory=list)

    def column_index(self, name: str) -> int:
        return self.column_names.index(name)

    def subset(self, names: list) -> "FeatureMatrix":
        idx = [self.column_index(n) for n in names]
        return FeatureMatrix(
            values=self.values[:, idx],
            column_names=list(names),
            groups={n: self.groups[n] for n in names},
            numeric_columns=[n for n in self.numeric_columns if n in set(names)],
        )


def _numeric_raw(row, name: str):
    if name == "prev_price_log":
        p = row.prev_price
        return None if p is None else math.log1p(p)
    if name == "estimate_low_log":
        return None if row.estimate_low is None else math.log(row.estimate_low)
    if name == "estimate_high_log":
        return None if row.estimate_high is None else math.log(row.estimate_high)
    return getattr(row, name)


class Encoder:
    """Train-fitted feature encoder; immutable after :func:`fit_encoder`."""

    def __init__(self, include_prev_price=True, include_estimates=False):
        self.include_prev_price = include_prev_price
        self.include_estimates = include_estimates
        self.numeric = []  # (name, group)
        self.scaler_params = {}  # name -> (mean, sd)
        self.bools = list(_BOOL_FIELDS)
        self.vocab = {}  # field -> {"reference": level, "levels": [non-reference levels]}

    # -- layout -------------------------------------------------------------
    def column_layout(self):
        """Ordered (column name, group) pairs of the encoded matrix."""
        cols = [(n, g) for n, g in self.numeric]
        cols += [(n, g) for n, g in self.bools]
        for fieldname, group in _CATEGORICAL_FIELDS:
            for level in self.vocab[fieldname]["levels"]:
                cols.append((f"{fieldname}={level}", group))
        return cols

    # -- serialization ------------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "format": "artval-encoder",
            "version": 1,
            "include_prev_price": self.include_prev_price,
            "include_estimates": self.include_estimates,
            "numeric": self.numeric,
            "scaler_params": {k: list(v) for k, v in self.scaler_params.items()},
            "vocab": self.vocab,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Encoder":
        doc = json.loads(text)
        if doc.get("format") != "artval-encoder":
            raise FeaturizeError("not an encoder document")
        enc = cls(doc["include_prev_price"], doc["include_estimates"])
        enc.numeric = [tuple(x) for x in doc["numeric"]]
        enc.scaler_params = {k: tuple(v) for k, v in doc["scaler_params"].items()}
        enc.vocab = doc["vocab"]
        return enc


def fit_encoder(train_rows, include_prev_price=True, include_estimates=False) -> Encoder:
    """Learn vocabularies and scaler moments from training rows only."""
    if not train_rows:
        raise FeaturizeError("fit_encoder requires nonempty training rows")
    enc = Encoder(include_prev_price, include_estimates)

    numeric = list(_NUMERIC_FIELDS)
    if include_prev_price:
        numeric.append(("prev_price_log", "history"))
    if include_estimates:
        numeric.append(("estimate_low_log", "estimates"))
        numeric.append(("estimate_high_log", "estimates"))

    for name, group in numeric:
        vals = np.array([_numeric_raw(r, name) for r in train_rows], dtype=float)
        if np.any(np.isnan(vals)):
            raise FeaturizeError(f"numeric field {name} missing in training rows")
        mean = float(np.mean(vals))
        sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        if sd == 0.0:
            warnings.warn(f"dropping constant numeric column {name}")
            continue
        enc.numeric.append((name, group))
        enc.scaler_params[name] = (mean, sd)

    for fieldname, _group in _CATEGORICAL_FIELDS:
        counts = {}
        for r in train_rows:
            level = str(getattr(r, fieldname))
            counts[level] = counts.get(level, 0) + 1
        ordered = sorted(counts, key=lambda v: (-counts[v], v))
        enc.vocab[fieldname] = {"reference": ordered[0], "levels": ordered[1:]}
    return enc


def transform(encoder: Encoder, rows) -> FeatureMatrix:
    """Encode rows with a fitted encoder; unseen categories hit the zero block."""
    layout = encoder.column_layout()
    names = [n for n, _ in layout]
    groups = dict(layout)
    col_of = {n: i for i, n in enumerate(names)}
    X = np.zeros((len(rows), len(names)))

    for i, row in enumerate(rows):
        for name, _group in encoder.numeric:
            raw = _numeric_raw(row, name)
            if raw is None:
                raise FeaturizeError(f"row {i} ({row.lot_id}): missing numeric field {name}")
            mean, sd = encoder.scaler_params[name]
            X[i, col_of[name]] = (raw - mean) / sd
        for name, _group in encoder.bools:
            X[i, col_of[name]] = 1.0 if getattr(row, name) else 0.0
        for fieldname, _group in _CATEGORICAL_FIELDS:
            level = str(getattr(row, fieldname))
            col = f"{fieldname}={level}"
            if col in col_of:  # reference and unseen levels stay all-zero
                X[i, col_of[col]] = 1.0

    return FeatureMatrix(
        values=X,
        column_names=names,
        groups=groups,
        numeric_columns=[n for n, _ in encoder.numeric],
    )


def polynomial_expand(matrix: FeatureMatrix, degree: int = 2, max_columns: int = 5000) -> FeatureMatrix:
    """Append squares and pairwise products of the continuous columns.

    Indicator columns are left out of the expansion: interacting the one-hot
    blocks would blow up the dimension without adding hedonic content.
    """
    if degree != 2:
        raise FeaturizeError("only degree-2 expansion is supported")
    base = matrix.numeric_columns
    k = len(base)
    n_new = k * (k + 1) // 2
    if len(matrix.column_names) + n_new > max_columns:
        raise FeaturizeError(
            f"expansion would create {len(matrix.column_names) + n_new} columns "
            f"(cap {max_columns}); prune features first"
        )
    cols = [matrix.values]
    names = list(matrix.column_names)
    groups = dict(matrix.groups)
    idx = {n: matrix.column_index(n) for n in base}
    for a_i, a in enumerate(base):
        for b in base[a_i:]:
            cols.append((matrix.values[:, idx[a]] * matrix.values[:, idx[b]])[:, None])
            name = f"{a}*{b}"
            names.append(name)
            groups[name] = matrix.groups[a]
    return FeatureMatrix(
        values=np.hstack(cols),
        column_names=names,
        groups=groups,
        numeric_columns=list(matrix.numeric_columns),
    )


def select_groups(matrix: FeatureMatrix, keep) -> FeatureMatrix:
    """Column subset by feature-group tag, preserving column order."""
    keep = set(keep)
    unknown = keep - set(GROUP_TAGS)
    if unknown:
        raise FeaturizeError(f"unknown group tags: {sorted(unknown)}")
    if not keep:
        raise FeaturizeError("keep must name at least one group")
    names = [n for n in matrix.column_names if matrix.groups[n] in keep]
    if not names:
        raise FeaturizeError(f"no columns carry the requested groups {sorted(keep)}")
    return matrix.subset(names)


def feature_blocks(matrix: FeatureMatrix):
    """Group one-hot columns by their source variable for joint permutation.

    Returns ordered (block name, column indices) pairs; scalar columns form
    singleton blocks.
    """
    blocks = {}
    for i, name in enumerate(matrix.column_names):
        source = name.split("=")[0] if "=" in name else name
        blocks.setdefault(source, []).append(i)
    return list(blocks.items())
