import numpy as np
import pytest

from artval import featurize as fz
from artval import panel
from conftest import make_record


def _rows(n=30, seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        recs.append(
            make_record(
                lot_id=f"l{i}",
                object_id=f"o{i}",
                price=float(20_000 + 1_000 * i),
                sale_year=int(1990 + rng.integers(0, 20)),
                sale_month=int(rng.integers(1, 13)),
                artist=f"a{i % 3}",
                house=f"h{i % 2}",
                category=["IMP", "PWC"][i % 2],
                medium=["OC", "WC", "S"][i % 3],
                height=float(30 + rng.integers(0, 100)),
                width=float(30 + rng.integers(0, 100)),
                signed=bool(i % 2),
                n_exhibitions=int(rng.integers(0, 5)),
                n_citations=int(rng.integers(0, 8)),
            )
        )
    return panel.impute_prev_price(panel.build_panel(recs))


class TestFitEncoder:
    def test_reference_level_dropped(self):
        rows = _rows()
        enc = fz.fit_encoder(rows)
        cats = {r.category for r in rows}
        cat_cols = [n for n, _ in enc.column_layout() if n.startswith("category=")]
        assert len(cat_cols) == len(cats) - 1

    def test_scaler_sample_sd(self):
        # hand oracle: values {1,2,3} -> mean 2, sd 1 with the n-1 denominator
        rows = [
            panel.PanelRow(
                record=make_record(lot_id=f"l{i}", object_id=f"o{i}", n_citations=i + 1),
                is_fresh=True, prev_price=0.0, has_prev=False, log_price=10.0,
            )
            for i in range(3)
        ]
        enc = fz.fit_encoder(rows)
        mean, sd = enc.scaler_params["n_citations"]
        assert mean == pytest.approx(2.0) and sd == pytest.approx(1.0)

    def test_boolean_single_unstandardized_column(self):
        rows = _rows()
        enc = fz.fit_encoder(rows)
        X = fz.transform(enc, rows)
        col = X.values[:, X.column_index("signed")]
        assert set(np.unique(col)) <= {0.0, 1.0}
        assert "signed" not in enc.scaler_params

    def test_constant_numeric_dropped_with_warning(self):
        rows = _rows()
        rows = [
            panel.PanelRow(
                record=r.record, is_fresh=r.is_fresh, prev_price=0.0,
                has_prev=False, log_price=r.log_price,
            )
            for r in rows
        ]
        with pytest.warns(UserWarning, match="constant numeric"):
            enc = fz.fit_encoder(rows, include_prev_price=True)
        assert "prev_price_log" not in dict(enc.numeric)

    def test_train_only_informed(self):
        rows = _rows(40)
        enc_all = fz.fit_encoder(rows)
        enc_again = fz.fit_encoder(list(rows))
        assert enc_all.to_json() == enc_again.to_json()


class TestTransform:
    def test_standardized_train_mean_zero(self):
        rows = _rows()
        enc = fz.fit_encoder(rows)
        X = fz.transform(enc, rows)
        for name in X.numeric_columns:
            assert abs(X.values[:, X.column_index(name)].mean()) < 1e-9

    def test_bit_identical_reruns(self):
        rows = _rows()
        enc = fz.fit_encoder(rows)
        a = fz.transform(enc, rows)
        b = fz.transform(enc, rows)
        assert np.array_equal(a.values, b.values) and a.column_names == b.column_names

    def test_unseen_category_zero_block(self):
        rows = _rows()
        enc = fz.fit_encoder(rows)
        new = panel.PanelRow(
            record=make_record(lot_id="new", object_id="new", artist="never-seen"),
            is_fresh=True, prev_price=0.0, has_prev=False, log_price=10.0,
        )
        X = fz.transform(enc, [new])
        # oracle: explicit vocabulary lookup — no artist level matches, so the
        # whole artist one-hot block must be zero
        artist_cols = [i for i, n in enumerate(X.column_names) if n.startswith("artist=")]
        assert np.all(X.values[0, artist_cols] == 0.0)

    def test_one_hot_block_sums_at_most_one(self):
        rows = _rows()
        X = fz.transform(fz.fit_encoder(rows), rows)
        for source in ("artist", "house", "category", "medium", "sale_month"):
            cols = [i for i, n in enumerate(X.column_names) if n.startswith(source + "=")]
            assert np.all(X.values[:, cols].sum(axis=1) <= 1.0 + 1e-12)

    def test_encoder_json_round_trip(self):
        rows = _rows()
        enc = fz.fit_encoder(rows, include_estimates=True)
        enc2 = fz.Encoder.from_json(enc.to_json())
        assert np.array_equal(fz.transform(enc, rows).values, fz.transform(enc2, rows).values)

    def test_bad_encoder_document(self):
        with pytest.raises(fz.FeaturizeError, match="not an encoder"):
            fz.Encoder.from_json('{"format": "something-else"}')


class TestPolynomialExpand:
    def _matrix(self, names, values):
        return fz.FeatureMatrix(
            values=np.asarray(values, dtype=float),
            column_names=list(names),
            groups={n: "object" for n in names},
            numeric_columns=list(names),
        )

    def test_two_numeric_adds_three(self):
        out = fz.polynomial_expand(self._matrix(["x", "y"], [[1.0, 2.0]]))
        assert out.column_names == ["x", "y", "x*x", "x*y", "y*y"]

    def test_one_numeric_adds_one(self):
        out = fz.polynomial_expand(self._matrix(["x"], [[3.0]]))
        assert out.column_names == ["x", "x*x"]

    def test_product_value(self):
        out = fz.polynomial_expand(self._matrix(["x", "y"], [[2.0, 3.0]]))
        assert out.values[0, out.column_index("x*y")] == 6.0

    def test_restriction_recovers_input(self):
        m = self._matrix(["x", "y"], [[2.0, 3.0], [4.0, 5.0]])
        out = fz.polynomial_expand(m)
        assert np.array_equal(out.subset(["x", "y"]).values, m.values)

    def test_cap_enforced(self):
        with pytest.raises(fz.FeaturizeError, match="prune"):
            fz.polynomial_expand(self._matrix(["x", "y"], [[1.0, 2.0]]), max_columns=4)

    def test_only_degree_two(self):
        with pytest.raises(fz.FeaturizeError):
            fz.polynomial_expand(self._matrix(["x"], [[1.0]]), degree=3)


class TestSelectGroups:
    def test_keep_all_identity(self):
        rows = _rows()
        X = fz.transform(fz.fit_encoder(rows), rows)
        present = set(X.groups.values())
        out = fz.select_groups(X, present)
        assert out.column_names == X.column_names

    def test_minimal_transaction_columns(self):
        rows = _rows()
        X = fz.transform(fz.fit_encoder(rows), rows)
        out = fz.select_groups(X, {"artist", "timing", "history"})
        # everything left is artist indicators, sale timing, or history flags
        assert set(out.groups.values()) == {"artist", "timing", "history"}
        assert "sale_year" in out.column_names and "has_prev" in out.column_names
        assert not any(n.startswith("category=") for n in out.column_names)

    def test_empty_keep_is_error(self):
        rows = _rows()
        X = fz.transform(fz.fit_encoder(rows), rows)
        with pytest.raises(fz.FeaturizeError):
            fz.select_groups(X, set())

    def test_unknown_tag_is_error(self):
        rows = _rows()
        X = fz.transform(fz.fit_encoder(rows), rows)
        with pytest.raises(fz.FeaturizeError, match="unknown group"):
            fz.select_groups(X, {"nonsense"})


def test_feature_blocks_group_one_hot_columns():
    rows = _rows()
    X = fz.transform(fz.fit_encoder(rows), rows)
    blocks = dict(fz.feature_blocks(X))
    assert len(blocks["artist"]) == sum(n.startswith("artist=") for n in X.column_names)
    assert blocks["height"] == [X.column_index("height")]
    covered = sorted(i for cols in blocks.values() for i in cols)
    assert covered == list(range(X.values.shape[1]))
