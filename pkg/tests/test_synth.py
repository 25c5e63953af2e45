import numpy as np
import pytest

from artval import panel, synth
from artval import evaluate as ev
from artval import featurize as fz
from artval import net as nn


def _panel_rows(records):
    return panel.impute_prev_price(panel.build_panel(records))


class TestGenerate:
    def test_fixed_seed_bit_identical(self):
        cfg = synth.DGPConfig(n_objects=200, seed=5)
        a_recs, a_table, a_truth = synth.generate(cfg)
        b_recs, b_table, b_truth = synth.generate(cfg)
        assert a_recs == b_recs
        assert a_truth == b_truth
        for k in a_table.entries:
            assert np.array_equal(a_table.entries[k], b_table.entries[k])

    def test_panel_invariants_hold(self):
        records, _, _ = synth.generate(synth.DGPConfig(n_objects=300, seed=1))
        rows = _panel_rows(records)
        by_obj = {}
        for r in rows:
            by_obj.setdefault(r.object_id, []).append(r)
        for obj_rows in by_obj.values():
            assert sum(r.is_fresh for r in obj_rows) == 1
            assert obj_rows[0].is_fresh

    def test_truth_decomposition_matches_price(self):
        cfg = synth.DGPConfig(n_objects=150, seed=2)
        records, _, truth = synth.generate(cfg)
        for rec in records:
            t = truth["lots"][rec.lot_id]
            if not rec.sold:
                continue
            rebuilt = (
                t["value"]
                + cfg.trend_per_year * (rec.sale_year - cfg.year_min)
                + t["shock"]
                + t["noise"]
            )
            assert np.log(rec.price) == pytest.approx(rebuilt, abs=1e-9)

    def test_embeddings_cover_all_lots(self):
        records, table, _ = synth.generate(synth.DGPConfig(n_objects=100, seed=3))
        assert {r.lot_id for r in records} == set(table.entries)
        assert table.dim == synth.DGPConfig().d_backbone

    def test_fresh_estimates_noisier(self):
        cfg = synth.DGPConfig(n_objects=4000, est_fresh_noise_mult=2.0, seed=4)
        records, _, truth = synth.generate(cfg)
        rows = [r for r in _panel_rows(records) if r.sold]
        errs = {
            True: [truth["lots"][r.lot_id]["estimate_error"] for r in rows if r.is_fresh],
            False: [truth["lots"][r.lot_id]["estimate_error"] for r in rows if not r.is_fresh],
        }
        assert np.std(errs[True]) > 1.5 * np.std(errs[False])

    def test_degenerate_config_rejected(self):
        with pytest.raises(synth.SynthError):
            synth.DGPConfig(artist_sd=0, shock_sd=0, noise_sd=0, category_sd=0, medium_sd=0)
        with pytest.raises(synth.SynthError):
            synth.DGPConfig(resale_prob=1.5)

    def test_tail_bias_shapes_estimate_errors(self):
        cfg = synth.DGPConfig(n_objects=3000, est_tail_bias=0.3, seed=6)
        records, _, _ = synth.generate(cfg)
        sold = [r for r in records if r.sold]
        logp = np.array([np.log(r.price) for r in sold])
        err = logp - np.log([(r.estimate_low + r.estimate_high) / 2 for r in sold])
        order = np.argsort(logp)
        low_decile = err[order[: len(sold) // 10]]
        high_decile = err[order[-len(sold) // 10 :]]
        # estimates overshoot cheap lots (negative error) and undershoot dear ones
        assert low_decile.mean() < -0.1
        assert high_decile.mean() > 0.1

    def test_anchoring_drives_unsold(self):
        cfg = synth.DGPConfig(n_objects=3000, seed=7)
        records, _, truth = synth.generate(cfg)
        # lots whose estimate overshoots the fundamental should sell less often
        gaps, sold = [], []
        for r in records:
            t = truth["lots"][r.lot_id]
            # midpoint-over-fundamental gap: (log_price - est_err) - (log_price - noise)
            gaps.append(t["noise"] - t["estimate_error"])
            sold.append(r.sold)
        gaps, sold = np.array(gaps), np.array(sold)
        overshoot = gaps > np.median(gaps)
        assert sold[overshoot].mean() < sold[~overshoot].mean()


class TestPipelineQualitative:
    def test_no_visual_signal_means_tie(self):
        cfg = synth.DGPConfig(n_objects=1200, beta_img=0.0, medium_visual_interaction=0.0, seed=8)
        records, table, _ = synth.generate(cfg)
        rows = [r for r in _panel_rows(records) if r.sold and r.sale_year <= 2018]
        test = [r for r in _panel_rows(records) if r.sold and r.sale_year > 2018]
        enc = fz.fit_encoder(rows)
        Xtr, Xte = fz.transform(enc, rows), fz.transform(enc, test)
        ytr = np.array([r.log_price for r in rows])
        yte = np.array([r.log_price for r in test])
        years = np.array([r.sale_year for r in rows])
        cfg_t = nn.TrainConfig(epochs=25, seed=0, dropout_p=0.0)
        r2 = {}
        for d_image in (0, 32):
            net = nn.MultiModalNet(
                n_feature=Xtr.values.shape[1],
                d_backbone=table.dim if d_image else 0,
                d_image=d_image,
                dropout_p=0.0,
                seed=0,
            )
            Etr = table.matrix([r.lot_id for r in rows]) if d_image else None
            Ete = table.matrix([r.lot_id for r in test]) if d_image else None
            nn.train(net, Xtr.values, ytr, cfg_t, image_e=Etr, years=years)
            pred = net.forward(Xte.values, Ete, train=False)
            r2[d_image] = ev.r2_log(yte, pred)
        assert abs(r2[32] - r2[0]) < 0.1  # no visual signal -> statistical tie
