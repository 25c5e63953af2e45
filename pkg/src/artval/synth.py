"""Seeded synthetic auction panels with ground-truth decompositions.

The generator mirrors the economic mechanisms the models are meant to pick
up: artist reputation and object attributes set a base value, a latent
visual factor (observable only through the image embeddings) adds
state-independent value, a persistent object shock links repeat-sale prices
to their anchors, presale estimates track prices with configurable noise,
tail bias and fresh-lot dispersion, and the sale probability falls when the
estimate overshoots the lot's fundamental (anchoring)."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .embed import EmbeddingTable
from .panel import TransactionRecord

CATEGORIES = ["IMP", "PWC", "BRP", "AMP", "LAP", "OMP"]
MEDIA = ["OC", "OB", "WC", "S", "D", "P"]
HOUSES = ["ChristiesNY", "SothebysNY", "ChristiesLondon", "SothebysLondon", "Phillips", "Other"]
LOCATIONS = ["New York", "London", "Paris", "Hong Kong", "unknown"]
SHAPES = ["rect", "square", "oval", "irregular"]


class SynthError(ValueError):
    pass


@dataclass
class DGPConfig:
    n_objects: int = 2000
    resale_prob: float = 0.45
    year_min: int = 1990
    year_max: int = 2024
    n_artists: int = 40
    artist_sd: float = 0.8
    base_log_price: float = 11.7  # ~ $120k
    trend_per_year: float = 0.02
    attr_height_coef: float = 0.35
    attr_width_coef: float = 0.25
    attr_signed_coef: float = 0.15
    attr_cite_coef: float = 0.12
    attr_exhib_coef: float = 0.08
    category_sd: float = 0.3
    medium_sd: float = 0.25
    visual_dim: int = 8
    beta_img: float = 0.7
    medium_visual_interaction: float = 0.25
    d_backbone: int = 64
    embedding_noise_sd: float = 0.3
    shock_sd: float = 0.5
    rho: float = 0.9
    noise_sd: float = 0.25
    est_noise_sd: float = 0.12
    est_fresh_noise_mult: float = 1.6
    est_half_width: float = 0.15
    est_tail_bias: float = 0.0  # >0 => estimates overshoot cheap lots, undershoot dear ones
    est_pred_coef: float = 0.0  # predictable estimate-error component (fresh lots)
    sold_intercept: float = 2.5
    sold_slope: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.resale_prob < 1.0:
            raise SynthError("resale_prob must lie in [0, 1)")
        if self.year_min >= self.year_max:
            raise SynthError("year span is empty")
        sds = (self.artist_sd, self.shock_sd, self.noise_sd, self.category_sd, self.medium_sd)
        if all(s == 0 for s in sds):
            raise SynthError("degenerate config: all variance components are zero")


def generate(config: DGPConfig):
    """Return (transaction records, embedding table, ground-truth dict)."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)

    artist_eff = rng.normal(0.0, cfg.artist_sd, size=cfg.n_artists)
    cat_eff = rng.normal(0.0, cfg.category_sd, size=len(CATEGORIES))
    med_eff = rng.normal(0.0, cfg.medium_sd, size=len(MEDIA))
    # fixed mixing: latent visual factor -> price-relevant scalar and embedding
    w_visual = rng.normal(size=cfg.visual_dim)
    w_visual /= np.linalg.norm(w_visual)
    mix = rng.normal(size=(cfg.visual_dim, cfg.d_backbone)) / np.sqrt(cfg.visual_dim)

    records = []
    entries = {}
    truth = {"config": asdict(cfg), "lots": {}}
    lot_counter = 0

    for obj in range(cfg.n_objects):
        artist = int(rng.integers(cfg.n_artists))
        cat = int(rng.integers(len(CATEGORIES)))
        med = int(rng.integers(len(MEDIA)))
        shape = SHAPES[int(rng.integers(len(SHAPES)))]
        height = float(np.exp(rng.normal(4.0, 0.5)))
        width = float(np.exp(rng.normal(4.0, 0.5)))
        signed = bool(rng.random() < 0.6)
        dated = bool(rng.random() < 0.4)
        n_exh = int(rng.poisson(1.5))
        n_cit = int(rng.poisson(2.0))
        z = rng.normal(size=cfg.visual_dim)
        visual_scalar = float(w_visual @ z)
        visual_term = cfg.beta_img * visual_scalar
        if MEDIA[med] == "S":
            visual_term += cfg.medium_visual_interaction * z[0]

        attr_term = (
            cfg.attr_height_coef * (np.log(height) - 4.0)
            + cfg.attr_width_coef * (np.log(width) - 4.0)
            + cfg.attr_signed_coef * signed
            + cfg.attr_cite_coef * np.log1p(n_cit)
            + cfg.attr_exhib_coef * np.log1p(n_exh)
            + cat_eff[cat]
            + med_eff[med]
        )
        value = cfg.base_log_price + artist_eff[artist] + attr_term + visual_term

        embedding = (z @ mix + rng.normal(0.0, cfg.embedding_noise_sd, size=cfg.d_backbone)).astype(
            "<f4"
        )

        # sale calendar: strictly increasing years so panel keys stay unique
        years = [int(rng.integers(cfg.year_min, cfg.year_max + 1))]
        while rng.random() < cfg.resale_prob and years[-1] < cfg.year_max:
            nxt = years[-1] + int(rng.integers(1, 9))
            if nxt > cfg.year_max:
                break
            years.append(nxt)

        shock = rng.normal(0.0, cfg.shock_sd)
        for s_idx, year in enumerate(years):
            if s_idx > 0:
                shock = cfg.rho * shock + np.sqrt(1 - cfg.rho**2) * rng.normal(0.0, cfg.shock_sd)
            noise = rng.normal(0.0, cfg.noise_sd)
            fundamental = value + cfg.trend_per_year * (year - cfg.year_min) + shock
            log_price = fundamental + noise
            is_fresh = s_idx == 0

            est_noise_sd = cfg.est_noise_sd * (cfg.est_fresh_noise_mult if is_fresh else 1.0)
            est_pred = cfg.est_pred_coef * visual_scalar if is_fresh else 0.0
            est_err = est_pred + rng.normal(0.0, est_noise_sd)
            mid_log = log_price - est_err  # tail bias applied in a second pass below

            gap = mid_log - fundamental
            p_sold = 1.0 / (1.0 + np.exp(-(cfg.sold_intercept - cfg.sold_slope * gap)))
            sold = bool(rng.random() < p_sold)

            lot_id = f"lot{lot_counter:07d}"
            lot_counter += 1
            entries[lot_id] = embedding
            records.append(
                {
                    "lot_id": lot_id,
                    "object_id": f"obj{obj:06d}",
                    "log_price": log_price,
                    "mid_log": mid_log,
                    "sold": sold,
                    "sale_year": year,
                    "sale_month": int(rng.integers(1, 13)),
                    "artist": f"artist{artist:03d}",
                    "house": HOUSES[int(rng.integers(len(HOUSES)))],
                    "location": LOCATIONS[int(rng.integers(len(LOCATIONS)))],
                    "category": CATEGORIES[cat],
                    "medium": MEDIA[med],
                    "height": height,
                    "width": width,
                    "shape": shape,
                    "signed": signed,
                    "dated": dated,
                    "n_exhibitions": n_exh,
                    "n_citations": n_cit,
                }
            )
            truth["lots"][lot_id] = {
                "value": float(value),
                "artist_effect": float(artist_eff[artist]),
                "attr_effect": float(attr_term),
                "visual_term": float(visual_term),
                "visual_scalar": visual_scalar,
                "shock": float(shock),
                "noise": float(noise),
                "estimate_error": float(est_err),
                "p_sold": float(p_sold),
            }

    # estimate tail bias: overshoot the cheap tail, undershoot the dear tail
    if cfg.est_tail_bias != 0.0:
        prices = np.array([r["log_price"] for r in records])
        pct = prices.argsort(kind="stable").argsort() / max(len(prices) - 1, 1)
        for r, p in zip(records, pct):
            r["mid_log"] += -cfg.est_tail_bias * (2.0 * p - 1.0)
            truth["lots"][r["lot_id"]]["estimate_error"] = r["log_price"] - r["mid_log"]

    out = []
    for r in records:
        mid = float(np.exp(r["mid_log"]))
        out.append(
            TransactionRecord(
                lot_id=r["lot_id"],
                object_id=r["object_id"],
                price=float(np.exp(r["log_price"])) if r["sold"] else None,
                # arithmetically symmetric band: the midpoint equals exp(mid_log)
                estimate_low=mid * (1.0 - cfg.est_half_width),
                estimate_high=mid * (1.0 + cfg.est_half_width),
                sold=r["sold"],
                sale_year=r["sale_year"],
                sale_month=r["sale_month"],
                artist=r["artist"],
                house=r["house"],
                location=r["location"],
                category=r["category"],
                medium=r["medium"],
                height=r["height"],
                width=r["width"],
                shape=r["shape"],
                signed=r["signed"],
                dated=r["dated"],
                n_exhibitions=r["n_exhibitions"],
                n_citations=r["n_citations"],
                image_ref=r["lot_id"],
            )
        )

    table = EmbeddingTable(dim=cfg.d_backbone, entries=entries, backbone_tag="synthetic")
    return out, table, truth
