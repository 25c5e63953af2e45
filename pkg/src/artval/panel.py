"""Repeated-sales panel construction for auction transactions.

Raw auction events arrive as :class:`TransactionRecord` rows. The panel stage
orders them chronologically per object, flags first appearances
(fresh-to-market), attaches the most recent prior sale price as an anchor
feature, imputes the missing anchor with a zero-plus-indicator scheme, and
applies the sample filters (price floor, required images/estimates,
rare-category pooling).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace, fields
from typing import Iterable, Optional

OTHER_LEVEL = "OTHER"

#: categoricals subject to the rare-level pooling rule
POOLED_CATEGORICALS = ("artist", "house", "medium")


class PanelError(ValueError):
    """Raised when input rows violate panel preconditions."""


@dataclass(frozen=True)
class TransactionRecord:
    lot_id: str
    object_id: str
    price: Optional[float]  # None when the lot was bought in
    estimate_low: Optional[float]
    estimate_high: Optional[float]
    sold: bool
    sale_year: int
    sale_month: int
    artist: str
    house: str
    location: str
    category: str
    medium: str
    height: float
    width: float
    shape: str
    signed: bool
    dated: bool
    n_exhibitions: int
    n_citations: int
    image_ref: Optional[str] = None

    def __post_init__(self):
        if not 1 <= self.sale_month <= 12:
            raise PanelError(f"lot {self.lot_id}: sale_month {self.sale_month} outside 1..12")
        if self.sold and (self.price is None or self.price <= 0):
            raise PanelError(f"lot {self.lot_id}: sold row requires a positive price")
        if (
            self.estimate_low is not None
            and self.estimate_high is not None
            and self.estimate_low > self.estimate_high
        ):
            raise PanelError(f"lot {self.lot_id}: estimate_low exceeds estimate_high")


@dataclass(frozen=True)
class PanelRow:
    record: TransactionRecord
    is_fresh: bool
    prev_price: Optional[float]
    has_prev: bool
    log_price: Optional[float]

    def __getattr__(self, name):
        # delegate raw transaction fields so panel rows read like flat records
        return getattr(object.__getattribute__(self, "record"), name)


@dataclass(frozen=True)
class FilteredPanel:
    rows: list
    train_end_year: int
    min_price: float
    min_cat_count: int
    category_maps: dict  # field -> {raw level -> retained level or OTHER}


def _sale_key(r: TransactionRecord):
    # lot_id breaks same-month ties deterministically
    return (r.sale_year, r.sale_month, r.lot_id)


def build_panel(records: Iterable[TransactionRecord]) -> list[PanelRow]:
    """Order transactions per object and derive sale-state features.

    The first chronological appearance of an object is fresh-to-market. Later
    rows carry the most recent prior *sold* price as ``prev_price``; unsold
    appearances never serve as a price anchor.
    """
    records = list(records)
    if not records:
        raise PanelError("build_panel requires at least one record")
    seen = set()
    for r in records:
        key = (r.object_id, r.sale_year, r.sale_month, r.lot_id)
        if key in seen:
            raise PanelError(f"duplicate transaction key {key}")
        seen.add(key)

    by_object: dict[str, list[TransactionRecord]] = {}
    for r in records:
        by_object.setdefault(r.object_id, []).append(r)

    rows: list[PanelRow] = []
    for object_id in sorted(by_object):
        sales = sorted(by_object[object_id], key=_sale_key)
        last_sold_price: Optional[float] = None
        for i, r in enumerate(sales):
            rows.append(
                PanelRow(
                    record=r,
                    is_fresh=(i == 0),
                    prev_price=last_sold_price,
                    has_prev=last_sold_price is not None,
                    log_price=math.log(r.price) if r.price is not None else None,
                )
            )
            if r.sold:
                last_sold_price = r.price
    return rows


def impute_prev_price(rows: list[PanelRow]) -> list[PanelRow]:
    """Replace the missing price anchor with zero, keeping the indicator.

    Rows without an observed prior sale get ``prev_price = 0`` and
    ``has_prev = False``; observed anchors are left untouched.
    """
    out = []
    for row in rows:
        if row.prev_price is None:
            out.append(replace(row, prev_price=0.0, has_prev=False))
        else:
            out.append(row)
    return out


def _pooling_map(values: list[str], min_count: int) -> dict:
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return {
        v: (v if n >= min_count or v == OTHER_LEVEL else OTHER_LEVEL)
        for v, n in counts.items()
    }


def apply_filters(
    rows: list[PanelRow],
    train_end_year: int,
    min_price: float = 10_000.0,
    min_cat_count: int = 20,
) -> FilteredPanel:
    """Apply the sample filters and pool rare categorical levels.

    Drops rows lacking an image reference or presale estimates, drops sold
    rows below ``min_price`` (unsold rows keep their estimates for the sale
    classifier), then remaps levels of the high-cardinality categoricals that
    occur fewer than ``min_cat_count`` times among training-period rows to
    ``OTHER``. Levels unseen in training map to ``OTHER`` as well, so
    evaluation never depends on categories absent from training.
    """
    years = [r.sale_year for r in rows]
    if years and not (min(years) <= train_end_year):
        raise PanelError(f"train_end_year {train_end_year} precedes the data range")

    kept = [
        r
        for r in rows
        if r.image_ref is not None
        and r.estimate_low is not None
        and r.estimate_high is not None
        and (not r.sold or r.price >= min_price)
    ]
    if not kept:
        raise PanelError("no rows survive filtering")

    train_rows = [r for r in kept if r.sale_year <= train_end_year]
    maps = {
        field: _pooling_map([getattr(r, field) for r in train_rows], min_cat_count)
        for field in POOLED_CATEGORICALS
    }

    remapped = []
    for r in kept:
        updates = {}
        for field, mapping in maps.items():
            raw = getattr(r, field)
            updates[field] = mapping.get(raw, OTHER_LEVEL)
        remapped.append(replace(r, record=replace(r.record, **updates)))

    return FilteredPanel(
        rows=remapped,
        train_end_year=train_end_year,
        min_price=min_price,
        min_cat_count=min_cat_count,
        category_maps=maps,
    )


# ---------------------------------------------------------------------------
# delimited text I/O

_RECORD_FIELDS = [f.name for f in fields(TransactionRecord)]
_DERIVED_FIELDS = ["is_fresh", "prev_price", "has_prev", "log_price"]

_BOOL_FIELDS = {"sold", "signed", "dated", "is_fresh", "has_prev"}
_INT_FIELDS = {"sale_year", "sale_month", "n_exhibitions", "n_citations"}
_FLOAT_FIELDS = {
    "price",
    "estimate_low",
    "estimate_high",
    "height",
    "width",
    "prev_price",
    "log_price",
}


def _parse(field: str, raw: str):
    if raw == "":
        return None
    if field in _BOOL_FIELDS:
        return raw.lower() in ("true", "1")
    if field in _INT_FIELDS:
        return int(raw)
    if field in _FLOAT_FIELDS:
        return float(raw)
    return raw


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_records(path) -> list[TransactionRecord]:
    """Read raw transactions from a comma-separated UTF-8 file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(_RECORD_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise PanelError(f"input file missing columns: {sorted(missing)}")
        records = []
        for line in reader:
            kwargs = {f: _parse(f, line[f]) for f in _RECORD_FIELDS}
            records.append(TransactionRecord(**kwargs))
    if not records:
        raise PanelError(f"no data rows in {path}")
    return records


def write_records(records: list[TransactionRecord], path) -> None:
    """Write raw transactions (no derived columns) as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RECORD_FIELDS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, f)) for f in _RECORD_FIELDS])


def write_rows(rows: list[PanelRow], path) -> None:
    """Write panel rows (raw columns plus derived ones) as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_RECORD_FIELDS + _DERIVED_FIELDS)
        for row in rows:
            rec = [_fmt(getattr(row.record, f)) for f in _RECORD_FIELDS]
            der = [_fmt(getattr(row, f)) for f in _DERIVED_FIELDS]
            writer.writerow(rec + der)


def read_rows(path) -> list[PanelRow]:
    """Read panel rows previously written by :func:`write_rows`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = set(_RECORD_FIELDS + _DERIVED_FIELDS)
        missing = need - set(reader.fieldnames or [])
        if missing:
            raise PanelError(f"panel file missing columns: {sorted(missing)}")
        rows = []
        for line in reader:
            rec = TransactionRecord(**{f: _parse(f, line[f]) for f in _RECORD_FIELDS})
            rows.append(
                PanelRow(
                    record=rec,
                    is_fresh=_parse("is_fresh", line["is_fresh"]),
                    prev_price=_parse("prev_price", line["prev_price"]),
                    has_prev=bool(_parse("has_prev", line["has_prev"])),
                    log_price=_parse("log_price", line["log_price"]),
                )
            )
    if not rows:
        raise PanelError(f"no data rows in {path}")
    return rows
