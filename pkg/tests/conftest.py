import numpy as np
import pytest

from artval.panel import TransactionRecord


def make_record(**overrides):
    base = dict(
        lot_id="lot1",
        object_id="obj1",
        price=50_000.0,
        estimate_low=40_000.0,
        estimate_high=60_000.0,
        sold=True,
        sale_year=2000,
        sale_month=6,
        artist="artistA",
        house="houseA",
        location="New York",
        category="IMP",
        medium="OC",
        height=60.0,
        width=80.0,
        shape="rect",
        signed=True,
        dated=False,
        n_exhibitions=2,
        n_citations=3,
        image_ref="img1",
    )
    base.update(overrides)
    return TransactionRecord(**base)


@pytest.fixture
def record_factory():
    return make_record


@pytest.fixture
def rng():
    return np.random.default_rng(0)
