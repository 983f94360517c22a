import pytest

from spotscale.errors import CatalogError, TraceError
from spotscale.market import (
    Bid, MarketState, PriceTrace, bid_accepted, first_termination_time, price_at,
    terminations_due,
)
from spotscale.vm import Role

from conftest import make_vm, small_catalog


def trace():
    return PriceTrace.from_samples("a", [(0, 0.02), (300, 0.05), (600, 0.03)])


def test_price_at_is_right_continuous_step():
    tr = trace()
    assert price_at(tr, 0) == 0.02
    assert price_at(tr, 299.9) == 0.02
    assert price_at(tr, 300) == 0.05
    assert price_at(tr, 1e9) == 0.03


def test_price_before_first_sample():
    with pytest.raises(TraceError):
        price_at(trace(), -1)


@pytest.mark.parametrize("samples", [[], [(0, 1), (0, 2)], [(0, 1), (5, 0)]])
def test_trace_validation(samples):
    with pytest.raises(TraceError):
        PriceTrace.from_samples("a", samples)


def test_bid_must_strictly_exceed_price():
    m = MarketState({"a": 0.05})
    assert bid_accepted(Bid("a", 1, 0.051), m)
    assert not bid_accepted(Bid("a", 1, 0.05), m)
    with pytest.raises(ValueError):
        Bid("a", 0, 1.0)
    with pytest.raises(CatalogError):
        m.price("zz")


def test_terminations_only_when_price_above_bid():
    cat = small_catalog()
    v1 = make_vm(cat["a"], bid=0.05)
    v2 = make_vm(cat["a"], bid=0.04)
    od = make_vm(cat["od"], role=Role.ON_DEMAND)
    m = MarketState({"a": 0.05, "od": 9.0})
    due = terminations_due(m, [(v1, v1.bid_price), (v2, v2.bid_price), (od, None)])
    assert due == [v2]


def test_first_termination_time():
    tr = trace()
    assert first_termination_time(tr, 0.04, 0) == 300
    assert first_termination_time(tr, 0.04, 400) == 400
    assert first_termination_time(tr, 0.06, 0) is None


def test_market_at_snapshot():
    m = MarketState.at({"a": trace()}, 310)
    s = m.snapshot()
    m.prices["a"] = 1.0
    assert s.price("a") == 0.05 and s.clock == 310
