"""Spot price replay, bid matching and provider terminations."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import CatalogError, TraceError


@dataclass(frozen=True)
class PriceTrace:
    instance_type: str
    times: tuple[float, ...]
    prices: tuple[float, ...]

    def __post_init__(self):
        if not self.times:
            raise TraceError(f"{self.instance_type}: empty price trace")
        if len(self.times) != len(self.prices):
            raise TraceError(f"{self.instance_type}: times/prices length mismatch")
        for a, b in zip(self.times, self.times[1:]):
            if not b > a:
                raise TraceError(
                    f"{self.instance_type}: timestamps not strictly increasing at {b}"
                )
        if any(not p > 0 for p in self.prices):
            raise TraceError(f"{self.instance_type}: prices must be > 0")

    @classmethod
    def from_samples(cls, instance_type: str, samples: Iterable[tuple[float, float]]):
        samples = list(samples)
        return cls(instance_type, tuple(float(t) for t, _ in samples),
                   tuple(float(p) for _, p in samples))

    @property
    def start(self) -> float:
        return self.times[0]

    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.prices))


def price_at(trace: PriceTrace, t: float) -> float:
    """Right-continuous step interpolation of ``trace`` at time ``t``."""
    i = bisect.bisect_right(trace.times, t) - 1
    if i < 0:
        raise TraceError(
            f"{trace.instance_type}: time {t} precedes first sample {trace.start}"
        )
    return trace.prices[i]


@dataclass(frozen=True)
class Bid:
    instance_type: str
    count: int
    max_price: float

    def __post_init__(self):
        if self.count < 1 or not self.max_price > 0:
            raise ValueError("bid needs count >= 1 and max_price > 0")


@dataclass
class MarketState:
    """Current spot price of every type; owned by the simulation loop."""

    prices: dict[str, float] = field(default_factory=dict)
    clock: float = 0.0

    @classmethod
    def at(cls, traces: Mapping[str, PriceTrace], t: float) -> "MarketState":
        return cls({name: price_at(tr, t) for name, tr in traces.items()}, t)

    def price(self, instance_type: str) -> float:
        try:
            return self.prices[instance_type]
        except KeyError:
            raise CatalogError(f"no market price for {instance_type!r}") from None

    def snapshot(self) -> "MarketState":
        return MarketState(dict(self.prices), self.clock)


def bid_accepted(bid: Bid, market: MarketState) -> bool:
    return bid.max_price > market.price(bid.instance_type)


def terminations_due(market: MarketState, live_spot: Sequence[tuple[object, float]]):
    """Instances whose bid is strictly below their type's market price.

    ``live_spot`` holds ``(instance, bid_price)`` pairs; each instance must
    expose a ``type`` attribute with a ``name`` (or be the type name itself via
    ``instance_type``). On-demand instances carry no bid and are skipped.
    """
    due = []
    for inst, bid in live_spot:
        if bid is None:
            continue
        name = _type_name(inst)
        if market.price(name) > bid:
            due.append(inst)
    return due


def _type_name(inst) -> str:
    t = getattr(inst, "type", None)
    if t is not None:
        return getattr(t, "name", t)
    return inst.instance_type


def first_termination_time(trace: PriceTrace, bid: float, after: float) -> float | None:
    """First sample time at or after ``after`` whose price exceeds ``bid``."""
    i = max(0, bisect.bisect_right(trace.times, after) - 1)
    for t, p in zip(trace.times[i:], trace.prices[i:]):
        if p > bid:
            return max(t, after)
    return None
