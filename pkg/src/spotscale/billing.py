"""Hourly billing. Money is kept in integer micro-dollars."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Optional

from .vm import Cause, Role, VmInstance

HOUR = 3600.0
MICRO = 1_000_000
# sub-microsecond slack when deciding whether a partial hour was started
_EPS = 1e-6


def to_micro(price: float) -> int:
    return int(round(price * MICRO))


def format_money(micro: int, places: int = 4) -> str:
    q = Decimal(1).scaleb(-places)
    return str((Decimal(micro) / MICRO).quantize(q))


@dataclass(frozen=True)
class Charge:
    instance_id: int
    hour_index: int
    hour_start: float
    micro: int


def bill(instance: VmInstance, end_time: float, cause: Cause,
         spot_price_at: Optional[Callable[[str, float], float]] = None) -> list[Charge]:
    """Charges for ``instance`` billed from its anchor until ``end_time``.

    On-demand: every started hour at the on-demand price. Spot: every completed
    hour at the market price when that hour started; a partial last hour is
    charged the same way unless the provider ended it, in which case it is
    free.
    """
    anchor = instance.billing_anchor
    if anchor is None or end_time <= anchor + _EPS:
        return []
    span = end_time - anchor
    full = int(math.floor(span / HOUR + _EPS / HOUR))
    partial = span - full * HOUR > _EPS
    charges = []
    if instance.role is Role.ON_DEMAND:
        price = to_micro(instance.type.on_demand_price)
        for k in range(full + (1 if partial else 0)):
            charges.append(Charge(instance.id, k, anchor + k * HOUR, price))
        return charges
    if spot_price_at is None:
        raise ValueError("spot billing needs a market price lookup")
    hours = full + (1 if partial and cause is not Cause.PROVIDER else 0)
    for k in range(hours):
        start = anchor + k * HOUR
        charges.append(Charge(instance.id, k, start,
                              to_micro(spot_price_at(instance.type.name, start))))
    return charges


@dataclass
class LedgerEntry:
    instance_id: int
    type: str
    role: str
    hours: int
    micro: int


@dataclass
class Ledger:
    entries: dict[int, LedgerEntry] = field(default_factory=dict)

    def close(self, instance: VmInstance, end_time: float, cause: Cause,
              spot_price_at=None) -> LedgerEntry:
        charges = bill(instance, end_time, cause, spot_price_at)
        entry = LedgerEntry(instance.id, instance.type.name, instance.role.value,
                            len(charges), sum(c.micro for c in charges))
        self.entries[instance.id] = entry
        return entry

    @property
    def total_micro(self) -> int:
        return sum(e.micro for e in self.entries.values())

    def rows(self) -> list[LedgerEntry]:
        return [self.entries[k] for k in sorted(self.entries) if self.entries[k].hours > 0]
