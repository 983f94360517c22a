from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

from .capacity import InstanceType


class Role(enum.Enum):
    ON_DEMAND = "on_demand"
    SPOT = "spot"


class VmState(enum.Enum):
    REQUESTED = "requested"
    BOOTING = "booting"
    ONLINE = "online"
    DRAINING = "draining"
    TERMINATED = "terminated"


class Cause(enum.Enum):
    NONE = "none"
    USER = "user"
    PROVIDER = "provider"


LIVE_STATES = (VmState.REQUESTED, VmState.BOOTING, VmState.ONLINE)


@dataclass(eq=False)
class VmInstance:
    """A simulated machine. Identity is by object; ``id`` is for reports."""

    id: int
    type: InstanceType
    role: Role
    bid_price: Optional[float] = None
    request_time: float = 0.0
    online_time: Optional[float] = None
    billing_anchor: Optional[float] = None
    state: VmState = VmState.REQUESTED
    termination_cause: Cause = Cause.NONE
    end_time: Optional[float] = None
    # group type name, or None when the instance sits in the on-demand pool or
    # the orphan queue
    group: Optional[str] = None

    def __post_init__(self):
        if self.role is Role.SPOT and not (self.bid_price and self.bid_price > 0):
            raise ValueError("spot instances need a positive bid")
        if self.role is Role.ON_DEMAND and self.bid_price is not None:
            raise ValueError("on-demand instances carry no bid")

    @property
    def live(self) -> bool:
        return self.state in LIVE_STATES

    @property
    def online(self) -> bool:
        return self.state is VmState.ONLINE

    def __repr__(self):
        return f"VmInstance({self.id}, {self.type.name}, {self.role.value}, {self.state.value})"
