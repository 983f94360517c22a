"""Provision state: spot groups, quotas, orphans and the safety predicate."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional

from .capacity import (
    InstanceType, MarginMode, MarginPolicy, ResourceVector, dynamic_margin,
    effective_capacity, num,
)
from .errors import ConfigError, ModeError, MoveError, PlanError
from .vm import VmInstance

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    SPOT = "spot"
    ON_DEMAND = "on_demand"


class BiddingStrategy(enum.Enum):
    TRUTHFUL = "truthful"
    ON_DEMAND_PRICE = "on_demand"


@dataclass(frozen=True)
class ScalingConfig:
    on_demand_type: InstanceType
    f: int = 1
    on_demand_share: float = 0.0
    max_groups: int = 4
    bidding: BiddingStrategy = BiddingStrategy.TRUTHFUL
    margin: MarginPolicy = MarginPolicy()
    removal_interval: float = 1800.0
    # relative price-per-capacity advantage required before a group is replaced
    replacement_hysteresis: float = 0.05

    def __post_init__(self):
        if not 0 <= self.f <= self.margin.f_max:
            raise ConfigError(f"f={self.f} outside [0, {self.margin.f_max}]")
        if self.f + 1 > self.max_groups:
            raise ConfigError(f"f + 1 = {self.f + 1} exceeds max groups S = {self.max_groups}")
        if not 0 <= self.on_demand_share <= 1:
            raise ConfigError("on-demand share O must lie in [0, 1]")
        if self.removal_interval <= 0:
            raise ConfigError("removal interval must be positive")

    def margin_for(self, mode: Mode) -> float:
        """Margin in force. The dynamic rule only applies to over-provisioned
        (f >= 1) Spot Mode provisions; everything else keeps the default."""
        if mode is Mode.SPOT and self.margin.mode is MarginMode.DYNAMIC and self.f >= 1:
            return dynamic_margin(self.margin, self.f)
        return self.margin.m_def


def quota(R: ResourceVector, r_o: ResourceVector, s: int, f: int) -> ResourceVector:
    if s <= f:
        raise PlanError(f"need more groups than the fault-tolerant level (s={s}, f={f})")
    return (R - r_o) / (s - f)


def capacity_of(instances: Iterable[VmInstance], m: float, dims: int) -> ResourceVector:
    return ResourceVector.total((effective_capacity(v.type, m) for v in instances), dims)


@dataclass
class SpotGroup:
    group_type: InstanceType
    quota: ResourceVector
    members: list[VmInstance] = field(default_factory=list)
    truthful_bid: float = 0.0

    @property
    def name(self) -> str:
        return self.group_type.name

    def capacity(self, m: float, exclude: Optional[VmInstance] = None,
                 online_only: bool = False) -> ResourceVector:
        members = [v for v in self.members if v is not exclude
                   and (v.online or not online_only)]
        return capacity_of(members, m, len(self.quota))

    def satisfied(self, m: float, **kw) -> bool:
        return self.capacity(m, **kw).covers(self.quota)

    def natives(self) -> list[VmInstance]:
        return [v for v in self.members if v.type.name == self.name]

    def foreigners(self) -> list[VmInstance]:
        return [v for v in self.members if v.type.name != self.name]


@dataclass
class Provision:
    config: ScalingConfig
    dims: int
    mode: Mode = Mode.ON_DEMAND
    on_demand: list[VmInstance] = field(default_factory=list)
    groups: dict[str, SpotGroup] = field(default_factory=dict)
    orphans: list[VmInstance] = field(default_factory=list)

    @property
    def f(self) -> int:
        return self.config.f

    @property
    def margin(self) -> float:
        return self.config.margin_for(self.mode)

    @property
    def on_demand_count(self) -> int:
        return len(self.on_demand)

    def instances(self) -> list[VmInstance]:
        out = list(self.on_demand)
        for g in self.groups.values():
            out.extend(g.members)
        out.extend(self.orphans)
        return out

    def on_demand_capacity(self, online_only: bool = False) -> ResourceVector:
        vs = [v for v in self.on_demand if v.online or not online_only]
        return capacity_of(vs, self.margin, self.dims)

    def total_capacity(self, online_only: bool = False) -> ResourceVector:
        """Provision capacity (orphans in the queue excluded)."""
        total = self.on_demand_capacity(online_only)
        for g in self.groups.values():
            total = total + g.capacity(self.margin, online_only=online_only)
        return total

    def on_demand_target(self, R: ResourceVector) -> ResourceVector:
        """r_o the policies enforce: the capacity of num(R*O) on-demand VMs."""
        vm_o = self.config.on_demand_type
        n = num(R * self.config.on_demand_share, vm_o, self.margin)
        return effective_capacity(vm_o, self.margin) * n

    def refresh_quotas(self, R: ResourceVector) -> bool:
        """Recompute every group's quota for load ``R``.

        Returns False (quotas zeroed) when too few groups remain to form a
        quota, which callers treat as an unsafe provision.
        """
        s = len(self.groups)
        if self.mode is not Mode.SPOT or s <= self.f:
            for g in self.groups.values():
                g.quota = ResourceVector.zeros(self.dims)
            return False
        r_o = self.on_demand_capacity().minimum(R)
        q = quota(R, r_o, s, self.f)
        for g in self.groups.values():
            g.quota = q
        return True

    def group_of(self, v: VmInstance) -> Optional[SpotGroup]:
        return self.groups.get(v.group) if v.group is not None else None

    def detach(self, v: VmInstance) -> None:
        """Remove ``v`` from whichever container holds it."""
        if v in self.on_demand:
            self.on_demand.remove(v)
        elif v in self.orphans:
            self.orphans.remove(v)
        else:
            g = self.group_of(v)
            if g is not None and v in g.members:
                g.members.remove(v)
        v.group = None

    def add_group(self, t: InstanceType, q: ResourceVector, tb: float) -> SpotGroup:
        if t.name in self.groups:
            raise MoveError(f"group {t.name} already chosen")
        g = SpotGroup(t, q, [], tb)
        self.groups[t.name] = g
        return g

    def remove_group(self, name: str) -> list[VmInstance]:
        """Evict a group; its live members join the orphan queue."""
        g = self.groups.pop(name)
        orphaned = []
        for v in g.members:
            v.group = None
            if v.live:
                self.orphans.append(v)
                orphaned.append(v)
        return orphaned

    def switch_to_on_demand(self) -> None:
        for name in list(self.groups):
            self.remove_group(name)
        self.mode = Mode.ON_DEMAND

    def snapshot(self) -> dict:
        """Plain-data view for logs and golden files."""
        def inst(v):
            return {"id": v.id, "type": v.type.name, "bid": v.bid_price,
                    "state": v.state.value}
        return {
            "mode": self.mode.value,
            "on_demand_count": self.on_demand_count,
            "groups": [
                {"type": g.name, "quota": list(g.quota.values),
                 "truthful_bid": g.truthful_bid,
                 "members": [inst(v) for v in g.members]}
                for g in self.groups.values()
            ],
            "orphans": [inst(v) for v in self.orphans],
        }


def is_safe(p: Provision, R: ResourceVector) -> bool:
    if p.mode is not Mode.SPOT:
        raise ModeError("safety is only defined for Spot Mode; use capacity >= R")
    if len(p.groups) <= p.f:
        return False
    if not p.on_demand_capacity().covers(p.on_demand_target(R)):
        return False
    return all(g.satisfied(p.margin) for g in p.groups.values())


def surviving_capacity(p: Provision, killed_types: Iterable[str],
                       online_only: bool = False) -> ResourceVector:
    """Capacity left after every instance of ``killed_types`` disappears."""
    killed = set(killed_types)
    vs = [v for v in p.on_demand if v.online or not online_only]
    for g in p.groups.values():
        vs.extend(v for v in g.members
                  if v.type.name not in killed and (v.online or not online_only))
    return capacity_of(vs, p.margin, p.dims)


def fault_tolerance_holds(p: Provision, R: ResourceVector) -> bool:
    """Exhaustively check that losing any <= f member types keeps R covered."""
    types = sorted({v.type.name for g in p.groups.values() for v in g.members})
    for k in range(0, min(p.f, len(types)) + 1):
        for killed in combinations(types, k):
            if not surviving_capacity(p, killed).covers(R):
                return False
    return True


def adopt_orphan(p: Provision, orphan: VmInstance, target: SpotGroup) -> Provision:
    """Move an orphan (queued or hosted as a foreigner) into ``target``.

    An orphan of the group's own type becomes a native member; anything else
    is a temporary foreign member and keeps its own type, bid and billing.
    """
    host = p.group_of(orphan)
    if host is not None and orphan.type.name == host.name:
        raise MoveError(f"instance {orphan.id} is a native member of {host.name}")
    if orphan not in p.orphans and host is None:
        raise MoveError(f"instance {orphan.id} is not an orphan")
    if target.name not in p.groups or p.groups[target.name] is not target:
        raise MoveError(f"group {target.name} is not part of the provision")
    if orphan.type.name != target.name and target.satisfied(p.margin):
        raise MoveError(f"group {target.name} already meets its quota")
    p.detach(orphan)
    target.members.append(orphan)
    orphan.group = target.name
    return p
