"""Scaling decisions: baseline cost, truthful bids, planners and scale-down.

The planners are pure: they read a :class:`PlanningContext` snapshot plus the
current on-demand count and group types and return a :class:`ProvisionPlan`.
Applying a plan (launching, adopting orphans) is the simulator's job.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from .capacity import (
    InstanceType, ResourceVector, effective_capacity, num, request_capacity,
)
from .errors import ConfigError, PlanError
from .provision import BiddingStrategy, Mode, Provision, ScalingConfig, capacity_of, quota


class PolicyKind(enum.Enum):
    PROPOSED = "proposed"
    ON_DEMAND_ONLY = "on_demand_only"
    ONE_SPOT_TYPE = "one_spot_type"


@dataclass(frozen=True)
class GroupChoice:
    type: InstanceType
    count: int
    quota: ResourceVector
    truthful_bid: float
    market_price: float

    @property
    def cost(self) -> float:
        return self.count * self.market_price


@dataclass(frozen=True)
class ProvisionPlan:
    mode: Mode
    on_demand_count: int
    groups: tuple[GroupChoice, ...] = ()
    hourly_cost: float = 0.0

    @property
    def group_names(self) -> tuple[str, ...]:
        return tuple(g.type.name for g in self.groups)

    @property
    def total_instances(self) -> int:
        return self.on_demand_count + sum(g.count for g in self.groups)

    def sort_key(self):
        # cost first; ties prefer fewer instances, fewer groups, then names
        return (self.hourly_cost, self.total_instances, len(self.groups),
                tuple(sorted(self.group_names)))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "on_demand": self.on_demand_count,
            "groups": [
                {"type": g.type.name, "count": g.count, "quota": list(g.quota.values),
                 "tb": g.truthful_bid, "price": g.market_price}
                for g in self.groups
            ],
            "cost": self.hourly_cost,
        }


@dataclass(frozen=True)
class PlanningContext:
    R: ResourceVector
    config: ScalingConfig
    spot_types: tuple[InstanceType, ...]
    market: Mapping[str, float]
    demand: Optional[ResourceVector] = None
    excluded: frozenset = frozenset()

    @property
    def margin(self) -> float:
        return self.config.margin_for(Mode.SPOT)

    @property
    def vm_o(self) -> InstanceType:
        return self.config.on_demand_type

    def baseline_cost(self) -> float:
        return on_demand_baseline_cost(self.R, self.vm_o, self.config.margin.m_def)

    def price_per_capacity(self, t: InstanceType) -> float:
        return self.market[t.name] / request_capacity(
            effective_capacity(t, self.margin), self.demand)


def on_demand_baseline_cost(R: ResourceVector, vm_o: InstanceType, m: float) -> float:
    """Hourly cost of serving ``R`` with on-demand VMs only."""
    return num(R, vm_o, m) * vm_o.on_demand_price


def truthful_bid(C_o: float, r_o_cost: float, s: int, n_q: int) -> float:
    """Per-instance bid at which the whole provision costs exactly ``C_o``."""
    if s < 1:
        raise PlanError("truthful bid needs at least one group")
    if n_q <= 0:
        raise PlanError("truthful bid undefined for a group that needs no instances")
    return (C_o - r_o_cost) / (s * n_q)


def place_bid(t: InstanceType, strategy: BiddingStrategy, truthful_value: float) -> float:
    if strategy is BiddingStrategy.ON_DEMAND_PRICE:
        return t.on_demand_price
    return truthful_value


def plan_cost(n_on_demand: int, vm_o: InstanceType, groups: Iterable[GroupChoice]) -> float:
    # fsum keeps the estimate independent of summation order
    return math.fsum([n_on_demand * vm_o.on_demand_price] + [g.cost for g in groups])


def on_demand_plan(n: int, vm_o: InstanceType) -> ProvisionPlan:
    return ProvisionPlan(Mode.ON_DEMAND, n, (), n * vm_o.on_demand_price)


class Planner:
    """Scale-up, fixed-on-demand search and on-demand hour-end decisions over
    one planning snapshot.

    ``visits`` counts truthful-bid evaluations (one per (n, s, type)), which
    bounds the search at N * S * |T|.
    """

    def __init__(self, ctx: PlanningContext):
        self.ctx = ctx
        self.visits = 0

    def _group(self, t: InstanceType, q: ResourceVector, n: int, s: int,
               C_o: float) -> Optional[GroupChoice]:
        n_q = num(q, t, self.ctx.margin)
        if n_q == 0:
            return None
        tb = truthful_bid(C_o, n * self.ctx.vm_o.on_demand_price, s, n_q)
        return GroupChoice(t, n_q, q, tb, self.ctx.market[t.name])

    def find_given_on_demand(self, n: int, current: Sequence[str]) -> Optional[ProvisionPlan]:
        ctx, cfg = self.ctx, self.ctx.config
        if n < 0:
            raise PlanError("on-demand count must be >= 0")
        types = {t.name: t for t in ctx.spot_types}
        unknown = [g for g in current if g not in types]
        if unknown:
            raise PlanError(f"current groups {unknown} are not spot types")
        min_groups = max(len(current), cfg.f + 1)
        max_groups = min(len(types), cfg.max_groups)
        if max_groups < min_groups:
            return None
        C_o = ctx.baseline_cost()
        r_o = (effective_capacity(ctx.vm_o, ctx.margin) * n).minimum(ctx.R)
        best = None
        for s in range(min_groups, max_groups + 1):
            q = quota(ctx.R, r_o, s, cfg.f)
            if q.is_zero():
                continue
            choices = {}
            for t in ctx.spot_types:
                self.visits += 1
                choices[t.name] = self._group(t, q, n, s, C_o)
            kept = [choices[name] for name in current]
            eligible = [
                c for name, c in choices.items()
                if name not in current and name not in ctx.excluded
                and c.truthful_bid > c.market_price
            ]
            k = s - len(current)
            if len(eligible) < k:
                continue
            eligible.sort(key=lambda c: (c.cost, ctx.price_per_capacity(c.type),
                                         c.type.name))
            groups = tuple(kept + eligible[:k])
            plan = ProvisionPlan(Mode.SPOT, n, groups, plan_cost(n, ctx.vm_o, groups))
            if best is None or plan.sort_key() < best.sort_key():
                best = plan
        return best

    def on_demand_fallback(self, n_c: int = 0) -> ProvisionPlan:
        n = num(self.ctx.R, self.ctx.vm_o, self.ctx.config.margin.m_def)
        return on_demand_plan(max(n, n_c), self.ctx.vm_o)

    def scale_up(self, n_c: int, current: Sequence[str]) -> ProvisionPlan:
        ctx = self.ctx
        lo = max(n_c, num(ctx.R * ctx.config.on_demand_share, ctx.vm_o, ctx.margin))
        hi = num(ctx.R, ctx.vm_o, ctx.margin)
        candidates = []
        for n in range(lo, hi + 1):
            p = self.find_given_on_demand(n, current)
            if p is not None:
                candidates.append(p)
        if not candidates:
            return self.on_demand_fallback(n_c)
        return min(candidates, key=ProvisionPlan.sort_key)

    def on_demand_hour_end(self, n_c: int, current: Sequence[str],
                           mode: Mode) -> Optional[ProvisionPlan]:
        """Target provision when an on-demand VM reaches its hour mark.

        Returns None when the instance must be kept because on-demand capacity
        is at the O floor; otherwise the chosen plan, whose on-demand count is
        below ``n_c`` iff the instance should be released.
        """
        ctx = self.ctx
        if n_c <= num(ctx.R * ctx.config.on_demand_share, ctx.vm_o, ctx.margin):
            return None
        p1 = self.find_given_on_demand(n_c, current)
        p2 = self.find_given_on_demand(n_c - 1, current)
        if mode is Mode.ON_DEMAND:
            if p2 is not None:
                return p2
            need = num(ctx.R, ctx.vm_o, ctx.config.margin.m_def)
            return on_demand_plan(n_c - 1 if n_c - 1 >= need else n_c, ctx.vm_o)
        if p1 is None and p2 is None:
            need = num(ctx.R, ctx.vm_o, ctx.config.margin.m_def)
            return on_demand_plan(n_c - 1 if need < n_c else need, ctx.vm_o)
        if p2 is None:
            return p1
        if p1 is None:
            return p2
        # equal cost keeps the instance
        return p2 if p2.hourly_cost < p1.hourly_cost else p1


def scale_up(ctx: PlanningContext, n_c: int, current: Sequence[str]) -> ProvisionPlan:
    return Planner(ctx).scale_up(n_c, current)


def find_provision_given_on_demand(ctx: PlanningContext, n: int,
                                   current: Sequence[str]) -> Optional[ProvisionPlan]:
    return Planner(ctx).find_given_on_demand(n, current)


def on_demand_hour_end(ctx: PlanningContext, n_c: int, current: Sequence[str],
                       mode: Mode) -> Optional[ProvisionPlan]:
    return Planner(ctx).on_demand_hour_end(n_c, current, mode)


class SpotAction(enum.Enum):
    KEEP = "keep"
    SHUTDOWN = "shutdown"
    SHUTDOWN_AND_REPLACE = "shutdown_and_replace"


@dataclass(frozen=True)
class SpotDecision:
    action: SpotAction
    replace_count: int = 0


def spot_hour_end(instance, provision: Provision) -> SpotDecision:
    """Decide the fate of a spot VM at the end of its billing hour."""
    group = provision.group_of(instance)
    if group is None or instance not in group.members:
        return SpotDecision(SpotAction.SHUTDOWN)
    m = provision.margin
    if instance.type.name == group.name:
        # foreign members are on their way out, so only natives may stand in
        others = [v for v in group.natives() if v is not instance and v.online]
        if capacity_of(others, m, len(group.quota)).covers(group.quota):
            return SpotDecision(SpotAction.SHUTDOWN)
        return SpotDecision(SpotAction.KEEP)
    deficit = group.quota - group.capacity(m, exclude=instance)
    return SpotDecision(SpotAction.SHUTDOWN_AND_REPLACE, num(deficit, group.group_type, m))


def current_truthful_bids(provision: Provision, ctx: PlanningContext) -> dict[str, float]:
    """Truthful bid of every chosen group under the present load.

    Groups whose quota needs no instances get a bid of 0.
    """
    s = len(provision.groups)
    if s == 0:
        return {}
    C_o = ctx.baseline_cost()
    r_cost = provision.on_demand_count * ctx.vm_o.on_demand_price
    out = {}
    for name, g in provision.groups.items():
        n_q = num(g.quota, g.group_type, ctx.margin)
        out[name] = truthful_bid(C_o, r_cost, s, n_q) if n_q > 0 else 0.0
    return out


@dataclass(frozen=True)
class GroupRemoval:
    group: str
    reason: str  # "over_bid" or "replaced"
    replacement: Optional[str] = None


def group_removal_sweep(provision: Provision, ctx: PlanningContext) -> list[GroupRemoval]:
    """Groups to evict: those priced above their truthful bid, plus at most one
    group to swap for a clearly cheaper unchosen type.

    Candidates are compared by what they would cost to fill the current quota
    (instances needed times market price), the same ranking scale-up uses.
    """
    if provision.mode is not Mode.SPOT or not provision.groups:
        return []
    bids = current_truthful_bids(provision, ctx)
    for name, tb in bids.items():
        provision.groups[name].truthful_bid = tb
    removals = [GroupRemoval(name, "over_bid")
                for name, tb in bids.items() if ctx.market[name] > tb]
    removed = {r.group for r in removals}
    survivors = [g for name, g in provision.groups.items() if name not in removed]
    if not survivors:
        return removals
    s = len(provision.groups)
    C_o = ctx.baseline_cost()
    r_cost = provision.on_demand_count * ctx.vm_o.on_demand_price
    q = survivors[0].quota

    def group_cost(t: InstanceType) -> float:
        return num(q, t, ctx.margin) * ctx.market[t.name]

    best = None
    for t in ctx.spot_types:
        if t.name in provision.groups or t.name in ctx.excluded:
            continue
        n_q = num(q, t, ctx.margin)
        if n_q == 0 or truthful_bid(C_o, r_cost, s, n_q) <= ctx.market[t.name]:
            continue
        key = (group_cost(t), ctx.price_per_capacity(t), t.name)
        if best is None or key < best[0]:
            best = (key, t)
    if best is None:
        return removals
    # same ranking the planner uses, so the replacement is what scale_up picks
    worst = max(survivors, key=lambda g: (group_cost(g.group_type), g.name))
    threshold = group_cost(worst.group_type) * (1 - ctx.config.replacement_hysteresis)
    if best[0][0] < threshold:
        removals.append(GroupRemoval(worst.name, "replaced", best[1].name))
    return removals


def coerce_config(kind: PolicyKind, config: ScalingConfig) -> ScalingConfig:
    """Scaling parameters a benchmark policy runs with."""
    if kind is PolicyKind.ONE_SPOT_TYPE:
        return replace(config, f=0, max_groups=1)
    return config


def benchmark_policy(kind: PolicyKind, ctx: PlanningContext, n_c: int,
                     current: Sequence[str]) -> ProvisionPlan:
    """Scale-up target under one of the comparison policies."""
    if kind is PolicyKind.ON_DEMAND_ONLY:
        return Planner(ctx).on_demand_fallback(n_c)
    if kind is PolicyKind.ONE_SPOT_TYPE:
        ctx = replace(ctx, config=coerce_config(kind, ctx.config))
        return Planner(ctx).scale_up(n_c, current)
    raise ConfigError(f"{kind} is not a benchmark policy")
