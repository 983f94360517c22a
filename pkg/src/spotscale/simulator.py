"""Deterministic discrete-event simulation of the auto-scaled tier.

Monitors feed a priority event queue; handlers run the scaling policies and
drive VM lifecycles, billing and the request engine. Requests themselves are
not queue events: :class:`~spotscale.engine.RequestEngine` serves them in
batches between consecutive control events.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional

from .billing import HOUR, Ledger
from .capacity import (
    AppProfile, Catalog, InstanceType, ResourceVector, default_profile,
    num, required_capacity,
)
from .engine import RequestEngine, SimRng
from .errors import ConfigError, TraceError
from .market import MarketState, PriceTrace, price_at, terminations_due
from .policy import (
    Planner, PlanningContext, PolicyKind, ProvisionPlan, SpotAction,
    coerce_config, group_removal_sweep, place_bid, spot_hour_end,
)
from .provision import (
    Mode, Provision, ScalingConfig, adopt_orphan, capacity_of, fault_tolerance_holds, is_safe,
)
from .traces import ExperimentResult, WorkloadTrace
from .vm import Cause, Role, VmInstance, VmState

log = logging.getLogger(__name__)


class EventKind(enum.Enum):
    SPOT_TERMINATION = "spot_termination"
    VM_ONLINE = "vm_online"
    VM_OFFLINE = "vm_offline"
    BILLING_BOUNDARY = "billing_boundary"
    PRICE_CHANGE = "price_change"
    REMOVAL_SWEEP = "removal_sweep"
    UTILIZATION_SAMPLE = "utilization_sample"
    # served in batches by the request engine, never queued
    REQUEST_ARRIVAL = "request_arrival"
    REQUEST_COMPLETION = "request_completion"


PRIORITY = {
    EventKind.SPOT_TERMINATION: 0,
    EventKind.VM_ONLINE: 1,
    EventKind.VM_OFFLINE: 1,
    EventKind.BILLING_BOUNDARY: 2,
    EventKind.PRICE_CHANGE: 3,
    EventKind.REMOVAL_SWEEP: 4,
    EventKind.UTILIZATION_SAMPLE: 5,
    EventKind.REQUEST_ARRIVAL: 6,
    EventKind.REQUEST_COMPLETION: 6,
}


@dataclass(order=True)
class SimEvent:
    fire_time: float
    priority_class: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    """Pops in (fire_time, priority_class, insertion order)."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._seq = itertools.count()

    def push(self, t: float, kind: EventKind, payload=None) -> SimEvent:
        ev = SimEvent(t, PRIORITY[kind], next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def peek(self) -> Optional[SimEvent]:
        return self._heap[0] if self._heap else None

    def __len__(self):
        return len(self._heap)


@dataclass(frozen=True)
class Delay:
    mean: float
    sd: float


@dataclass(frozen=True)
class SimConfig:
    scaling: ScalingConfig
    policy: PolicyKind = PolicyKind.PROPOSED
    profile: Optional[AppProfile] = None
    duration: float = 86400.0
    seed: int = 0
    initial_on_demand: int = 5
    monitor_interval: float = 10.0
    billing_lead: float = 120.0
    timeout: float = 30.0
    startup: Delay = Delay(100.0, 20.0)
    shutdown: Delay = Delay(100.0, 20.0)
    spot_request: Delay = Delay(550.0, 50.0)
    workload_scale: float = 1.0
    jit: Optional[bool] = None

    def __post_init__(self):
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        if self.monitor_interval <= 0 or self.billing_lead < 0:
            raise ConfigError("monitor interval must be > 0 and billing lead >= 0")
        if self.workload_scale <= 0:
            raise ConfigError("workload scale must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def _plan_summary(p: Provision) -> dict:
    return {
        "mode": p.mode.value,
        "on_demand": p.on_demand_count,
        "groups": {name: len(g.members) for name, g in p.groups.items()},
        "orphans": len(p.orphans),
    }


class Simulation:
    def __init__(self, config: SimConfig, catalog: Catalog,
                 prices: Mapping[str, PriceTrace], workload: WorkloadTrace):
        self.cfg = config
        self.catalog = catalog
        self.prices = dict(prices)
        self.profile = config.profile or default_profile(catalog.dims)
        self.scaling = coerce_config(config.policy, config.scaling)
        self._validate(workload)
        self.workload = workload.scaled(config.workload_scale)
        self.rng = SimRng(config.seed)
        self.engine = RequestEngine(self.workload, config.duration, self.profile,
                                    self.rng, config.timeout, config.jit,
                                    window=config.monitor_interval)
        self.queue = EventQueue()
        self.market = MarketState.at(self.prices, 0.0)
        self.provision = Provision(self.scaling, catalog.dims)
        self.spot_types = tuple(catalog.spot_types())
        self.ledger = Ledger()
        self.instances: dict[int, VmInstance] = {}
        self._ids = itertools.count(1)
        self.now = 0.0
        self.R = ResourceVector.zeros(catalog.dims)
        self.decisions: list[dict] = []
        self.counters = dict(provider_terminations=0, launches_on_demand=0,
                             launches_spot=0, rejected_bids=0, scale_ups=0,
                             group_removals=0, replacements=0, deferred_releases=0,
                             ft_warnings=0, user_shutdowns=0)
        self._digest = hashlib.sha256()

    def _validate(self, workload: WorkloadTrace):
        d = self.cfg.duration
        if workload.start > 0 or workload.end < d:
            raise TraceError(f"workload covers [{workload.start}, {workload.end}), "
                             f"shorter than duration {d}")
        for t in self.spot_types_of(self.catalog):
            tr = self.prices.get(t.name)
            if tr is None:
                raise TraceError(f"no price trace for {t.name}")
            if tr.start > 0:
                raise TraceError(f"price trace for {t.name} starts after 0")
        if self.scaling.on_demand_type.name not in self.catalog:
            raise ConfigError("on-demand type is not in the catalog")

    @staticmethod
    def spot_types_of(catalog):
        return catalog.spot_types()

    # -- helpers -------------------------------------------------------------
    def ctx(self, excluded=frozenset()) -> PlanningContext:
        return PlanningContext(self.R, self.scaling, self.spot_types,
                               dict(self.market.prices),
                               self.profile.demand_per_request, frozenset(excluded))

    def spot_price_at(self, name: str, t: float) -> float:
        return price_at(self.prices[name], t)

    def _log(self, trigger: str, old: dict, plan: Optional[ProvisionPlan], **extra):
        rec = {"t": round(self.now, 6), "trigger": trigger, "old": old,
               "new": plan.to_dict() if plan else _plan_summary(self.provision)}
        rec.update(extra)
        self.decisions.append(rec)

    def launch(self, t: InstanceType, role: Role, bid: Optional[float] = None,
               group: Optional[str] = None) -> Optional[VmInstance]:
        now = self.now
        if role is Role.SPOT:
            if not bid > self.market.price(t.name):
                self.counters["rejected_bids"] += 1
                return None
            acquire = self.rng.gaussian("spot_request_delays", self.cfg.spot_request.mean,
                                        self.cfg.spot_request.sd)
            boot = self.rng.gaussian("startup_delays", self.cfg.startup.mean,
                                     self.cfg.startup.sd)
            anchor = now + acquire
            state = VmState.REQUESTED
            self.counters["launches_spot"] += 1
        else:
            boot = self.rng.gaussian("startup_delays", self.cfg.startup.mean,
                                     self.cfg.startup.sd)
            anchor = now
            state = VmState.BOOTING
            self.counters["launches_on_demand"] += 1
        v = VmInstance(next(self._ids), t, role, bid, request_time=now,
                       online_time=anchor + boot, billing_anchor=anchor, state=state)
        self.instances[v.id] = v
        p = self.provision
        if role is Role.ON_DEMAND:
            p.on_demand.append(v)
        elif group is not None:
            p.groups[group].members.append(v)
            v.group = group
        else:
            p.orphans.append(v)
        self.queue.push(v.online_time, EventKind.VM_ONLINE, v)
        self._schedule_billing(v, 1)
        return v

    def _schedule_billing(self, v: VmInstance, k: int):
        self.queue.push(max(self.now, v.billing_anchor + k * HOUR - self.cfg.billing_lead),
                        EventKind.BILLING_BOUNDARY, (v, k))

    def shutdown(self, v: VmInstance):
        """User-initiated shutdown: stop dispatching now, gone after the delay."""
        if not v.live:
            return
        self.provision.detach(v)
        v.state = VmState.DRAINING
        self.engine.stop_dispatch(v)
        delay = self.rng.gaussian("shutdown_delays", self.cfg.shutdown.mean,
                                  self.cfg.shutdown.sd)
        self.counters["user_shutdowns"] += 1
        self.queue.push(self.now + delay, EventKind.VM_OFFLINE, v)

    def _finish(self, v: VmInstance, cause: Cause):
        v.state = VmState.TERMINATED
        v.termination_cause = cause
        v.end_time = self.now
        self.engine.detach(v)
        self.ledger.close(v, self.now, cause, self.spot_price_at)

    # -- plan application --------------------------------------------------
    def _utilize_orphans(self, new_groups):
        p = self.provision
        m = p.margin
        for name in new_groups:
            g = p.groups[name]
            hosted = [v for other in p.groups.values() if other is not g
                      for v in other.foreigners()]
            for v in list(p.orphans) + hosted:
                if v.type.name == name:
                    adopt_orphan(p, v, g)
        for v in list(p.orphans):
            if v.type.name in p.groups:
                adopt_orphan(p, v, p.groups[v.type.name])
                continue
            for g in p.groups.values():
                if not g.satisfied(m):
                    adopt_orphan(p, v, g)
                    break

    def _fill_groups(self) -> list[str]:
        """Launch spot VMs for every quota deficit; returns groups whose bids
        the market rejected."""
        p = self.provision
        m = p.margin
        rejected = []
        for g in list(p.groups.values()):
            need = num(g.quota - g.capacity(m), g.group_type, m)
            bid = place_bid(g.group_type, self.scaling.bidding, g.truthful_bid)
            for _ in range(need):
                if self.launch(g.group_type, Role.SPOT, bid, g.name) is None:
                    rejected.append(g.name)
                    break
        return rejected

    def apply_plan(self, plan: ProvisionPlan, trigger: str, release: Optional[VmInstance] = None,
                   _retry: bool = True) -> None:
        p = self.provision
        old = _plan_summary(p)
        vm_o = self.scaling.on_demand_type
        keep = p.on_demand_count - (1 if release is not None else 0)
        if plan.mode is Mode.ON_DEMAND:
            if p.mode is Mode.SPOT:
                p.switch_to_on_demand()
            for _ in range(plan.on_demand_count - keep):
                self.launch(vm_o, Role.ON_DEMAND)
            self._log(trigger, old, plan)
            return
        p.mode = Mode.SPOT
        for _ in range(plan.on_demand_count - keep):
            self.launch(vm_o, Role.ON_DEMAND)
        new_groups = []
        for choice in plan.groups:
            if choice.type.name not in p.groups:
                p.add_group(choice.type, choice.quota, choice.truthful_bid)
                new_groups.append(choice.type.name)
            g = p.groups[choice.type.name]
            g.quota = choice.quota
            g.truthful_bid = choice.truthful_bid
        self._utilize_orphans(new_groups)
        rejected = self._fill_groups()
        self._log(trigger, old, plan)
        if rejected:
            for name in dict.fromkeys(rejected):
                p.remove_group(name)
            if _retry:
                planner = Planner(self.ctx(excluded=rejected))
                self.apply_plan(planner.scale_up(self._n_c(), list(p.groups)),
                                "rejected_bid", _retry=False)
        if not fault_tolerance_holds(p, self.R):
            self.counters["ft_warnings"] += 1

    def _n_c(self) -> int:
        return self.provision.on_demand_count

    def scale_up(self, trigger: str, excluded=frozenset()) -> None:
        self.counters["scale_ups"] += 1
        p = self.provision
        if self.cfg.policy is PolicyKind.ON_DEMAND_ONLY:
            need = num(self.R, self.scaling.on_demand_type, self.scaling.margin.m_def)
            plan = ProvisionPlan(Mode.ON_DEMAND, max(need, p.on_demand_count))
        else:
            plan = Planner(self.ctx(excluded)).scale_up(p.on_demand_count, list(p.groups))
        self.apply_plan(plan, trigger)

    def needs_scale_up(self) -> bool:
        p = self.provision
        if p.mode is Mode.SPOT:
            p.refresh_quotas(self.R)
            return not is_safe(p, self.R)
        return not p.on_demand_capacity().covers(self.R)

    def decide(self, trigger: str) -> None:
        if self.needs_scale_up():
            self.scale_up(trigger)

    # -- handlers ------------------------------------------------------------
    def on_sample(self, ev: SimEvent):
        rate = self.engine.observed_rate(self.now, self.cfg.monitor_interval)
        self.R = required_capacity(self.profile, rate)
        self.decide("utilization")
        nxt = self.now + self.cfg.monitor_interval
        if nxt < self.cfg.duration:
            self.queue.push(nxt, EventKind.UTILIZATION_SAMPLE)

    def on_price_change(self, ev: SimEvent):
        name, price = ev.payload
        self.market.prices[name] = price
        self.market.clock = self.now
        live = [(v, v.bid_price) for v in self.instances.values()
                if v.role is Role.SPOT and v.live and v.type.name == name]
        for v in terminations_due(self.market, live):
            self.queue.push(self.now, EventKind.SPOT_TERMINATION, v)

    def on_termination(self, ev: SimEvent):
        v = ev.payload
        if v.state is VmState.TERMINATED or not self.market.price(v.type.name) > v.bid_price:
            return
        self.counters["provider_terminations"] += 1
        p = self.provision
        old = _plan_summary(p)
        p.detach(v)
        self._finish(v, Cause.PROVIDER)
        if v.type.name in p.groups:
            p.remove_group(v.type.name)
            self.counters["group_removals"] += 1
            self._log("spot_termination", old, None, group=v.type.name)
        if p.mode is Mode.SPOT:
            p.refresh_quotas(self.R)
        self.decide("spot_termination")

    def on_online(self, ev: SimEvent):
        v = ev.payload
        if v.state in (VmState.REQUESTED, VmState.BOOTING):
            v.state = VmState.ONLINE
            self.engine.attach(v)

    def on_offline(self, ev: SimEvent):
        v = ev.payload
        if v.state is VmState.DRAINING:
            self._finish(v, Cause.USER)

    def on_billing(self, ev: SimEvent):
        v, k = ev.payload
        if not v.live:
            return
        if v.role is Role.ON_DEMAND:
            released = self._on_demand_hour_end(v)
        else:
            released = self._spot_hour_end(v)
        if not released:
            self._schedule_billing(v, k + 1)

    def _on_demand_hour_end(self, v: VmInstance) -> bool:
        p = self.provision
        if v not in p.on_demand:
            self.shutdown(v)
            return True
        n_c = p.on_demand_count
        if self.cfg.policy is PolicyKind.ON_DEMAND_ONLY:
            need = num(self.R, self.scaling.on_demand_type, self.scaling.margin.m_def)
            if n_c - 1 >= need:
                self.shutdown(v)
                return True
            return False
        if p.mode is Mode.SPOT:
            p.refresh_quotas(self.R)
        plan = Planner(self.ctx()).on_demand_hour_end(n_c, list(p.groups), p.mode)
        if plan is None:
            return False
        release = plan.on_demand_count < n_c
        self.apply_plan(plan, "on_demand_hour_end", release=v if release else None)
        if not release:
            return False
        if not self._safe_without(v):
            self.counters["deferred_releases"] += 1
            return False
        self.shutdown(v)
        return True

    def _safe_without(self, v: VmInstance) -> bool:
        """Do the other online VMs still cover R (with margin) without ``v``?"""
        p = self.provision
        online = [u for u in p.instances() if u is not v and u.online]
        return capacity_of(online, p.margin, p.dims).covers(self.R)

    def _spot_hour_end(self, v: VmInstance) -> bool:
        p = self.provision
        if p.mode is Mode.SPOT:
            p.refresh_quotas(self.R)
        decision = spot_hour_end(v, p)
        if decision.action is SpotAction.KEEP:
            return False
        host = p.group_of(v)
        if decision.action is SpotAction.SHUTDOWN_AND_REPLACE and host is not None:
            bid = place_bid(host.group_type, self.scaling.bidding, host.truthful_bid)
            for _ in range(decision.replace_count):
                if self.launch(host.group_type, Role.SPOT, bid, host.name) is None:
                    break
        if not self._safe_without(v):
            # replacements are still booting; keep serving for another hour
            self.counters["deferred_releases"] += 1
            return False
        self.shutdown(v)
        return True

    def on_sweep(self, ev: SimEvent):
        nxt = self.now + self.scaling.removal_interval
        if nxt < self.cfg.duration:
            self.queue.push(nxt, EventKind.REMOVAL_SWEEP)
        p = self.provision
        if self.cfg.policy is PolicyKind.ON_DEMAND_ONLY or p.mode is not Mode.SPOT:
            return
        p.refresh_quotas(self.R)
        removals = group_removal_sweep(p, self.ctx())
        if not removals:
            return
        old = _plan_summary(p)
        for r in removals:
            p.remove_group(r.group)
            self.counters["group_removals"] += 1
            if r.reason == "replaced":
                self.counters["replacements"] += 1
        self._log("removal_sweep", old, None,
                  removals=[asdict(r) for r in removals])
        self.scale_up("removal_sweep", excluded={r.group for r in removals})

    HANDLERS = {
        EventKind.UTILIZATION_SAMPLE: on_sample,
        EventKind.PRICE_CHANGE: on_price_change,
        EventKind.SPOT_TERMINATION: on_termination,
        EventKind.VM_ONLINE: on_online,
        EventKind.VM_OFFLINE: on_offline,
        EventKind.BILLING_BOUNDARY: on_billing,
        EventKind.REMOVAL_SWEEP: on_sweep,
    }

    # -- main loop -----------------------------------------------------------
    def _bootstrap(self):
        vm_o = self.scaling.on_demand_type
        for _ in range(self.cfg.initial_on_demand):
            v = VmInstance(next(self._ids), vm_o, Role.ON_DEMAND, None, request_time=0.0,
                           online_time=0.0, billing_anchor=0.0, state=VmState.ONLINE)
            self.instances[v.id] = v
            self.provision.on_demand.append(v)
            self.engine.attach(v)
            self._schedule_billing(v, 1)
        for name, tr in self.prices.items():
            for t, price in tr.samples():
                if 0 < t < self.cfg.duration:
                    self.queue.push(t, EventKind.PRICE_CHANGE, (name, price))
        self.queue.push(0.0, EventKind.UTILIZATION_SAMPLE)
        self.queue.push(self.scaling.removal_interval, EventKind.REMOVAL_SWEEP)

    def _trace(self, ev: SimEvent):
        p = ev.payload
        if isinstance(p, VmInstance):
            tag = p.id
        elif isinstance(p, tuple) and p and isinstance(p[0], VmInstance):
            tag = (p[0].id, p[1])
        else:
            tag = p
        self._digest.update(f"{ev.fire_time!r}|{ev.kind.value}|{tag!r}\n".encode())

    def run(self) -> ExperimentResult:
        duration = self.cfg.duration
        if duration > 0:
            self._bootstrap()
        while self.queue and self.queue.peek().fire_time < duration:
            ev = self.queue.pop()
            self.engine.advance(ev.fire_time)
            self.now = ev.fire_time
            self._trace(ev)
            self.HANDLERS[ev.kind](self, ev)
        self.engine.advance(duration)
        self.now = duration
        for v in self.instances.values():
            if v.state is not VmState.TERMINATED:
                v.end_time = duration
                self.ledger.close(v, duration, Cause.USER, self.spot_price_at)
        n = self.engine.n_sec
        e = self.engine
        return ExperimentResult(
            duration=duration,
            rt_sum=e.rt_sum[:n].copy(), completions=e.n_comp[:n].copy(),
            timeouts=e.n_to[:n].copy(), shortfall=e.shortfall.copy(),
            rt_hist=e.hist.copy(), ledger=self.ledger, decision_log=self.decisions,
            arrivals=e.arrivals, in_flight_end=e.in_flight,
            counters=dict(self.counters), event_digest=self._digest.hexdigest(),
        )


def run(config: SimConfig, catalog: Catalog, prices: Mapping[str, PriceTrace],
        workload: WorkloadTrace) -> ExperimentResult:
    return Simulation(config, catalog, prices, workload).run()
