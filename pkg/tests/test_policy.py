import math
import random

import pytest

from spotscale.capacity import num
from spotscale.errors import ConfigError, PlanError
from spotscale.policy import (
    Planner, PlanningContext, PolicyKind, SpotAction, benchmark_policy, coerce_config,
    current_truthful_bids, group_removal_sweep, on_demand_baseline_cost, place_bid,
    scale_up, spot_hour_end, truthful_bid,
)
from spotscale.provision import BiddingStrategy, Mode, adopt_orphan
from spotscale.vm import VmState

from conftest import build_safe, config, make_vm, small_catalog, vec
from oracles import brute_force_min_cost

R = vec(20, 10, 200, 80)
PRICES = {"od": 0.05, "a": 0.02, "b": 0.03, "c": 0.07, "d": 0.009}


def ctx_for(cat, cfg, R=R, prices=PRICES, **kw):
    return PlanningContext(R, cfg, tuple(cat.spot_types()), dict(prices), **kw)


def test_baseline_cost_uses_default_margin(catalog):
    # 20 ECU on 4 * 0.75 = 3 -> 7 VMs
    assert on_demand_baseline_cost(R, catalog["od"], 0.25) == pytest.approx(7 * 0.20)


def test_truthful_bid_spreads_remaining_budget():
    assert truthful_bid(1.4, 0.4, 2, 5) == pytest.approx(0.1)
    with pytest.raises(PlanError):
        truthful_bid(1.0, 0.0, 2, 0)


def test_place_bid(catalog):
    assert place_bid(catalog["a"], BiddingStrategy.ON_DEMAND_PRICE, 0.01) == 0.10
    assert place_bid(catalog["a"], BiddingStrategy.TRUTHFUL, 0.01) == 0.01


def test_scale_up_picks_cheapest_groups(catalog):
    plan = scale_up(ctx_for(catalog, config(catalog, f=1)), 0, [])
    assert plan.mode is Mode.SPOT
    assert plan.hourly_cost <= ctx_for(catalog, config(catalog)).baseline_cost()
    assert plan.hourly_cost == brute_force(catalog, config(catalog, f=1))


def test_scale_up_keeps_current_groups(catalog):
    plan = scale_up(ctx_for(catalog, config(catalog, f=1)), 0, ["c"])
    assert "c" in plan.group_names


def test_scale_up_respects_on_demand_floor(catalog):
    cfg = config(catalog, f=1, O=0.4)
    plan = scale_up(ctx_for(catalog, cfg), 0, [])
    assert plan.on_demand_count >= num(R * 0.4, catalog["od"], cfg.margin_for(Mode.SPOT))


def test_scale_up_never_lowers_on_demand(catalog):
    plan = scale_up(ctx_for(catalog, config(catalog, f=1)), 3, [])
    assert plan.on_demand_count >= 3


def test_excluded_types_are_skipped(catalog):
    plan = scale_up(ctx_for(catalog, config(catalog, f=1), excluded=frozenset({"d"})), 0, [])
    assert "d" not in plan.group_names


def test_falls_back_to_on_demand_when_market_is_expensive(catalog):
    dear = {k: 5.0 for k in PRICES}
    plan = scale_up(ctx_for(catalog, config(catalog, f=1), prices=dear), 2, [])
    assert plan.mode is Mode.ON_DEMAND
    assert plan.on_demand_count == num(R, catalog["od"], 0.25)


def test_visit_bound(catalog):
    cfg = config(catalog, f=1)
    ctx = ctx_for(catalog, cfg)
    planner = Planner(ctx)
    planner.scale_up(0, [])
    N = num(R, ctx.vm_o, ctx.margin)
    assert planner.visits <= (N + 1) * cfg.max_groups * len(catalog)


def brute_force(cat, cfg, R=R, prices=PRICES, n_c=0, current=(), excluded=()):
    types = {t.name: t.capacity.values for t in cat.spot_types()}
    return brute_force_min_cost(
        R.values, types, prices, (cfg.on_demand_type.capacity.values,
                                  cfg.on_demand_type.on_demand_price),
        cfg.f, cfg.on_demand_share, cfg.max_groups, cfg.margin_for(Mode.SPOT),
        cfg.margin.m_def, n_c, tuple(current), tuple(excluded))


def random_state(rng, cat):
    f = rng.randint(0, 2)
    S = rng.randint(f + 1, 4)
    cfg = config(cat, f=f, O=rng.choice([0.0, 0.2, 0.4]), S=S)
    Rv = vec(rng.uniform(1, 60), rng.uniform(0, 30), rng.uniform(0, 400), rng.uniform(0, 100))
    prices = {t.name: round(t.on_demand_price * rng.uniform(0.05, 1.2), 4)
              for t in cat.spot_types()}
    current = rng.sample(cat.names, rng.randint(0, min(S, 2)))
    n_c = rng.randint(0, 3)
    return cfg, Rv, prices, current, n_c


def test_scale_up_matches_exhaustive_search():
    rng = random.Random(1234)
    cat = small_catalog()
    checked = 0
    for _ in range(120):
        cfg, Rv, prices, current, n_c = random_state(rng, cat)
        ctx = ctx_for(cat, cfg, R=Rv, prices=prices)
        plan = scale_up(ctx, n_c, current)
        expected = brute_force(cat, cfg, Rv, prices, n_c, current)
        if expected is None:
            assert plan.mode is Mode.ON_DEMAND
        else:
            assert plan.mode is Mode.SPOT
            assert plan.hourly_cost == expected
            assert set(current) <= set(plan.group_names)
            checked += 1
    assert checked > 30


def test_plan_groups_meet_quota_and_bid(catalog):
    ctx = ctx_for(catalog, config(catalog, f=1, O=0.2))
    plan = scale_up(ctx, 0, [])
    for g in plan.groups:
        assert (g.type.capacity * (1 - ctx.margin) * g.count).covers(g.quota)
        assert g.truthful_bid > g.market_price
    total = plan.on_demand_count * ctx.vm_o.on_demand_price + sum(
        g.count * g.truthful_bid for g in plan.groups)
    assert math.isclose(total, ctx.baseline_cost(), rel_tol=1e-9)


def test_on_demand_hour_end_keeps_at_floor(catalog):
    cfg = config(catalog, f=1, O=0.4)
    ctx = ctx_for(catalog, cfg)
    floor = num(R * 0.4, ctx.vm_o, ctx.margin)
    assert Planner(ctx).on_demand_hour_end(floor, ["a", "b"], Mode.SPOT) is None


def test_on_demand_hour_end_releases_when_cheaper(catalog):
    ctx = ctx_for(catalog, config(catalog, f=1))
    plan = Planner(ctx).on_demand_hour_end(4, ["a", "d"], Mode.SPOT)
    assert plan.on_demand_count == 3


def test_on_demand_hour_end_in_on_demand_mode(catalog):
    dear = {k: 5.0 for k in PRICES}
    ctx = ctx_for(catalog, config(catalog, f=1), prices=dear)
    need = num(R, ctx.vm_o, 0.25)
    planner = Planner(ctx)
    assert planner.on_demand_hour_end(need, [], Mode.ON_DEMAND).on_demand_count == need
    assert planner.on_demand_hour_end(need + 2, [], Mode.ON_DEMAND).on_demand_count == need + 1


def _with_spare(catalog, cfg):
    p = build_safe(catalog, cfg, R, ["a", "b"])
    g = p.groups["a"]
    extra = make_vm(catalog["a"], state=VmState.ONLINE)
    extra.group = "a"
    g.members.append(extra)
    return p, g


def test_spot_hour_end_native(catalog):
    p, g = _with_spare(catalog, config(catalog, f=1))
    assert spot_hour_end(g.members[0], p).action is SpotAction.SHUTDOWN
    g.members.pop()
    assert spot_hour_end(g.members[0], p).action is SpotAction.KEEP


def test_spot_hour_end_foreign_needs_replacement(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    g = p.groups["a"]
    g.members.pop()
    stranger = make_vm(catalog["c"], state=VmState.ONLINE)
    p.orphans.append(stranger)
    adopt_orphan(p, stranger, g)
    d = spot_hour_end(stranger, p)
    assert d.action is SpotAction.SHUTDOWN_AND_REPLACE and d.replace_count == 1


def test_spot_hour_end_outside_provision(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    d = spot_hour_end(make_vm(catalog["c"]), p)
    assert d.action is SpotAction.SHUTDOWN


def test_removal_sweep_evicts_overpriced_group(catalog):
    cfg = config(catalog, f=1)
    p = build_safe(catalog, cfg, R, ["a", "b"])
    prices = dict(PRICES, b=0.9)
    removals = group_removal_sweep(p, ctx_for(catalog, cfg, prices=prices))
    assert ("b", "over_bid") in [(r.group, r.reason) for r in removals]
    bids = current_truthful_bids(p, ctx_for(catalog, cfg, prices=prices))
    assert p.groups["b"].truthful_bid == bids["b"]


def test_removal_sweep_replaces_clearly_worse_group(catalog):
    # group costs for quota R at margin 0.15: b 6 x 0.03 = 0.18, c 3 x 0.07 = 0.21,
    # d 24 x 0.009 = 0.216, a 12 x 0.02 = 0.24
    cfg = config(catalog, f=1)
    p = build_safe(catalog, cfg, R, ["a", "c"])
    removals = group_removal_sweep(p, ctx_for(catalog, cfg))
    assert [(r.group, r.reason, r.replacement) for r in removals] == [("a", "replaced", "b")]


def test_removal_sweep_hysteresis(catalog):
    cfg = config(catalog, f=1)
    p = build_safe(catalog, cfg, R, ["b", "c"])
    assert group_removal_sweep(p, ctx_for(catalog, cfg)) == []
    # d at 24 x 0.00854 = 0.205 is cheaper than c (0.21) but inside the 5% band
    assert group_removal_sweep(p, ctx_for(catalog, cfg, prices=dict(PRICES, d=0.00854))) == []
    swap = group_removal_sweep(p, ctx_for(catalog, cfg, prices=dict(PRICES, d=0.008)))
    assert [(r.group, r.replacement) for r in swap] == [("c", "d")]


def test_benchmark_policies(catalog):
    ctx = ctx_for(catalog, config(catalog, f=1))
    od = benchmark_policy(PolicyKind.ON_DEMAND_ONLY, ctx, 0, [])
    assert od.mode is Mode.ON_DEMAND
    one = benchmark_policy(PolicyKind.ONE_SPOT_TYPE, ctx, 0, [])
    assert len(one.groups) == 1
    assert coerce_config(PolicyKind.ONE_SPOT_TYPE, ctx.config).f == 0
    with pytest.raises(ConfigError):
        benchmark_policy(PolicyKind.PROPOSED, ctx, 0, [])
