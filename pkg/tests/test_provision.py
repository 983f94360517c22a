import pytest
from hypothesis import given, settings, strategies as st

from spotscale.errors import ConfigError, ModeError, MoveError, PlanError
from spotscale.provision import (
    Mode, Provision, adopt_orphan, fault_tolerance_holds, is_safe, quota,
    surviving_capacity,
)
from spotscale.vm import Role, VmState

from conftest import build_safe, config, make_vm, small_catalog, vec

R = vec(20, 10, 200, 80)


def test_quota_splits_remainder_over_s_minus_f():
    q = quota(vec(12, 6), vec(2, 0), 3, 1)
    assert q.values == (5.0, 3.0)
    with pytest.raises(PlanError):
        quota(vec(1), vec(0), 2, 2)


def test_config_validation(catalog):
    with pytest.raises(ConfigError):
        config(catalog, f=4)
    with pytest.raises(ConfigError):
        config(catalog, f=3, S=3)
    with pytest.raises(ConfigError):
        config(catalog, O=1.5)


def test_hand_sized_provision_is_safe(catalog):
    p = build_safe(catalog, config(catalog, f=1, O=0.2), R, ["a", "b", "c"])
    assert is_safe(p, R)
    assert fault_tolerance_holds(p, R)
    # each group alone would not do: losing two types breaks R
    assert not surviving_capacity(p, ["a", "b"]).covers(R) or \
        not surviving_capacity(p, ["b", "c"]).covers(R)


def test_unsafe_when_a_group_is_short(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    p.groups["a"].members.pop()
    assert not is_safe(p, R)


def test_unsafe_without_enough_groups(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    p.remove_group("b")
    assert not is_safe(p, R)


def test_safety_undefined_in_on_demand_mode(catalog):
    with pytest.raises(ModeError):
        is_safe(Provision(config(catalog), catalog.dims), R)


def test_on_demand_floor_enforced(catalog):
    p = build_safe(catalog, config(catalog, f=1, O=0.4), R, ["a", "b"])
    p.on_demand.pop()
    assert not is_safe(p, R)


def test_remove_group_orphans_live_members(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    dead = p.groups["a"].members[0]
    dead.state = VmState.TERMINATED
    n = len(p.groups["a"].members)
    orphans = p.remove_group("a")
    assert len(orphans) == n - 1 and dead not in p.orphans
    assert all(v.group is None for v in orphans)


def test_adopt_orphan_native_and_foreign(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    b = p.groups["b"]
    b.members.pop()
    stray_b = make_vm(catalog["b"])
    stray_a = make_vm(catalog["a"])
    p.orphans += [stray_a, stray_b]
    adopt_orphan(p, stray_a, b)
    assert stray_a.group == "b" and stray_a in b.foreigners()
    assert stray_a not in p.orphans
    adopt_orphan(p, stray_b, b)
    assert stray_b in b.natives()


def test_adopt_orphan_refuses_illegal_moves(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b"])
    native = p.groups["a"].members[0]
    with pytest.raises(MoveError):
        adopt_orphan(p, native, p.groups["b"])
    stranger = make_vm(catalog["c"])
    with pytest.raises(MoveError):
        adopt_orphan(p, stranger, p.groups["b"])
    p.orphans.append(stranger)
    # group b already meets its quota, so no foreigner may join
    with pytest.raises(MoveError):
        adopt_orphan(p, stranger, p.groups["b"])


def test_refresh_quotas(catalog):
    p = build_safe(catalog, config(catalog, f=1), R, ["a", "b", "c"])
    assert p.refresh_quotas(R * 2)
    assert p.groups["a"].quota.values == pytest.approx((R * 2 / 2).values)
    p.remove_group("c")
    p.remove_group("b")
    assert not p.refresh_quotas(R)
    assert p.groups["a"].quota.is_zero()


def test_online_only_capacity(catalog):
    p = build_safe(catalog, config(catalog, f=0), R, ["a"])
    p.groups["a"].members[0].state = VmState.BOOTING
    assert p.total_capacity(online_only=True).values[0] < p.total_capacity().values[0]


def test_snapshot_shape(catalog):
    p = build_safe(catalog, config(catalog, f=1, O=0.2), R, ["a", "b"])
    snap = p.snapshot()
    assert snap["mode"] == "spot"
    assert [g["type"] for g in snap["groups"]] == ["a", "b"]
    assert snap["on_demand_count"] == len(p.on_demand)


@settings(max_examples=150, deadline=None)
@given(
    cpu=st.floats(1, 200), mem=st.floats(0, 100),
    f=st.integers(0, 3), O=st.sampled_from([0.0, 0.2, 0.4]), data=st.data(),
)
def test_hand_sized_provisions_survive_f_losses(cpu, mem, f, O, data):
    cat = small_catalog()
    s = data.draw(st.integers(f + 1, len(cat)))
    names = data.draw(st.permutations(cat.names))[:s]
    Rv = vec(cpu, mem, cpu * 5, cpu)
    p = build_safe(cat, config(cat, f=f, O=O, S=max(s, f + 1)), Rv, names)
    assert p.mode is Mode.SPOT and is_safe(p, Rv)
    assert fault_tolerance_holds(p, Rv)


def test_vm_role_validation(catalog):
    with pytest.raises(ValueError):
        make_vm(catalog["a"], bid=0)
    v = make_vm(catalog["a"], Role.ON_DEMAND)
    assert v.bid_price is None and not v.online
