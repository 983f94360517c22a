import itertools

import pytest

from spotscale.capacity import Catalog, InstanceType, MarginPolicy, ResourceVector, num
from spotscale.provision import Mode, Provision, ScalingConfig, quota
from spotscale.vm import Role, VmInstance, VmState

_ids = itertools.count(1)


def vec(*xs):
    return ResourceVector.of(*xs)


def small_catalog():
    return Catalog([
        InstanceType("od", vec(4, 8, 100, 50), 0.20),
        InstanceType("a", vec(2, 4, 50, 25), 0.10),
        InstanceType("b", vec(4, 4, 100, 50), 0.18),
        InstanceType("c", vec(8, 16, 200, 100), 0.40),
        InstanceType("d", vec(1, 2, 25, 10), 0.05),
    ])


def make_vm(t, role=Role.SPOT, bid=1.0, **kw):
    if role is Role.ON_DEMAND:
        bid = None
    return VmInstance(next(_ids), t, role, bid, **kw)


def config(catalog, f=1, O=0.0, S=4, **kw):
    return ScalingConfig(on_demand_type=catalog["od"], f=f, on_demand_share=O,
                         max_groups=S, margin=kw.pop("margin", MarginPolicy()), **kw)


@pytest.fixture
def catalog():
    return small_catalog()


def build_safe(catalog, cfg, R, group_names):
    """A Spot Mode provision sized by hand: the O floor of on-demand VMs plus
    exactly enough natives per group to cover the quota."""
    p = Provision(cfg, catalog.dims, mode=Mode.SPOT)
    m = p.margin
    n_o = num(R * cfg.on_demand_share, cfg.on_demand_type, m)
    p.on_demand = [make_vm(cfg.on_demand_type, Role.ON_DEMAND, state=VmState.ONLINE)
                   for _ in range(n_o)]
    r_o = p.on_demand_capacity().minimum(R)
    q = quota(R, r_o, len(group_names), cfg.f)
    for name in group_names:
        g = p.add_group(catalog[name], q, 1.0)
        for _ in range(num(q, catalog[name], m)):
            v = make_vm(catalog[name], state=VmState.ONLINE)
            v.group = name
            g.members.append(v)
    return p


ACCEPTANCE: list[str] = []


def record_acceptance(number, ok, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
