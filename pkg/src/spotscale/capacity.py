"""Instance catalog, application profile and capacity arithmetic.

Capacities are multi-dimensional. The default dimensions are
``cpu`` (ECU), ``memory`` (GiB), ``network`` (Mbit/s) and ``disk_io`` (MB/s),
but a :class:`ResourceVector` of any length works as long as operands agree.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

from .errors import CatalogError, ConfigError

DIMENSIONS = ("cpu", "memory", "network", "disk_io")

# Relative slack used for every covering / ceiling comparison.
REL_TOL = 1e-9

MAX_WRR_WEIGHT = 100


def _slack(x: float) -> float:
    return REL_TOL * max(1.0, abs(x))


@dataclass(frozen=True)
class ResourceVector:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if any(v < 0 or math.isnan(v) for v in vals):
            raise ConfigError(f"resource components must be >= 0, got {vals}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def of(cls, *values: float) -> "ResourceVector":
        return cls(tuple(values))

    @classmethod
    def named(cls, dims: Sequence[str] = DIMENSIONS, **amounts: float) -> "ResourceVector":
        unknown = set(amounts) - set(dims)
        if unknown:
            raise ConfigError(f"unknown dimensions {sorted(unknown)}")
        return cls(tuple(amounts.get(d, 0.0) for d in dims))

    @classmethod
    def zeros(cls, n: int) -> "ResourceVector":
        return cls((0.0,) * n)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    def _check(self, other: "ResourceVector"):
        if len(other.values) != len(self.values):
            raise ConfigError(
                f"dimension mismatch: {len(self.values)} vs {len(other.values)}"
            )

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        self._check(other)
        return ResourceVector(tuple(a + b for a, b in zip(self.values, other.values)))

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        """Component-wise difference, clipped at zero."""
        self._check(other)
        return ResourceVector(
            tuple(max(0.0, a - b) for a, b in zip(self.values, other.values))
        )

    def __mul__(self, k: float) -> "ResourceVector":
        return ResourceVector(tuple(a * k for a in self.values))

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "ResourceVector":
        return ResourceVector(tuple(a / k for a in self.values))

    def minimum(self, other: "ResourceVector") -> "ResourceVector":
        self._check(other)
        return ResourceVector(tuple(min(a, b) for a, b in zip(self.values, other.values)))

    def covers(self, other: "ResourceVector") -> bool:
        """True iff every component of ``self`` is >= the one in ``other``."""
        self._check(other)
        return all(a >= b - _slack(b) for a, b in zip(self.values, other.values))

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)

    @staticmethod
    def total(vectors: Iterable["ResourceVector"], dims: int) -> "ResourceVector":
        return reduce(ResourceVector.__add__, vectors, ResourceVector.zeros(dims))


@dataclass(frozen=True)
class InstanceType:
    name: str
    capacity: ResourceVector
    on_demand_price: float
    is_spot_eligible: bool = True

    def __post_init__(self):
        if any(v <= 0 for v in self.capacity.values):
            raise ConfigError(f"{self.name}: capacity must be > 0 in every dimension")
        if not self.on_demand_price > 0:
            raise ConfigError(f"{self.name}: on-demand price must be > 0")

    @property
    def ecu(self) -> float:
        return self.capacity.values[0]


class Catalog:
    """Ordered, name-unique collection of instance types."""

    def __init__(self, types: Iterable[InstanceType]):
        self._types: dict[str, InstanceType] = {}
        for t in types:
            if t.name in self._types:
                raise CatalogError(f"duplicate instance type {t.name!r}")
            self._types[t.name] = t
        if not self._types:
            raise CatalogError("empty catalog")
        dims = {len(t.capacity) for t in self._types.values()}
        if len(dims) != 1:
            raise CatalogError("instance types disagree on resource dimensions")
        self.dims = dims.pop()

    def __getitem__(self, name: str) -> InstanceType:
        try:
            return self._types[name]
        except KeyError:
            raise CatalogError(f"unknown instance type {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._types

    def __iter__(self):
        return iter(self._types.values())

    def __len__(self):
        return len(self._types)

    @property
    def names(self) -> list[str]:
        return list(self._types)

    def spot_types(self) -> list[InstanceType]:
        return [t for t in self._types.values() if t.is_spot_eligible]


CATALOG_FIELDS = ("name", "cpu_ecu", "memory_gib", "network_mbps", "disk_mbps",
                  "on_demand_price")


def load_catalog(path) -> Catalog:
    """Read a catalog CSV (see ``docs/formats.md``).

    An optional ``spot_eligible`` column (``0``/``1``) may follow the required
    fields; it defaults to eligible.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in CATALOG_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise CatalogError(f"{path}: missing columns {missing}")
        types = []
        for lineno, row in enumerate(reader, start=2):
            try:
                cap = ResourceVector.of(
                    float(row["cpu_ecu"]), float(row["memory_gib"]),
                    float(row["network_mbps"]), float(row["disk_mbps"]),
                )
                eligible = row.get("spot_eligible", "1") not in ("0", "false", "False")
                types.append(InstanceType(row["name"].strip(), cap,
                                          float(row["on_demand_price"]), eligible))
            except (ValueError, TypeError) as exc:
                raise CatalogError(f"{path}:{lineno}: {exc}") from None
    return Catalog(types)


@dataclass(frozen=True)
class AppProfile:
    demand_per_request: ResourceVector
    mean_request_length: float = 0.07
    request_length_stddev: float = 0.005

    def __post_init__(self):
        if self.demand_per_request.is_zero():
            raise ConfigError("application demand must be positive in some dimension")


def default_profile(dims: int = len(DIMENSIONS)) -> AppProfile:
    """CPU-bound web profile: 0.07 ECU-seconds per request, light on the rest."""
    base = (0.07, 0.001, 0.05, 0.01)
    if dims > len(base):
        base = base + (0.0,) * (dims - len(base))
    return AppProfile(ResourceVector(base[:dims]))


class MarginMode(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class MarginPolicy:
    m_min: float = 0.10
    m_def: float = 0.25
    f_max: int = 3
    mode: MarginMode = MarginMode.DYNAMIC

    def __post_init__(self):
        if not 0 <= self.m_min <= self.m_def < 1:
            raise ConfigError("margins must satisfy 0 <= m_min <= m_def < 1")
        if self.f_max < 1:
            raise ConfigError("f_max must be >= 1")


def effective_capacity(t: InstanceType, m: float) -> ResourceVector:
    if not 0 <= m < 1:
        raise ConfigError(f"margin must be in [0, 1), got {m}")
    return t.capacity * (1.0 - m)


def dynamic_margin(p: MarginPolicy, f: int) -> float:
    if f > p.f_max or f < 0:
        raise ConfigError(f"fault-tolerant level {f} outside [0, {p.f_max}]")
    if p.mode is MarginMode.STATIC:
        return p.m_def
    return p.m_min + (p.m_def - p.m_min) * f / p.f_max


def required_capacity(profile: AppProfile, request_rate: float) -> ResourceVector:
    if request_rate < 0:
        raise ConfigError("request rate must be >= 0")
    return profile.demand_per_request * request_rate


def count_for(c: ResourceVector, unit: ResourceVector) -> int:
    """Smallest n with ``n * unit`` covering ``c``."""
    n = 0
    for need, have in zip(c.values, unit.values):
        if need <= 0:
            continue
        q = need / have
        n = max(n, math.ceil(q - _slack(q)))
    return n


def num(c: ResourceVector, t: InstanceType, m: float) -> int:
    return count_for(c, effective_capacity(t, m))


def request_capacity(cap: ResourceVector, demand: ResourceVector | None) -> float:
    """Requests/s a capacity sustains, limited by its bottleneck dimension."""
    if demand is None:
        return cap.values[0]
    rates = [c / d for c, d in zip(cap.values, demand.values) if d > 0]
    return min(rates)


def _integer_ratios(xs: Sequence[float]) -> list[int]:
    fracs = [Fraction(x).limit_denominator(MAX_WRR_WEIGHT) for x in xs]
    lcm = 1
    for fr in fracs:
        lcm = lcm * fr.denominator // math.gcd(lcm, fr.denominator)
    ints = [int(fr * lcm) for fr in fracs]
    g = reduce(math.gcd, ints)
    return [i // g for i in ints]


def wrr_weights(instances: Sequence[tuple[InstanceType, float]],
                demand: ResourceVector | None = None) -> list[int]:
    """Integer dispatch weights proportional to effective capacity.

    Capacity is measured in the bottleneck dimension of ``demand`` (the
    per-request profile) or in ECU when no profile is given. Weights are the
    smallest integers with the exact capacity ratios; if that needs weights
    above 100 they are rescaled so the largest is 100.
    """
    if not instances:
        raise ConfigError("wrr_weights needs at least one instance")
    caps = [request_capacity(effective_capacity(t, m), demand) for t, m in instances]
    ints = _integer_ratios(caps)
    if max(ints) <= MAX_WRR_WEIGHT:
        return ints
    top = max(caps)
    return [max(1, round(c / top * MAX_WRR_WEIGHT)) for c in caps]


def smooth_wrr_schedule(weights: Sequence[int]) -> list[int]:
    """One period of the smooth weighted round robin dispatch order.

    Within any run of ``sum(weights)`` consecutive slots, index ``i`` appears
    exactly ``weights[i]`` times.
    """
    total = sum(weights)
    current = [0] * len(weights)
    order = []
    for _ in range(total):
        for i, w in enumerate(weights):
            current[i] += w
        best = max(range(len(weights)), key=lambda i: (current[i], -i))
        current[best] -= total
        order.append(best)
    return order
