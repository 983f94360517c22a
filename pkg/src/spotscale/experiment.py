"""Experiment specs, single runs and sweeps. The CLI is a thin shell over
this module."""

from __future__ import annotations

import csv
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .capacity import Catalog, MarginMode, MarginPolicy, load_catalog
from .errors import ConfigError
from .policy import PolicyKind
from .provision import BiddingStrategy, ScalingConfig
from .simulator import SimConfig, Simulation
from .synthetic import REGIMES, data_path
from .traces import ExperimentResult, emit_report, load_price_traces, load_workload

_POLICY_ALIASES = {
    "proposed": PolicyKind.PROPOSED,
    "on_demand_only": PolicyKind.ON_DEMAND_ONLY,
    "on-demand-only": PolicyKind.ON_DEMAND_ONLY,
    "on_demand": PolicyKind.ON_DEMAND_ONLY,
    "on-demand": PolicyKind.ON_DEMAND_ONLY,
    "one_spot_type": PolicyKind.ONE_SPOT_TYPE,
    "one-spot-type": PolicyKind.ONE_SPOT_TYPE,
    "one_spot": PolicyKind.ONE_SPOT_TYPE,
    "one-spot": PolicyKind.ONE_SPOT_TYPE,
}
POLICY_NAMES = ("proposed", "on-demand-only", "one-spot-type")


def parse_policy(name: str) -> PolicyKind:
    try:
        return _POLICY_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}") from None


def parse_bidding(name: str) -> BiddingStrategy:
    key = name.strip().lower().replace("-", "_")
    if key == "truthful":
        return BiddingStrategy.TRUTHFUL
    if key in ("on_demand", "on_demand_price"):
        return BiddingStrategy.ON_DEMAND_PRICE
    raise ConfigError(f"unknown bidding strategy {name!r}")


def parse_margin(name: str) -> MarginMode:
    try:
        return MarginMode(name.strip().lower())
    except ValueError:
        raise ConfigError(f"unknown margin mode {name!r}") from None


@dataclass(frozen=True)
class ExperimentSpec:
    policy: str = "proposed"
    f: int = 1
    on_demand_pct: float = 0.0
    max_groups: int = 4
    bidding: str = "truthful"
    margin: str = "dynamic"
    seed: int = 0
    duration: float = 86400.0
    workload_scale: float = 1.0
    catalog: Optional[str] = None
    prices: str = "stable"
    workload: Optional[str] = None
    out_dir: Optional[str] = None
    on_demand_type: str = "c3.large"
    initial_on_demand: int = 5

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentSpec":
        known = {f.name for f in fields(cls)}
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_mapping(data)

    # -- resolution ------------------------------------------------------
    def catalog_path(self) -> Path:
        return Path(self.catalog) if self.catalog else data_path("catalog.csv")

    def prices_path(self) -> Path:
        if self.prices in REGIMES:
            return data_path(f"prices_{self.prices}.csv")
        return Path(self.prices)

    def workload_path(self) -> Path:
        return Path(self.workload) if self.workload else data_path("workload_diurnal.csv")

    def check_files(self) -> None:
        for label, p in (("catalog", self.catalog_path()), ("prices", self.prices_path()),
                         ("workload", self.workload_path())):
            if not p.is_file():
                raise ConfigError(f"{label} file not found: {p}")

    def sim_config(self, catalog: Catalog) -> SimConfig:
        if not 0 <= self.on_demand_pct <= 100:
            raise ConfigError("on-demand percentage must lie in [0, 100]")
        if self.initial_on_demand < 0:
            raise ConfigError("initial on-demand count must be >= 0")
        scaling = ScalingConfig(
            on_demand_type=catalog[self.on_demand_type],
            f=int(self.f),
            on_demand_share=self.on_demand_pct / 100.0,
            max_groups=int(self.max_groups),
            bidding=parse_bidding(self.bidding),
            margin=MarginPolicy(mode=parse_margin(self.margin)),
        )
        return SimConfig(
            scaling=scaling,
            policy=parse_policy(self.policy),
            duration=float(self.duration),
            seed=int(self.seed),
            initial_on_demand=int(self.initial_on_demand),
            workload_scale=float(self.workload_scale),
        )

    def resolved(self) -> dict:
        d = asdict(self)
        d["catalog"] = str(self.catalog_path())
        d["prices"] = str(self.prices_path())
        d["workload"] = str(self.workload_path())
        d["policy"] = parse_policy(self.policy).value
        d["bidding"] = parse_bidding(self.bidding).value
        d["margin"] = parse_margin(self.margin).value
        return d

    def label(self) -> str:
        kind = parse_policy(self.policy)
        if kind is PolicyKind.ON_DEMAND_ONLY:
            return "on_demand_only"
        if kind is PolicyKind.ONE_SPOT_TYPE:
            return f"one_spot_O{self.on_demand_pct:g}_{parse_bidding(self.bidding).value}"
        return (f"f{self.f}_O{self.on_demand_pct:g}_{parse_bidding(self.bidding).value}"
                f"_{parse_margin(self.margin).value}")


def prepare(spec: ExperimentSpec) -> Simulation:
    """Load and validate every input. Raises the package's validation errors
    (ConfigError, CatalogError, TraceError) and nothing else for bad input."""
    spec.check_files()
    catalog = load_catalog(spec.catalog_path())
    cfg = spec.sim_config(catalog)
    prices = load_price_traces(spec.prices_path(), catalog)
    workload = load_workload(spec.workload_path())
    return Simulation(cfg, catalog, prices, workload)


def run_spec(spec: ExperimentSpec, sim: Optional[Simulation] = None) -> ExperimentResult:
    result = (sim or prepare(spec)).run()
    result.config = spec.resolved()
    return result


def write_outputs(result: ExperimentResult, out) -> None:
    out = Path(out)
    emit_report(result, out)
    (out / "config.json").write_text(json.dumps(result.config, indent=2, sort_keys=True) + "\n")


def run_experiment(spec: ExperimentSpec, out_dir=None) -> ExperimentResult:
    """Run one experiment and write its reports plus ``config.json``."""
    out = out_dir or spec.out_dir
    if out is None:
        raise ConfigError("an output directory is required")
    result = run_spec(spec)
    write_outputs(result, out)
    return result


SWEEP_FIELDS = ("label", "policy", "f", "on_demand_pct", "bidding", "margin", "total_cost",
                "availability", "timeouts", "provider_terminations", "status")


def sweep_specs(base: ExperimentSpec, policies: Sequence[str], fs: Sequence[int],
                pcts: Sequence[float], biddings: Sequence[str],
                margins: Sequence[str]) -> list[ExperimentSpec]:
    """Cartesian product, with settings a policy ignores collapsed away."""
    out, seen = [], set()
    for pol, f, pct, bid, mar in itertools.product(policies, fs, pcts, biddings, margins):
        kind = parse_policy(pol)
        if kind is PolicyKind.ON_DEMAND_ONLY:
            spec = replace(base, policy=kind.value, f=0, on_demand_pct=0.0,
                           bidding="truthful", margin="static")
        elif kind is PolicyKind.ONE_SPOT_TYPE:
            spec = replace(base, policy=kind.value, f=0, on_demand_pct=pct, bidding=bid,
                           margin="static")
        else:
            spec = replace(base, policy=kind.value, f=f, on_demand_pct=pct, bidding=bid,
                           margin=mar)
        key = spec.label()
        if key not in seen:
            seen.add(key)
            out.append(spec)
    return out


def _sweep_cell(spec: ExperimentSpec) -> dict:
    row = {"label": spec.label(), "policy": parse_policy(spec.policy).value, "f": spec.f,
           "on_demand_pct": spec.on_demand_pct, "bidding": spec.bidding,
           "margin": spec.margin}
    try:
        result = run_spec(spec)
    except Exception as exc:  # a failed cell must not stop the sweep
        row.update(total_cost="", availability="", timeouts="", provider_terminations="",
                   status=f"failed: {type(exc).__name__}: {exc}")
        return row
    s = result.summary()
    row.update(total_cost=s["total_cost"], availability=s["availability"],
               timeouts=s["timeouts"], provider_terminations=s["provider_terminations"],
               status="ok")
    return row


def run_sweep(specs: Iterable[ExperimentSpec], jobs: int = 1) -> list[dict]:
    """Run every cell; parallel cells use separate processes. Row order
    follows ``specs`` either way."""
    specs = list(specs)
    if jobs <= 1 or len(specs) <= 1:
        return [_sweep_cell(s) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_cell, specs))


def write_sweep(rows: Sequence[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def format_table(rows: Sequence[dict]) -> str:
    cols = ("label", "total_cost", "availability", "timeouts", "status")
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c)
              for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    for r in rows:
        lines.append("  ".join(str(r[c]).ljust(widths[c]) for c in cols))
    return "\n".join(lines)
