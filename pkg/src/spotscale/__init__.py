"""Fault-tolerant, cost-aware auto-scaling over heterogeneous spot and
on-demand instances, with a deterministic event-driven simulator."""

from .capacity import (
    AppProfile, Catalog, InstanceType, MarginMode, MarginPolicy, ResourceVector,
    default_profile, load_catalog, num,
)
from .errors import (
    CatalogError, ConfigError, ModeError, MoveError, PlanError, SpotScaleError, TraceError,
)
from .market import MarketState, PriceTrace, price_at
from .policy import PolicyKind, ProvisionPlan, scale_up
from .provision import BiddingStrategy, Mode, Provision, ScalingConfig, is_safe
from .simulator import SimConfig, Simulation, run
from .traces import (
    ExperimentResult, WorkloadTrace, emit_report, load_price_traces, load_workload,
)

__all__ = [
    "AppProfile", "BiddingStrategy", "Catalog", "CatalogError", "ConfigError",
    "ExperimentResult", "InstanceType", "MarginMode", "MarginPolicy", "MarketState", "Mode",
    "ModeError", "MoveError", "PlanError", "PolicyKind", "PriceTrace", "Provision",
    "ProvisionPlan", "ResourceVector", "ScalingConfig", "SimConfig", "Simulation",
    "SpotScaleError", "TraceError", "WorkloadTrace", "default_profile", "emit_report",
    "is_safe", "load_catalog", "load_price_traces", "load_workload", "num", "price_at",
    "run", "scale_up",
]
__version__ = "0.1.0"
