"""Seeded synthetic stand-ins for the catalog, spot price histories and
workload. ``python -m spotscale.synthetic <dir>`` regenerates the bundled
files under ``spotscale/data``.
"""

from __future__ import annotations

import argparse
import csv
from importlib import resources
from pathlib import Path

import numpy as np

from .capacity import Catalog, InstanceType, ResourceVector, load_catalog
from .market import PriceTrace
from .traces import WorkloadTrace, load_price_traces, load_workload, write_price_traces, write_workload

# name, ECU, memory GiB, network Mbit/s, disk MB/s, on-demand $/h
CATALOG_ROWS = [
    ("m1.small", 1.0, 1.7, 250, 40, 0.044),
    ("m1.medium", 2.0, 3.75, 500, 60, 0.087),
    ("m1.large", 4.0, 7.5, 500, 90, 0.175),
    ("m1.xlarge", 8.0, 15.0, 1000, 120, 0.350),
    ("m3.medium", 3.0, 3.75, 500, 60, 0.070),
    ("m3.large", 6.5, 7.5, 500, 90, 0.140),
    ("m3.xlarge", 13.0, 15.0, 1000, 120, 0.280),
    ("m3.2xlarge", 26.0, 30.0, 1000, 160, 0.560),
    ("c3.large", 7.0, 3.75, 500, 90, 0.105),
    ("c3.xlarge", 14.0, 7.5, 750, 120, 0.210),
    ("c3.2xlarge", 28.0, 15.0, 1000, 160, 0.420),
    ("c3.4xlarge", 55.0, 30.0, 2000, 240, 0.840),
    ("c3.8xlarge", 108.0, 60.0, 10000, 480, 1.680),
]

# spot price as a fraction of the on-demand price, per type
BASE_DISCOUNT = {
    "m1.small": 0.20, "m1.medium": 0.16, "m1.large": 0.18, "m1.xlarge": 0.17,
    "m3.medium": 0.19, "m3.large": 0.15, "m3.xlarge": 0.16, "m3.2xlarge": 0.17,
    "c3.large": 0.16, "c3.xlarge": 0.14, "c3.2xlarge": 0.13, "c3.4xlarge": 0.15,
    "c3.8xlarge": 0.18,
}

REGIMES = ("stable", "volatile", "spike")
PRICE_STEP = 300.0
SPIKE_START = 36000.0
SPIKE_LENGTH = 3600.0
SPIKE_FACTOR = 5.0
# a type both the fault-tolerant policy and the one-group benchmark hold at
# SPIKE_START on these traces
SPIKED_TYPE = "c3.xlarge"


def bundled_catalog() -> Catalog:
    return Catalog(
        InstanceType(name, ResourceVector.of(ecu, mem, net, disk), price)
        for name, ecu, mem, net, disk, price in CATALOG_ROWS
    )


def write_catalog(path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "cpu_ecu", "memory_gib", "network_mbps", "disk_mbps",
                    "on_demand_price"])
        for row in CATALOG_ROWS:
            w.writerow(row)


def price_traces(catalog: Catalog, regime: str, duration: float = 86400.0,
                 seed: int = 7) -> dict[str, PriceTrace]:
    """Step price traces sampled every ``PRICE_STEP`` seconds.

    ``stable``: small mean-reverting jitter around a fixed discount.
    ``volatile``: larger jitter plus a few short excursions above the
    on-demand price on random types.
    ``spike``: the stable series, except ``SPIKED_TYPE`` jumps to
    ``SPIKE_FACTOR`` times its on-demand price for an hour mid-run.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    # spike shares the stable noise so the two differ only by the spike
    rng = np.random.default_rng([seed, 1 if regime == "volatile" else 0])
    steps = int(np.ceil(duration / PRICE_STEP))
    times = np.arange(steps) * PRICE_STEP
    jitter = 0.08 if regime == "volatile" else 0.01
    out = {}
    for t in catalog.spot_types():
        base = BASE_DISCOUNT[t.name] * t.on_demand_price
        x = np.zeros(steps)
        noise = rng.normal(0.0, jitter, steps)
        for i in range(1, steps):
            x[i] = 0.9 * x[i - 1] + noise[i]
        p = base * np.exp(x)
        if regime == "volatile":
            for _ in range(rng.poisson(duration / 43200.0)):
                i0 = int(rng.integers(0, steps))
                n = int(rng.integers(2, 12))
                p[i0:i0 + n] = t.on_demand_price * rng.uniform(1.1, 3.0)
        if regime == "spike" and t.name == SPIKED_TYPE:
            sel = (times >= SPIKE_START) & (times < SPIKE_START + SPIKE_LENGTH)
            p[sel] = t.on_demand_price * SPIKE_FACTOR
        p = np.maximum(np.round(p, 4), 0.0001)
        keep = np.concatenate(([True], p[1:] != p[:-1]))
        out[t.name] = PriceTrace(t.name, tuple(times[keep].tolist()), tuple(p[keep].tolist()))
    return out


def diurnal_workload(days: float = 1.0, mean: float = 300.0, amplitude: float = 150.0,
                     seed: int = 11, interval: float = 1.0) -> WorkloadTrace:
    """Poisson counts around a sinusoid with its trough at t=0 and peak at
    midday."""
    n = int(round(days * 86400 / interval))
    t = np.arange(n) * interval
    rate = mean - amplitude * np.cos(2 * np.pi * t / 86400.0)
    rng = np.random.default_rng(seed)
    return WorkloadTrace(rng.poisson(np.maximum(rate, 0) * interval), interval, 0.0)


def data_path(name: str) -> Path:
    return Path(str(resources.files("spotscale") / "data" / name))


def load_bundled(prices: str = "stable"):
    """Catalog, price traces and workload shipped with the package."""
    catalog = load_catalog(data_path("catalog.csv"))
    traces = load_price_traces(data_path(f"prices_{prices}.csv"), catalog)
    return catalog, traces, load_workload(data_path("workload_diurnal.csv"))


def generate(out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    catalog = bundled_catalog()
    paths = [out / "catalog.csv"]
    write_catalog(paths[0])
    for regime in REGIMES:
        p = out / f"prices_{regime}.csv"
        write_price_traces(price_traces(catalog, regime), p)
        paths.append(p)
    p = out / "workload_diurnal.csv"
    write_workload(diurnal_workload(), p)
    paths.append(p)
    return paths


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Regenerate the bundled synthetic traces.")
    ap.add_argument("out_dir", nargs="?", default=str(Path(__file__).parent / "data"))
    args = ap.parse_args(argv)
    for p in generate(args.out_dir):
        print(p)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
