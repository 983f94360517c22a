"""Trace ingestion and report emission.

File layouts are documented in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .billing import Ledger, format_money
from .capacity import Catalog
from .errors import TraceError
from .market import PriceTrace

RT_BIN_WIDTH = 1e-4  # seconds per response-time histogram bin


@dataclass(frozen=True, eq=False)
class WorkloadTrace:
    """Request counts per fixed interval, starting at ``start``."""

    counts: np.ndarray
    interval: float = 1.0
    start: float = 0.0

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise TraceError("workload trace is empty")
        if (counts < 0).any():
            raise TraceError("negative request count")
        if not self.interval > 0:
            raise TraceError("interval must be positive")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def end(self) -> float:
        return self.start + self.interval * len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (isinstance(other, WorkloadTrace) and self.interval == other.interval
                and self.start == other.start and np.array_equal(self.counts, other.counts))

    def scaled(self, factor: float) -> "WorkloadTrace":
        """Rate-scaled copy; cumulative rounding keeps the total proportional."""
        if factor == 1.0:
            return self
        cum = np.floor(np.cumsum(self.counts, dtype=np.float64) * factor + 0.5)
        counts = np.diff(np.concatenate(([0.0], cum))).astype(np.int64)
        return WorkloadTrace(counts, self.interval, self.start)

    def per_second_rate(self, duration: float) -> np.ndarray:
        """Arrival rate (req/s) for each whole second in [0, duration)."""
        n = int(np.ceil(duration))
        secs = np.arange(n, dtype=np.float64)
        idx = np.floor((secs - self.start) / self.interval).astype(np.int64)
        ok = (idx >= 0) & (idx < len(self.counts))
        out = np.zeros(n)
        out[ok] = self.counts[idx[ok]] / self.interval
        return out


def _rows(path: Path, expected: tuple[str, ...]):
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceError(f"{path}: empty file", line=1)
        if tuple(h.strip() for h in header) != expected:
            raise TraceError(f"{path}: expected header {','.join(expected)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected):
                raise TraceError(f"{path}: expected {len(expected)} fields", line=lineno)
            yield lineno, [c.strip() for c in row]


def load_workload(path) -> WorkloadTrace:
    path = Path(path)
    times, counts = [], []
    for lineno, (ts, n) in _rows(path, ("timestamp", "requests")):
        try:
            t, c = float(ts), int(n)
        except ValueError:
            raise TraceError(f"{path}: malformed row {ts!r},{n!r}", line=lineno) from None
        if c < 0:
            raise TraceError(f"{path}: negative request count", line=lineno)
        if times and not t > times[-1]:
            raise TraceError(f"{path}: timestamps not increasing", line=lineno)
        if len(times) >= 2 and abs((t - times[-1]) - (times[1] - times[0])) > 1e-9:
            raise TraceError(f"{path}: non-uniform interval", line=lineno)
        times.append(t)
        counts.append(c)
    if not times:
        raise TraceError(f"{path}: no samples")
    interval = times[1] - times[0] if len(times) > 1 else 1.0
    return WorkloadTrace(np.array(counts, dtype=np.int64), interval, times[0])


def write_workload(trace: WorkloadTrace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "requests"])
        for i, c in enumerate(trace.counts):
            w.writerow([_num(trace.start + i * trace.interval), int(c)])


def load_price_traces(path, catalog: Catalog) -> dict[str, PriceTrace]:
    path = Path(path)
    samples: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for lineno, (ts, name, price) in _rows(path, ("timestamp", "instance_type", "price")):
        if name not in catalog:
            raise TraceError(f"{path}: unknown instance type {name!r}", line=lineno)
        try:
            t, p = float(ts), float(price)
        except ValueError:
            raise TraceError(f"{path}: malformed row", line=lineno) from None
        if not p > 0:
            raise TraceError(f"{path}: non-positive price", line=lineno)
        prev = samples[name]
        if prev and t == prev[-1][0]:
            raise TraceError(f"{path}: duplicate timestamp {ts} for {name}", line=lineno)
        if prev and t < prev[-1][0]:
            raise TraceError(f"{path}: unsorted samples for {name}", line=lineno)
        prev.append((t, p))
    missing = [t.name for t in catalog.spot_types() if t.name not in samples]
    if missing:
        raise TraceError(f"{path}: no price samples for {', '.join(missing)}")
    return {name: PriceTrace.from_samples(name, samples[name])
            for name in catalog.names if name in samples}


def write_price_traces(traces: Mapping[str, PriceTrace], path) -> None:
    rows = sorted(
        ((t, name, p) for name, tr in traces.items() for t, p in tr.samples()),
        key=lambda r: (r[0], r[1]),
    )
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "instance_type", "price"])
        for t, name, p in rows:
            w.writerow([_num(t), name, repr(p)])


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(eq=False)
class ExperimentResult:
    duration: float
    rt_sum: np.ndarray
    completions: np.ndarray
    timeouts: np.ndarray
    shortfall: np.ndarray
    rt_hist: np.ndarray
    ledger: Ledger
    decision_log: list[dict] = field(default_factory=list)
    arrivals: int = 0
    in_flight_end: int = 0
    counters: dict = field(default_factory=dict)
    event_digest: str = ""
    config: dict = field(default_factory=dict)

    @property
    def seconds(self) -> int:
        return len(self.completions)

    @property
    def total_cost_micro(self) -> int:
        return self.ledger.total_micro

    @property
    def total_cost(self) -> float:
        return self.total_cost_micro / 1e6

    @property
    def shortfall_seconds(self) -> int:
        return int(self.shortfall.sum())

    @property
    def availability(self) -> float:
        if self.seconds == 0:
            return 1.0
        return 1.0 - self.shortfall_seconds / self.seconds

    @property
    def total_timeouts(self) -> int:
        return int(self.timeouts.sum())

    @property
    def total_completions(self) -> int:
        return int(self.completions.sum())

    @property
    def timeout_seconds(self) -> int:
        return int((self.timeouts > 0).sum())

    def mean_response_time(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.completions > 0,
                            self.rt_sum / np.maximum(self.completions, 1), np.nan)

    def percentile(self, q: float) -> Optional[float]:
        total = self.rt_hist.sum()
        if total == 0:
            return None
        b = int(np.searchsorted(np.cumsum(self.rt_hist), q * total))
        return (b + 1) * RT_BIN_WIDTH

    def summary(self) -> dict:
        def pct(q):
            v = self.percentile(q)
            return "" if v is None else f"{v:.4f}"
        return {
            "total_cost": format_money(self.total_cost_micro),
            "availability": f"{self.availability:.6f}",
            "p50_rt": pct(0.50),
            "p95_rt": pct(0.95),
            "p99_rt": pct(0.99),
            "timeouts": self.total_timeouts,
            "completions": self.total_completions,
            "arrivals": self.arrivals,
            "shortfall_seconds": self.shortfall_seconds,
            "provider_terminations": self.counters.get("provider_terminations", 0),
        }


def write_cost_csv(ledger: Ledger, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "type", "role", "hours", "total"])
        for e in ledger.rows():
            w.writerow([e.instance_id, e.type, e.role, e.hours, format_money(e.micro)])


def emit_report(result: ExperimentResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rt_path = out / "response_time.csv"
    mean = result.mean_response_time()
    with rt_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["second", "mean_rt", "completions", "timeouts"])
        for s in range(result.seconds):
            c = int(result.completions[s])
            w.writerow([s, f"{mean[s]:.6f}" if c else "", c, int(result.timeouts[s])])
    cost_path = out / "cost.csv"
    write_cost_csv(result.ledger, cost_path)
    summary_path = out / "summary.csv"
    summary = result.summary()
    with summary_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(summary))
        w.writerow(list(summary.values()))
    log_path = out / "decisions.log"
    with log_path.open("w") as fh:
        for rec in result.decision_log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return [rt_path, cost_path, summary_path, log_path]
