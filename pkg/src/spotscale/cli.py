"""Command line entry point: ``spotscale run`` and ``spotscale sweep``.

Exit codes: 0 success, 1 invalid configuration or input files, 2 failure
while simulating.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .capacity import load_catalog
from .errors import SpotScaleError
from .experiment import (
    ExperimentSpec, format_table, prepare, run_spec, run_sweep, sweep_specs, write_outputs,
    write_sweep,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

# flag dest -> ExperimentSpec field
_FIELDS = {
    "policy": "policy", "f": "f", "on_demand_pct": "on_demand_pct",
    "max_groups": "max_groups", "bidding": "bidding", "margin": "margin",
    "seed": "seed", "duration": "duration", "workload_scale": "workload_scale",
    "catalog": "catalog", "prices": "prices", "workload": "workload", "out": "out_dir",
}
_SWEPT = ("policy", "f", "on_demand_pct", "bidding", "margin")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, sweep: bool) -> None:
    many = " (comma-separated list)" if sweep else ""
    num = str if sweep else None
    p.add_argument("--config", help="JSON file with spec fields; flags override it")
    p.add_argument("--policy", help="proposed, on-demand-only or one-spot-type" + many)
    p.add_argument("--f", type=num or int, help="fault-tolerant level" + many)
    p.add_argument("--on-demand-pct", type=num or float,
                   help="least on-demand share, 0-100" + many)
    p.add_argument("--max-groups", type=int, help="maximum spot groups S")
    p.add_argument("--bidding", help="truthful or on-demand" + many)
    p.add_argument("--margin", help="static or dynamic" + many)
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--workload-scale", type=float)
    p.add_argument("--catalog", help="catalog CSV (default: bundled)")
    p.add_argument("--prices",
                   help="price trace CSV or a bundled regime: stable, volatile, spike")
    p.add_argument("--workload", help="workload CSV (default: bundled diurnal day)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spotscale", description="Spot/on-demand auto-scaling simulator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run one experiment")
    _add_common(run, sweep=False)
    sw = sub.add_parser("sweep", help="run a configuration matrix and tabulate cost")
    _add_common(sw, sweep=True)
    sw.add_argument("--jobs", type=int, default=1, help="worker processes")
    return ap


def _split(value, cast):
    return [cast(x) for x in str(value).split(",") if x.strip()]


def _base_spec(args, skip=()) -> ExperimentSpec:
    spec = ExperimentSpec.from_file(args.config) if args.config else ExperimentSpec()
    overrides = {field: getattr(args, dest) for dest, field in _FIELDS.items()
                 if dest not in skip and getattr(args, dest) is not None}
    return replace(spec, **overrides)


def _run(args) -> int:
    spec = _base_spec(args)
    if not spec.out_dir:
        raise SpotScaleError("--out is required")
    sim = prepare(spec)
    try:
        result = run_spec(spec, sim)
        write_outputs(result, spec.out_dir)
    except Exception as exc:
        print(f"spotscale: simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    s = result.summary()
    print(f"total_cost={s['total_cost']} availability={s['availability']} "
          f"timeouts={s['timeouts']} -> {spec.out_dir}")
    return EXIT_OK


def _sweep(args) -> int:
    base = _base_spec(args, skip=_SWEPT)
    try:
        axes = dict(
            policies=_split(args.policy, str) if args.policy else [base.policy],
            fs=_split(args.f, int) if args.f is not None else [base.f],
            pcts=(_split(args.on_demand_pct, float) if args.on_demand_pct is not None
                  else [base.on_demand_pct]),
            biddings=_split(args.bidding, str) if args.bidding else [base.bidding],
            margins=_split(args.margin, str) if args.margin else [base.margin],
        )
    except ValueError as exc:
        raise SpotScaleError(f"bad list value: {exc}") from None
    specs = sweep_specs(base, **axes)
    for spec in specs:
        # every cell must be valid before any runs
        spec.sim_config(_catalog(spec))
    rows = run_sweep(specs, jobs=args.jobs)
    print(format_table(rows))
    if base.out_dir:
        out = Path(base.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep(rows, out / "sweep.csv")
    failed = sum(r["status"] != "ok" for r in rows)
    return EXIT_RUNTIME if failed == len(rows) else EXIT_OK


def _catalog(spec: ExperimentSpec):
    spec.check_files()
    return load_catalog(spec.catalog_path())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args) if args.command == "run" else _sweep(args)
    except (SpotScaleError, ValueError, TypeError) as exc:
        # anything escaping before the simulation starts is bad input
        print(f"spotscale: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
