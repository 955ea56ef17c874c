"""Command-line front end: ``run``, ``trace``, ``sweep`` and ``kernels list``.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 simulation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Sequence

from .device import DeviceConfig, Workload, classify_scenario
from .kernels import KernelError, builtin_catalog, get_kernel, load_kernel_file
from .mapper import distribute
from .sim import LatencyModel, SimulationError, simulate
from .sweep import (
    OPTIMAL,
    PRESETS,
    MappingStrategy,
    default_kernels,
    format_stats_table,
    grid_from_config,
    preset_grid,
    render_distribution,
    run_sweep,
    summarize,
)
from .trace import TraceFormatError, compute_metrics, parse_trace, render_timeline, write_trace

log = logging.getLogger("simtmap")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SIM = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


_LATENCY_KEYS = {
    "alu": "alu_cycles",
    "load": "load_cycles",
    "store": "store_cycles",
    "branch": "branch_cycles",
    "irregular": "irregular_load_multiplier",
    "overhead": "call_overhead_cycles",
    "issue-width": "issue_width_per_core",
}


def _key_values(items: Sequence[str] | None, flag: str) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{flag}: expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def latency_from_args(items: Sequence[str] | None) -> LatencyModel:
    overrides = {}
    for key, value in _key_values(items, "--latency").items():
        name = _LATENCY_KEYS.get(key, key)
        if name not in {f.name for f in fields(LatencyModel)}:
            raise UsageError(f"--latency: unknown key {key!r} (known: {', '.join(_LATENCY_KEYS)})")
        try:
            overrides[name] = float(value) if name == "irregular_load_multiplier" else int(value)
        except ValueError:
            raise UsageError(f"--latency: {key} needs a number, got {value!r}") from None
    try:
        return LatencyModel(**overrides)
    except ValueError as exc:
        raise UsageError(f"--latency: {exc}") from None


def _device(text: str) -> DeviceConfig:
    try:
        return DeviceConfig.parse(text)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"--device: {exc}") from None


def _kernel_descriptor(args):
    if args.kernel_file:
        try:
            return load_kernel_file(args.kernel_file)
        except OSError as exc:
            raise DataError(f"--kernel-file: {exc}") from None
    kd = get_kernel(args.kernel)
    if kd is None:
        raise UsageError(f"--kernel: unknown kernel {args.kernel!r} (known: {', '.join(builtin_catalog())})")
    return kd


def _kernel_instance(args):
    kd = _kernel_descriptor(args)
    params = {}
    for key, value in _key_values(args.param, "--param").items():
        try:
            params[key] = int(value)
        except ValueError:
            raise UsageError(f"--param: {key} needs an integer, got {value!r}") from None
    if args.n is not None:
        params["n"] = args.n
    try:
        return kd.instantiate(params)
    except KernelError as exc:
        raise UsageError(f"--param: {exc}") from None


def _out_path(args, path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if args.output_dir and not p.is_absolute():
        p = Path(args.output_dir) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(args, record: dict) -> None:
    if args.format == "json":
        sys.stdout.write(json.dumps(record, indent=2) + "\n")
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(record), lineterminator="\n")
        writer.writeheader()
        writer.writerow(record)


def _info(args, line: str) -> None:
    # human-readable lines go to stderr whenever stdout carries data
    print(line, file=sys.stderr if args.stdout else sys.stdout)


def cmd_run(args) -> int:
    device = _device(args.device)
    kernel = _kernel_instance(args)
    latency = latency_from_args(args.latency)
    if args.lws is not None:
        if not 1 <= args.lws <= kernel.gws:
            raise UsageError(f"--lws: must be between 1 and gws={kernel.gws}, got {args.lws}")
        lws = args.lws
    else:
        try:
            strategy = MappingStrategy.parse(args.strategy or "optimal")
        except ValueError as exc:
            raise UsageError(f"--strategy: {exc}") from None
        lws = strategy.lws_for(kernel.gws, device.hp)
    workload = Workload(kernel.gws, lws)
    plan = distribute(workload, device)
    want_trace = bool(args.trace_file or args.timeline)
    result = simulate(device, kernel, plan, latency, trace_enabled=want_trace)
    scenario = classify_scenario(workload, device)

    summary = {
        "kernel": kernel.label(),
        "device": str(device),
        "gws": kernel.gws,
        "lws": lws,
        "scenario": scenario.value,
        "kernel_calls": result.kernel_calls,
        "total_cycles": result.total_cycles,
        "utilization": result.utilization,
    }
    _info(
        args,
        f"lws={lws} scenario={scenario} calls={result.kernel_calls} "
        f"cycles={result.total_cycles} utilization={result.utilization:.4f}",
    )
    if args.stdout:
        _emit(args, summary)
    if args.plan_file:
        _out_path(args, args.plan_file).write_text(plan.to_text())
    if args.trace_file:
        path = _out_path(args, args.trace_file)
        n = write_trace(result.trace, path, lanes=device.threads_per_warp)
        log.info("wrote %d bytes of trace to %s", n, path)
    if args.timeline:
        path = _out_path(args, args.timeline)
        render_timeline(result.trace, kernel.section_map, path, title=f"{kernel.name} {device} lws={lws}")
        log.info("wrote timeline to %s", path)
    return EXIT_OK


def cmd_trace(args) -> int:
    device = _device(args.device)
    try:
        records = parse_trace(args.trace)
    except OSError as exc:
        raise DataError(str(exc)) from None
    except TraceFormatError as exc:
        raise DataError(f"{args.trace}: {exc}") from None
    if not records:
        raise DataError("empty trace")
    workload = None
    if args.gws is not None and args.lws is not None:
        try:
            workload = Workload(args.gws, args.lws)
        except ValueError as exc:
            raise UsageError(f"--gws/--lws: {exc}") from None
    metrics = compute_metrics(records, device, workload, args.issue_width)
    _info(args, metrics.summary())
    if args.stdout:
        _emit(
            args,
            {
                "total_cycles": metrics.total_cycles,
                "kernel_calls": metrics.kernel_calls,
                "scenario": metrics.inferred_scenario.value,
                "utilization": metrics.utilization,
                "mean_active_lanes": metrics.mean_active_lanes,
            },
        )
    else:
        for section, count in sorted(metrics.section_cycle_histogram.items(), key=lambda kv: kv[0].name):
            print(f"  {section.name:<24} {count}")
    if args.timeline:
        section_map = None
        if args.kernel or args.kernel_file:
            section_map = _kernel_instance(args).section_map
        render_timeline(records, section_map, _out_path(args, args.timeline))
    return EXIT_OK


def _load_grid_config(path: str) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise DataError(f"--grid: {exc}") from None
    if p.suffix in (".yaml", ".yml"):
        import yaml

        return yaml.safe_load(text)
    return json.loads(text)


def cmd_sweep(args) -> int:
    latency = latency_from_args(args.latency)
    try:
        strategies = [OPTIMAL] + [MappingStrategy.parse(s) for s in args.strategies.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--strategies: {exc}") from None
    kernel_names = [k for k in (args.kernels or "").split(",") if k]
    try:
        if args.grid:
            cfg = _load_grid_config(args.grid)
            if args.latency:
                cfg["latency"] = {**cfg.get("latency", {}), **asdict(latency)}
            grid = grid_from_config(cfg)
        else:
            if args.preset not in PRESETS:
                raise UsageError(f"--preset: unknown preset {args.preset!r}; available: {', '.join(PRESETS)}")
            grid = preset_grid(args.preset, default_kernels(kernel_names or None), latency)
    except KernelError as exc:
        raise UsageError(str(exc)) from None

    out_dir = Path(args.output_dir or "sweep-out")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"--output-dir: cannot write to {out_dir}: {exc}") from None

    log.info("sweeping %d kernels x %d devices x %d strategies",
             len(grid.kernels), len(grid.devices()), len(strategies))
    report = run_sweep(grid, strategies, jobs=args.jobs, trace_check=args.trace_check)
    (out_dir / "sweep.csv").write_text(report.to_csv())
    (out_dir / "sweep.json").write_text(report.to_json())
    if report.ratios:
        render_distribution(report, out_dir / "distribution.svg")
    failed = [r for r in report.rows if not r.ok]
    for r in failed:
        print(f"error: {r.kernel} {r.device} {r.strategy}: {r.error}", file=sys.stderr)

    table = format_stats_table(summarize(report))
    if args.stdout:
        sys.stdout.write(report.to_json() if args.format == "json" else report.to_csv())
        sys.stderr.write(table)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def cmd_kernels(args) -> int:
    for name, kd in builtin_catalog().items():
        params = " ".join(f"{k}={v}" for k, v in kd.defaults.items())
        gws = kd.instantiate().gws
        print(f"{name:<18} gws={gws:<6} {params:<30} {kd.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help="directory for written artifacts")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="format of --stdout data")
    common.add_argument("--stdout", action="store_true", help="write machine-readable data to stdout")
    common.add_argument("--seed", type=int, default=None, help="reserved; the model is deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    kernel_args = argparse.ArgumentParser(add_help=False)
    src = kernel_args.add_mutually_exclusive_group()
    src.add_argument("--kernel", help="builtin kernel name")
    src.add_argument("--kernel-file", help="declarative kernel description file")
    kernel_args.add_argument("--n", type=int, help="problem size n")
    kernel_args.add_argument("--param", action="append", metavar="NAME=VALUE", help="kernel parameter")

    parser = _Parser(prog="simtmap", description="SIMT mapping model: simulate, trace and sweep.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common, kernel_args], help="simulate one kernel launch")
    run.add_argument("--device", required=True, help="device as <c>c<w>w<t>t, e.g. 1c2w4t")
    how = run.add_mutually_exclusive_group()
    how.add_argument("--strategy", help="optimal (default), naive, fixed or fixed<k>")
    how.add_argument("--lws", type=int, help="explicit local work size")
    run.add_argument("--latency", action="append", metavar="CLASS=VALUE")
    run.add_argument("--trace-file", help="write the issue trace here")
    run.add_argument("--timeline", help="write an SVG timeline here")
    run.add_argument("--plan-file", help="write the launch plan here")
    run.set_defaults(func=cmd_run)

    tr = sub.add_parser("trace", parents=[common, kernel_args], help="analyze a trace file")
    tr.add_argument("trace", help="trace file")
    tr.add_argument("--device", required=True, help="device the trace was recorded on")
    tr.add_argument("--issue-width", type=int, default=1)
    tr.add_argument("--gws", type=int, help="global work size of the traced run")
    tr.add_argument("--lws", type=int, help="local work size of the traced run")
    tr.add_argument("--timeline", help="write an SVG timeline here")
    tr.set_defaults(func=cmd_trace)

    sw = sub.add_parser("sweep", parents=[common], help="run a design-space sweep")
    sw.add_argument("--preset", default="desk", help=f"grid preset: {', '.join(PRESETS)}")
    sw.add_argument("--grid", help="JSON or YAML grid config (overrides --preset)")
    sw.add_argument("--strategies", default="naive,fixed32", help="comma-separated; optimal is implied")
    sw.add_argument("--kernels", help="comma-separated builtin kernel names")
    sw.add_argument("--latency", action="append", metavar="CLASS=VALUE")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--trace-check", action="store_true", help="trace every run and check the inferred scenario")
    sw.set_defaults(func=cmd_sweep)

    kn = sub.add_parser("kernels", parents=[common], help="kernel catalog")
    kn.add_argument("action", choices=("list",))
    kn.set_defaults(func=cmd_kernels)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "command", None) in ("run",) and not (args.kernel or args.kernel_file):
        args.kernel = "vecadd"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"simtmap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, KernelError, TraceFormatError) as exc:
        print(f"simtmap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SimulationError as exc:
        print(f"simtmap {args.command}: simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM
    except OSError as exc:
        print(f"simtmap {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
