"""Cycle-approximate SIMT execution of a launch plan.

Each core runs an in-order issue stage. A warp holds at most one instruction
in flight: issuing an instruction of latency L makes the warp unready for L
cycles. Every cycle a core issues up to ``issue_width_per_core`` instructions
from ready warps, scanning round-robin from the warp after the last one that
issued. Cores share nothing, so within a kernel call they are simulated
independently and the call ends when the slowest core drains. Calls run back
to back with ``call_overhead_cycles`` of dispatch cost between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

from .device import DeviceConfig, hardware_parallelism
from .kernels import InstrClass, KernelInstance, KernelTemplate
from .mapper import LaunchPlan, WarpLaunch
from .trace_record import TraceRecord

DEFAULT_MAX_CYCLES = 10**9


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    alu_cycles: int = 1
    load_cycles: int = 20
    store_cycles: int = 4
    branch_cycles: int = 2
    irregular_load_multiplier: float = 4
    call_overhead_cycles: int = 200
    issue_width_per_core: int = 1

    def __post_init__(self) -> None:
        for name in ("alu_cycles", "load_cycles", "store_cycles", "branch_cycles", "issue_width_per_core"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.irregular_load_multiplier <= 0:
            raise ValueError("irregular_load_multiplier must be > 0")
        if self.call_overhead_cycles < 0:
            raise ValueError("call_overhead_cycles must be >= 0")

    def latency(self, cls: InstrClass, irregular: bool = False) -> int:
        if cls is InstrClass.LOAD:
            if irregular:
                return max(1, math.ceil(self.load_cycles * self.irregular_load_multiplier))
            return self.load_cycles
        if cls is InstrClass.STORE:
            return self.store_cycles
        if cls is InstrClass.BRANCH:
            return self.branch_cycles
        # alu, and the issue slot of a barrier
        return self.alu_cycles

    def with_overrides(self, **overrides) -> "LatencyModel":
        return replace(self, **overrides)


@dataclass(frozen=True)
class SimResult:
    total_cycles: int
    per_call_cycles: tuple[int, ...]
    utilization: float
    lane_instructions: int
    issued_instructions: int
    trace: tuple[TraceRecord, ...] = field(default=(), repr=False)

    @property
    def kernel_calls(self) -> int:
        return len(self.per_call_cycles)


def _warp_stream(launch: WarpLaunch, t: KernelTemplate) -> Iterator[tuple[int, int]]:
    """Yield ``(pc, mask)`` in issue order for one warp launch."""
    full = launch.thread_mask
    for pc in range(t.body_start):
        yield pc, full
    body = range(t.body_start, t.epilogue_start)
    counts = sorted(set(launch.iterations_per_thread))
    done = 0
    for count in counts:
        if count == 0:
            continue
        mask = launch.mask_at(done)
        for _ in range(done, count):
            for pc in body:
                yield pc, mask
        done = count
    for pc in range(t.epilogue_start, len(t.instructions)):
        yield pc, full


class _Warp:
    __slots__ = ("warp_id", "stream", "pending", "busy_until", "done", "waiting")

    def __init__(self, launch: WarpLaunch, template: KernelTemplate, start: int) -> None:
        self.warp_id = launch.warp_id
        self.stream = _warp_stream(launch, template)
        self.pending = next(self.stream)
        self.busy_until = start
        self.done = False
        self.waiting = False


def _run_core(
    launches: list[WarpLaunch],
    kernel: KernelInstance,
    latencies: list[int],
    barriers: list[bool],
    width: int,
    start: int,
    limit: int,
    core: int,
    call: int,
    records: list[TraceRecord] | None,
) -> tuple[int, int, int]:
    """Returns (completion cycle, lane instructions, issued instructions)."""
    instrs = kernel.template.instructions
    sections = [i.section for i in instrs]
    classes = [i.cls for i in instrs]
    warps = [_Warp(l, kernel.template, start) for l in sorted(launches, key=lambda l: l.warp_id)]
    n = len(warps)
    remaining = n
    arrived: list[_Warp] = []
    rr = 0
    cycle = start
    end = start
    lanes = issued_total = 0
    while remaining:
        if cycle > limit:
            raise SimulationError(f"cycle budget of {limit} exceeded on core {core}, call {call}")
        issued = 0
        last = rr
        for k in range(n):
            idx = (rr + k) % n
            w = warps[idx]
            if w.done or w.waiting or w.busy_until > cycle:
                continue
            pc, mask = w.pending
            done_at = cycle + latencies[pc]
            w.busy_until = done_at
            if done_at > end:
                end = done_at
            lanes += mask.bit_count()
            if records is not None:
                records.append(
                    TraceRecord(cycle, core, w.warp_id, call, pc, mask, sections[pc], classes[pc])
                )
            if barriers[pc]:
                w.waiting = True
                arrived.append(w)
                if len(arrived) == n:
                    release = max(a.busy_until for a in arrived)
                    for a in arrived:
                        a.waiting = False
                        a.busy_until = release
                    arrived.clear()
            nxt = next(w.stream, None)
            if nxt is None:
                w.done = True
                remaining -= 1
            else:
                w.pending = nxt
            issued += 1
            last = idx
            if issued == width:
                break
        issued_total += issued
        if issued:
            rr = (last + 1) % n
            cycle += 1
        elif remaining:
            cycle = min(w.busy_until for w in warps if not (w.done or w.waiting))
    return end, lanes, issued_total


def simulate(
    device: DeviceConfig,
    kernel: KernelInstance,
    plan: LaunchPlan,
    latency: LatencyModel | None = None,
    trace_enabled: bool = True,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> SimResult:
    latency = latency or LatencyModel()
    if plan.workload.gws != kernel.gws:
        raise SimulationError(f"plan covers gws={plan.workload.gws} but kernel instance has gws={kernel.gws}")
    for launch in plan.launches:
        if not 0 <= launch.core_id < device.cores:
            raise SimulationError(f"launch core {launch.core_id} out of range for {device}")
        if not 0 <= launch.warp_id < device.warps_per_core:
            raise SimulationError(f"launch warp {launch.warp_id} out of range for {device}")
        if launch.lanes != device.threads_per_warp or launch.thread_mask >> device.threads_per_warp:
            raise SimulationError(f"launch lane count does not match {device}")

    instrs = kernel.template.instructions
    latencies = [latency.latency(i.cls, i.irregular) for i in instrs]
    barriers = [i.cls is InstrClass.BARRIER for i in instrs]
    width = latency.issue_width_per_core
    records: list[TraceRecord] | None = [] if trace_enabled else None

    per_call = []
    start = 0
    end = 0
    lanes = issued = 0
    for call, launches in enumerate(plan.calls()):
        if call:
            start = end + latency.call_overhead_cycles
        by_core: dict[int, list[WarpLaunch]] = {}
        for launch in launches:
            by_core.setdefault(launch.core_id, []).append(launch)
        end = start
        for core in sorted(by_core):
            core_end, core_lanes, core_issued = _run_core(
                by_core[core], kernel, latencies, barriers, width, start, max_cycles, core, call, records
            )
            end = max(end, core_end)
            lanes += core_lanes
            issued += core_issued
        if end > max_cycles:
            raise SimulationError(f"cycle budget of {max_cycles} exceeded")
        per_call.append(end - start)

    total = end
    capacity = total * hardware_parallelism(device) * width
    trace: tuple[TraceRecord, ...] = ()
    if records is not None:
        records.sort(key=lambda r: (r.cycle, r.core_id, r.warp_id))
        trace = tuple(records)
    return SimResult(
        total_cycles=total,
        per_call_cycles=tuple(per_call),
        utilization=lanes / capacity if capacity else 0.0,
        lane_instructions=lanes,
        issued_instructions=issued,
        trace=trace,
    )
