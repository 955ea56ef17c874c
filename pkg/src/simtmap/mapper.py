"""Runtime local-work-size selection and workload distribution.

The runtime splits the global iteration space equally across cores. Inside a
core, consecutive blocks of ``lws`` iterations fill the lanes of warp 0, then
warp 1, and so on. Once every warp of the core is occupied, the remaining
blocks spill into a further sequential kernel call.
"""

from __future__ import annotations

from dataclasses import dataclass

from .device import DeviceConfig, Workload, hardware_parallelism

PLAN_HEADER = "# simtmap-plan v1"


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def optimal_lws(gws: int, hp: int) -> int:
    """Smallest lws that fits the whole workload in one kernel call.

    Equals ``gws / hp`` when the division is exact, is rounded up otherwise,
    and bottoms out at 1 when the device is wider than the workload.
    """
    if gws < 1 or hp < 1:
        raise ValueError(f"gws and hp must be >= 1, got gws={gws}, hp={hp}")
    return max(1, _ceil_div(gws, hp))


def kernel_call_count(gws: int, hp: int, lws: int) -> int:
    if min(gws, hp, lws) < 1:
        raise ValueError("gws, hp and lws must all be >= 1")
    return _ceil_div(gws, hp * lws)


def core_chunks(gws: int, cores: int) -> list[tuple[int, int]]:
    """``(start, size)`` per core; sizes differ by at most one, larger first."""
    base, extra = divmod(gws, cores)
    chunks = []
    start = 0
    for c in range(cores):
        size = base + (1 if c < extra else 0)
        chunks.append((start, size))
        start += size
    return chunks


@dataclass(frozen=True)
class WarpLaunch:
    core_id: int
    warp_id: int
    call_index: int
    thread_mask: int
    iterations_per_thread: tuple[int, ...]
    # -1 marks an idle lane
    first_iteration: tuple[int, ...]

    @property
    def lanes(self) -> int:
        return len(self.iterations_per_thread)

    @property
    def max_iterations(self) -> int:
        return max(self.iterations_per_thread)

    @property
    def total_iterations(self) -> int:
        return sum(self.iterations_per_thread)

    def mask_at(self, iteration: int) -> int:
        """Lanes still looping at the given per-thread iteration."""
        mask = 0
        for lane, count in enumerate(self.iterations_per_thread):
            if count > iteration:
                mask |= 1 << lane
        return mask

    def to_line(self) -> str:
        width = self.lanes
        counts = " ".join(str(n) for n in self.iterations_per_thread)
        return (
            f"{self.call_index},{self.core_id},{self.warp_id},"
            f"0b{self.thread_mask:0{width}b},{counts}"
        )


@dataclass(frozen=True)
class LaunchPlan:
    device: DeviceConfig
    workload: Workload
    launches: tuple[WarpLaunch, ...]
    kernel_calls: int

    @property
    def total_iterations(self) -> int:
        return sum(l.total_iterations for l in self.launches)

    def calls(self) -> list[list[WarpLaunch]]:
        grouped: list[list[WarpLaunch]] = [[] for _ in range(self.kernel_calls)]
        for launch in self.launches:
            grouped[launch.call_index].append(launch)
        return grouped

    def to_text(self) -> str:
        lines = [
            PLAN_HEADER,
            f"# device={self.device} gws={self.workload.gws} "
            f"lws={self.workload.lws} calls={self.kernel_calls}",
        ]
        lines.extend(l.to_line() for l in self.launches)
        return "\n".join(lines) + "\n"


def distribute(workload: Workload, device: DeviceConfig) -> LaunchPlan:
    lws = workload.lws
    threads = device.threads_per_warp
    blocks_per_call = device.warps_per_core * threads

    # (call, core, warp) -> per-lane (count, first)
    slots: dict[tuple[int, int, int], list[list[int]]] = {}
    for core, (start, size) in enumerate(core_chunks(workload.gws, device.cores)):
        for block in range(_ceil_div(size, lws)):
            call, within = divmod(block, blocks_per_call)
            warp, lane = divmod(within, threads)
            first = start + block * lws
            count = min(lws, start + size - first)
            lanes = slots.setdefault(
                (call, core, warp), [[0, -1] for _ in range(threads)]
            )
            lanes[lane] = [count, first]

    launches = []
    for (call, core, warp) in sorted(slots):
        lanes = slots[(call, core, warp)]
        mask = 0
        for lane, (count, _) in enumerate(lanes):
            if count:
                mask |= 1 << lane
        launches.append(
            WarpLaunch(
                core_id=core,
                warp_id=warp,
                call_index=call,
                thread_mask=mask,
                iterations_per_thread=tuple(c for c, _ in lanes),
                first_iteration=tuple(f for _, f in lanes),
            )
        )
    kernel_calls = max(l.call_index for l in launches) + 1
    return LaunchPlan(device, workload, tuple(launches), kernel_calls)
