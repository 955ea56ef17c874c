"""Issue-trace file format, metrics and timeline rendering.

File format: a ``# simtmap-trace v1`` header line followed by one record per
line::

    cycle,core,warp,call,pc,0b<mask>,<section>,<class>

Records are written in (cycle, core, warp) order. Readers ignore extra
trailing fields.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import IO, Iterable, Sequence

from .device import DeviceConfig, MappingScenario, Workload, hardware_parallelism
from .kernels import InstrClass, Section, SectionMap
from .trace_record import TraceRecord

__all__ = [
    "TRACE_HEADER",
    "TraceFormatError",
    "TraceMetrics",
    "TraceRecord",
    "compute_metrics",
    "format_trace",
    "parse_trace",
    "render_timeline",
    "render_timelines",
    "write_trace",
]

TRACE_HEADER = "# simtmap-trace v1"
_FIELDS = ("cycle", "core", "warp", "call", "pc", "mask", "section", "class")


class TraceFormatError(ValueError):
    def __init__(self, line: int, field: str | None, message: str) -> None:
        where = f"line {line}" + (f", field {field!r}" if field else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.field = field


def _sort_key(r: TraceRecord) -> tuple[int, int, int]:
    return (r.cycle, r.core_id, r.warp_id)


def format_trace(records: Iterable[TraceRecord], lanes: int | None = None) -> str:
    """Render records as trace text. Masks are zero-padded to ``lanes`` bits,
    or to the widest mask present when ``lanes`` is not given."""
    ordered = sorted(records, key=_sort_key)
    if lanes is None:
        lanes = max((r.thread_mask.bit_length() for r in ordered), default=1)
    out = [TRACE_HEADER]
    for r in ordered:
        out.append(
            f"{r.cycle},{r.core_id},{r.warp_id},{r.call_index},{r.pc},"
            f"0b{r.thread_mask:0{lanes}b},{r.section.name},{r.instr_class.value}"
        )
    return "\n".join(out) + "\n"


def write_trace(
    records: Iterable[TraceRecord],
    destination: str | PathLike | IO[str],
    lanes: int | None = None,
) -> int:
    text = format_trace(records, lanes)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", newline="\n") as fh:
            fh.write(text)
    return len(text.encode())


def _parse_int(value: str, lineno: int, name: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise TraceFormatError(lineno, name, f"expected an integer, got {value!r}") from None
    if n < 0:
        raise TraceFormatError(lineno, name, f"must be non-negative, got {n}")
    return n


_CLASSES = {c.value: c for c in InstrClass}


def _parse_line(line: str, lineno: int) -> TraceRecord:
    parts = line.split(",")
    if len(parts) < len(_FIELDS):
        raise TraceFormatError(lineno, None, f"expected {len(_FIELDS)} fields, got {len(parts)}")
    cycle, core, warp, call, pc = (_parse_int(v, lineno, f) for v, f in zip(parts[:5], _FIELDS))
    mask_text = parts[5].strip()
    if not mask_text.startswith("0b"):
        raise TraceFormatError(lineno, "mask", f"expected 0b-prefixed binary, got {mask_text!r}")
    try:
        mask = int(mask_text[2:], 2)
    except ValueError:
        raise TraceFormatError(lineno, "mask", f"invalid binary mask {mask_text!r}") from None
    if mask == 0:
        raise TraceFormatError(lineno, "mask", "thread mask has no active lanes")
    try:
        section = Section.parse(parts[6])
    except ValueError as exc:
        raise TraceFormatError(lineno, "section", str(exc)) from None
    cls = _CLASSES.get(parts[7].strip())
    if cls is None:
        raise TraceFormatError(lineno, "class", f"unknown instruction class {parts[7]!r}")
    return TraceRecord(cycle, core, warp, call, pc, mask, section, cls)


def parse_trace(source: str | PathLike | IO[str]) -> list[TraceRecord]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise TraceFormatError(1, None, f"missing header {TRACE_HEADER!r}")
    records = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        records.append(_parse_line(line, lineno))
    return records


def parse_trace_text(text: str) -> list[TraceRecord]:
    return parse_trace(io.StringIO(text))


@dataclass(frozen=True)
class TraceMetrics:
    # span from cycle 0 through the last issue, inclusive
    total_cycles: int
    kernel_calls: int
    issues_per_warp: dict[tuple[int, int], int]
    mean_active_lanes: float
    utilization: float
    section_cycle_histogram: dict[Section, int]
    inferred_scenario: MappingScenario

    def summary(self) -> str:
        return (
            f"calls={self.kernel_calls} scenario={self.inferred_scenario} "
            f"cycles={self.total_cycles} utilization={self.utilization:.4f} "
            f"mean_active_lanes={self.mean_active_lanes:.3f}"
        )


def compute_metrics(
    records: Sequence[TraceRecord],
    device: DeviceConfig,
    workload: Workload | None = None,
    issue_width: int = 1,
) -> TraceMetrics:
    """Summarize one run's trace.

    The mapping scenario is read off the trace: more than one kernel call, or
    one call in which every warp of every core ran its body with all lanes
    active, or neither. Lanes can be fully active and still short of ``lws``
    iterations when a core's share of the workload is small, so when the
    workload is known a full call must also show ``lws`` body iterations on
    every warp.
    """
    if not records:
        raise ValueError("empty trace")
    total = max(r.cycle for r in records) + 1
    calls = max(r.call_index for r in records) + 1
    per_warp = Counter((r.core_id, r.warp_id) for r in records)
    # tally by pc first; sections are constant per pc within one run
    pc_counts = Counter(r.pc for r in records)
    pc_lanes: Counter[int] = Counter()
    section_of_pc = {}
    for r in records:
        pc_lanes[r.pc] += r.thread_mask.bit_count()
        if r.pc not in section_of_pc:
            section_of_pc[r.pc] = r.section
    body_pcs = [pc for pc, s in section_of_pc.items() if s.is_body]
    body_issues = sum(pc_counts[pc] for pc in body_pcs)
    mean_lanes = sum(pc_lanes[pc] for pc in body_pcs) / body_issues if body_issues else 0.0
    util = sum(pc_lanes.values()) / (total * hardware_parallelism(device) * issue_width)
    hist: Counter[Section] = Counter()
    for pc, n in pc_counts.items():
        hist[section_of_pc[pc]] += n
    body_set = set(body_pcs)
    body = [r for r in records if r.pc in body_set] if calls == 1 else []

    if calls > 1:
        scenario = MappingScenario.MULTIPLE_CALLS
    else:
        full = device.full_mask
        warps = {(r.core_id, r.warp_id) for r in body}
        every_warp = len(warps) == device.cores * device.warps_per_core
        saturated = every_warp and all(r.thread_mask == full for r in body)
        if saturated and workload is not None:
            first_pc = min(r.pc for r in body)
            trips = Counter((r.core_id, r.warp_id) for r in body if r.pc == first_pc)
            saturated = all(n == workload.lws for n in trips.values())
        if saturated:
            scenario = MappingScenario.SINGLE_CALL_FULL
        else:
            scenario = MappingScenario.SINGLE_CALL_UNDERUTILIZED

    return TraceMetrics(
        total_cycles=total,
        kernel_calls=calls,
        issues_per_warp=dict(sorted(per_warp.items())),
        mean_active_lanes=mean_lanes,
        utilization=util,
        section_cycle_histogram=dict(hist),
        inferred_scenario=scenario,
    )


# --- rendering -------------------------------------------------------------


def _image_format(destination) -> str:
    # svg unless a path names another format matplotlib can write
    if isinstance(destination, (str, PathLike)):
        suffix = Path(destination).suffix.lstrip(".").lower()
        if suffix in ("png", "pdf", "svg"):
            return suffix
    return "svg"


def _section_colors(sections: Sequence[Section]) -> dict[Section, tuple]:
    import matplotlib

    cmap = matplotlib.colormaps["tab10"]
    return {s: cmap(i % 10) for i, s in enumerate(sections)}


def _draw_panel(axes, records: Sequence[TraceRecord], section_map: SectionMap | None, title: str | None) -> None:
    wave_ax, warp_ax, pc_ax, lane_ax = axes
    sections = list(section_map.sections()) if section_map else []
    for r in records:
        if r.section not in sections:
            sections.append(r.section)
    colors = _section_colors(sections)

    # shade alternate kernel calls so sequential calls read as clusters
    spans: dict[int, list[int]] = {}
    for r in records:
        lo_hi = spans.setdefault(r.call_index, [r.cycle, r.cycle])
        lo_hi[0] = min(lo_hi[0], r.cycle)
        lo_hi[1] = max(lo_hi[1], r.cycle)
    for call, (lo, hi) in spans.items():
        if call % 2:
            for ax in axes:
                ax.axvspan(lo - 0.5, hi + 0.5, color="0.92", zorder=0)

    for row, section in enumerate(sections):
        cycles = [r.cycle for r in records if r.section == section]
        if cycles:
            wave_ax.broken_barh([(c - 0.5, 1) for c in cycles], (row - 0.4, 0.8), color=colors[section])
    wave_ax.set_yticks(range(len(sections)))
    wave_ax.set_yticklabels([s.name for s in sections], fontsize=6)
    wave_ax.set_ylim(-0.6, max(len(sections), 1) - 0.4)
    wave_ax.set_ylabel("section", fontsize=7)
    if title:
        wave_ax.set_title(title, fontsize=9)

    warp_ids = sorted({(r.core_id, r.warp_id) for r in records})
    row_of = {cw: i for i, cw in enumerate(warp_ids)}
    for section in sections:
        pts = [r for r in records if r.section == section]
        if pts:
            warp_ax.scatter(
                [r.cycle for r in pts],
                [row_of[(r.core_id, r.warp_id)] for r in pts],
                s=4,
                marker="|",
                color=colors[section],
                label=section.name,
            )
    warp_ax.set_yticks(range(len(warp_ids)))
    warp_ax.set_yticklabels([f"c{c}w{w}" for c, w in warp_ids], fontsize=6)
    warp_ax.set_ylabel("warp", fontsize=7)

    pc_ax.scatter([r.cycle for r in records], [r.pc for r in records], s=2, color="black")
    pc_ax.set_ylabel("PC", fontsize=7)

    lane_ax.step(
        [r.cycle for r in records], [r.active_lanes for r in records], where="post", linewidth=0.6
    )
    lane_ax.set_ylabel("active lanes", fontsize=7)
    lane_ax.set_xlabel("cycle", fontsize=7)
    for ax in axes:
        ax.tick_params(labelsize=6)


def render_timelines(
    panels: Sequence[tuple[str | None, Sequence[TraceRecord]]],
    section_map: SectionMap | None,
    destination: str | PathLike | IO,
) -> int:
    """Stack one timeline per ``(title, records)`` pair into a single SVG.

    Returns the number of panels drawn.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = max(len(panels), 1)
    fig, axes = plt.subplots(
        4 * n,
        1,
        figsize=(10, 4.5 * n),
        gridspec_kw={"height_ratios": [2, 2, 1.5, 1] * n},
        squeeze=False,
    )
    axes = axes[:, 0]
    if not panels:
        panels = [(None, [])]
    for i, (title, records) in enumerate(panels):
        _draw_panel(axes[4 * i : 4 * i + 4], records, section_map, title)
    fig.tight_layout()
    fig.savefig(destination, format=_image_format(destination))
    plt.close(fig)
    return len(panels)


def render_timeline(
    records: Sequence[TraceRecord],
    section_map: SectionMap | None,
    destination: str | PathLike | IO,
    title: str | None = None,
) -> int:
    return render_timelines([(title, records)], section_map, destination)
