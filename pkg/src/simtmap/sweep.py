"""Design-space sweep: kernels x device configurations x mapping strategies.

Every combination is simulated once. Cycle counts of the naive and fixed
strategies are divided by the cycle count of the hardware-aware (optimal)
mapping on the same kernel and device, and the resulting ratios are reduced
to mean, worst case and share of ratios below one.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import re
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from os import PathLike
from typing import IO, Any, Mapping, Sequence

from .device import DeviceConfig, Workload, classify_scenario, hardware_parallelism
from .kernels import KernelError, KernelInstance, get_kernel
from .mapper import distribute, optimal_lws
from .sim import LatencyModel, SimulationError, simulate
from .trace import _image_format, compute_metrics


class StrategyKind(Enum):
    OPTIMAL = "optimal"
    NAIVE = "naive"
    FIXED = "fixed"


@dataclass(frozen=True)
class MappingStrategy:
    kind: StrategyKind
    k: int = 32

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"fixed lws must be >= 1, got {self.k}")

    @property
    def label(self) -> str:
        return f"fixed{self.k}" if self.kind is StrategyKind.FIXED else self.kind.value

    def lws_for(self, gws: int, hp: int) -> int:
        if self.kind is StrategyKind.OPTIMAL:
            return optimal_lws(gws, hp)
        if self.kind is StrategyKind.NAIVE:
            return 1
        return min(self.k, gws)

    @classmethod
    def parse(cls, text: str) -> "MappingStrategy":
        t = text.strip().lower()
        if t in ("optimal", "naive"):
            return cls(StrategyKind(t))
        m = re.fullmatch(r"fixed[:=]?(\d+)?", t)
        if m:
            return cls(StrategyKind.FIXED, int(m.group(1) or 32))
        raise ValueError(f"unknown strategy {text!r} (expected optimal, naive, fixed or fixed<k>)")

    def __str__(self) -> str:
        return self.label


OPTIMAL = MappingStrategy(StrategyKind.OPTIMAL)
NAIVE = MappingStrategy(StrategyKind.NAIVE)
FIXED32 = MappingStrategy(StrategyKind.FIXED, 32)


@dataclass(frozen=True)
class SweepGrid:
    cores: tuple[int, ...]
    warps: tuple[int, ...]
    threads: tuple[int, ...]
    kernels: tuple[KernelInstance, ...]
    latency: LatencyModel = field(default_factory=LatencyModel)

    def __post_init__(self) -> None:
        for name in ("cores", "warps", "threads", "kernels"):
            if not getattr(self, name):
                raise ValueError(f"sweep grid needs at least one entry in {name}")
        # validates every combination up front
        self.devices()

    def devices(self) -> list[DeviceConfig]:
        return [DeviceConfig(c, w, t) for c, w, t in itertools.product(self.cores, self.warps, self.threads)]


DESK_AXES = {"cores": (1, 2, 4), "warps": (2, 4, 8), "threads": (2, 4, 8)}
FULL_AXES = {"cores": (1, 2, 4, 8, 16, 32, 64), "warps": (2, 4, 8, 16, 32), "threads": (2, 4, 8, 16, 32)}
PRESETS = {"desk": DESK_AXES, "full": FULL_AXES}


def default_kernels(names: Sequence[str] | None = None) -> tuple[KernelInstance, ...]:
    from .kernels import builtin_catalog

    catalog = builtin_catalog()
    names = list(names) if names else list(catalog)
    out = []
    for name in names:
        kd = catalog.get(name)
        if kd is None:
            raise KernelError(f"unknown kernel {name!r}")
        out.append(kd.instantiate())
    return tuple(out)


def preset_grid(
    name: str,
    kernels: Sequence[KernelInstance] | None = None,
    latency: LatencyModel | None = None,
) -> SweepGrid:
    try:
        axes = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return SweepGrid(
        kernels=tuple(kernels) if kernels else default_kernels(),
        latency=latency or LatencyModel(),
        **axes,
    )


def grid_from_config(config: Mapping[str, Any]) -> SweepGrid:
    """Build a grid from a mapping such as a parsed JSON/YAML file.

    Keys: ``cores``, ``warps``, ``threads`` (lists of ints), optional ``preset``
    supplying defaults for missing axes, ``kernels`` (list of names or of
    ``{"name": ..., "params": {...}}``) and ``latency`` (LatencyModel fields).
    """
    axes = dict(PRESETS[config["preset"]]) if "preset" in config else {}
    for key in ("cores", "warps", "threads"):
        if key in config:
            axes[key] = tuple(int(v) for v in config[key])
        if key not in axes:
            raise ValueError(f"grid config missing {key!r}")
    kernels = []
    for entry in config.get("kernels") or []:
        if isinstance(entry, str):
            entry = {"name": entry}
        kd = get_kernel(entry["name"])
        if kd is None:
            raise KernelError(f"unknown kernel {entry['name']!r}")
        kernels.append(kd.instantiate(entry.get("params")))
    latency = LatencyModel(**config.get("latency", {}))
    return SweepGrid(kernels=tuple(kernels) or default_kernels(), latency=latency, **axes)


@dataclass(frozen=True)
class SweepRow:
    kernel: str
    device: str
    strategy: str
    gws: int
    lws: int
    scenario: str
    total_cycles: int | None = None
    kernel_calls: int | None = None
    utilization: float | None = None
    inferred_scenario: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


CSV_COLUMNS = [
    "kernel",
    "device",
    "strategy",
    "gws",
    "lws",
    "scenario",
    "total_cycles",
    "kernel_calls",
    "utilization",
    "inferred_scenario",
    "error",
]


@dataclass(frozen=True)
class RatioStats:
    mean: float
    worst: float
    below_one: int
    count: int

    @property
    def fraction_below_one(self) -> float:
        return self.below_one / self.count

    @property
    def percent_below_one(self) -> float:
        return 100.0 * self.below_one / self.count

    @classmethod
    def of(cls, ratios: Sequence[float]) -> "RatioStats":
        if not ratios:
            raise ValueError("no ratios to summarize")
        return cls(
            mean=statistics.fmean(ratios),
            worst=max(ratios),
            below_one=sum(1 for r in ratios if r < 1),
            count=len(ratios),
        )


@dataclass
class SweepReport:
    rows: list[SweepRow]
    # (kernel, strategy) -> [(device, cycles(strategy) / cycles(optimal))]
    ratios: dict[tuple[str, str], list[tuple[str, float]]]
    stats: dict[tuple[str, str], RatioStats]

    def row(self, kernel: str, device: str, strategy: str) -> SweepRow:
        for r in self.rows:
            if (r.kernel, r.device, r.strategy) == (kernel, device, strategy):
                return r
        raise KeyError((kernel, device, strategy))

    def ratio_values(self, kernel: str, strategy: str) -> list[float]:
        return [v for _, v in self.ratios.get((kernel, strategy), [])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "rows": [asdict(r) for r in self.rows],
            "ratios": [
                {"kernel": k, "strategy": s, "device": d, "ratio": v}
                for (k, s), entries in self.ratios.items()
                for d, v in entries
            ],
            "stats": [
                {
                    "kernel": k,
                    "strategy": s,
                    "mean": st.mean,
                    "worst": st.worst,
                    "below_one": st.below_one,
                    "count": st.count,
                    "percent_below_one": st.percent_below_one,
                }
                for (k, s), st in self.stats.items()
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SweepReport":
        doc = json.loads(text)
        ratios: dict[tuple[str, str], list[tuple[str, float]]] = {}
        for e in doc["ratios"]:
            ratios.setdefault((e["kernel"], e["strategy"]), []).append((e["device"], e["ratio"]))
        stats = {
            (e["kernel"], e["strategy"]): RatioStats(e["mean"], e["worst"], e["below_one"], e["count"])
            for e in doc["stats"]
        }
        return cls([SweepRow(**r) for r in doc["rows"]], ratios, stats)


def _run_one(
    job: tuple[KernelInstance, DeviceConfig, MappingStrategy, LatencyModel, bool],
) -> SweepRow:
    kernel, device, strategy, latency, trace_check = job
    lws = strategy.lws_for(kernel.gws, hardware_parallelism(device))
    workload = Workload(kernel.gws, lws)
    base = dict(
        kernel=kernel.label(),
        device=str(device),
        strategy=strategy.label,
        gws=kernel.gws,
        lws=lws,
        scenario=classify_scenario(workload, device).value,
    )
    try:
        result = simulate(device, kernel, distribute(workload, device), latency, trace_enabled=trace_check)
    except SimulationError as exc:
        return SweepRow(**base, error=str(exc))
    inferred = None
    if trace_check:
        inferred = compute_metrics(result.trace, device, workload, latency.issue_width_per_core).inferred_scenario.value
    return SweepRow(
        **base,
        total_cycles=result.total_cycles,
        kernel_calls=result.kernel_calls,
        utilization=result.utilization,
        inferred_scenario=inferred,
    )


def run_sweep(
    grid: SweepGrid,
    strategies: Sequence[MappingStrategy] = (OPTIMAL, NAIVE, FIXED32),
    jobs: int = 1,
    trace_check: bool = False,
) -> SweepReport:
    """Simulate every combination and build the ratio report.

    Optimal must be among ``strategies``; it is the denominator of every
    ratio. With ``trace_check`` each run is traced and the scenario inferred
    from its trace is stored next to the one predicted from the workload.
    """
    strategies = list(dict.fromkeys(strategies))
    if OPTIMAL not in strategies:
        raise ValueError("the optimal strategy must be part of the sweep")
    combos = [
        (kernel, device, strategy, grid.latency, trace_check)
        for kernel in grid.kernels
        for device in grid.devices()
        for strategy in strategies
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, combos, chunksize=8))
    else:
        rows = [_run_one(c) for c in combos]
    return build_report(rows)


def build_report(rows: list[SweepRow]) -> SweepReport:
    optimal = {
        (r.kernel, r.device): r.total_cycles for r in rows if r.strategy == OPTIMAL.label and r.ok
    }
    ratios: dict[tuple[str, str], list[tuple[str, float]]] = {}
    for r in rows:
        if r.strategy == OPTIMAL.label:
            continue
        key = (r.kernel, r.strategy)
        ratios.setdefault(key, [])
        denom = optimal.get((r.kernel, r.device))
        if r.ok and denom:
            ratios[key].append((r.device, r.total_cycles / denom))
    stats = {key: RatioStats.of([v for _, v in vals]) for key, vals in ratios.items() if vals}
    ratios = {k: v for k, v in ratios.items() if v}
    return SweepReport(rows, ratios, stats)


@dataclass(frozen=True)
class StatsRow:
    kernel: str
    strategy: str
    mean: float
    worst: float
    percent_below_one: float
    below_one: int
    count: int


def summarize(report: SweepReport) -> list[StatsRow]:
    if not report.rows:
        raise ValueError("empty sweep report")
    out = []
    for (kernel, strategy), vals in report.ratios.items():
        st = RatioStats.of([v for _, v in vals])
        out.append(StatsRow(kernel, strategy, st.mean, st.worst, st.percent_below_one, st.below_one, st.count))
    return out


def format_stats_table(rows: Sequence[StatsRow]) -> str:
    header = ("kernel", "strategy", "mean", "worst", "<1 (%)", "<1 (n/total)")
    body = [
        (
            r.kernel,
            r.strategy,
            f"{r.mean:.3f}",
            f"{r.worst:.3f}",
            f"{r.percent_below_one:.1f}",
            f"{r.below_one}/{r.count}",
        )
        for r in rows
    ]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(line, widths)).rstrip() for line in (header, *body)]
    return "\n".join(lines) + "\n"


# --- brute-force reference ---------------------------------------------------


def candidate_lws(gws: int, hp: int) -> list[int]:
    """Powers of two up to the first one >= gws (clamped to gws), plus the optimal lws."""
    cands = {min(gws, 1 << i) for i in range((gws - 1).bit_length() + 1)}
    cands.add(optimal_lws(gws, hp))
    return sorted(cands)


def brute_force_cycles(
    kernel: KernelInstance, device: DeviceConfig, latency: LatencyModel | None = None
) -> dict[int, int]:
    latency = latency or LatencyModel()
    out = {}
    for lws in candidate_lws(kernel.gws, hardware_parallelism(device)):
        plan = distribute(Workload(kernel.gws, lws), device)
        out[lws] = simulate(device, kernel, plan, latency, trace_enabled=False).total_cycles
    return out


# --- plotting ----------------------------------------------------------------

_STRATEGY_COLORS = {"naive": "#e8b70c", "fixed32": "#2b6cb0"}


def render_distribution(report: SweepReport, destination: str | PathLike | IO) -> int:
    """Per-kernel violin plots of the non-optimal ratios with a reference line
    at 1 and the statistics table underneath. Returns the number of panels."""
    if not report.rows or not report.ratios:
        raise ValueError("nothing to plot: the report has no ratios")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    kernels = list(dict.fromkeys(k for k, _ in report.ratios))
    strategies = list(dict.fromkeys(s for _, s in report.ratios))
    fig, axes = plt.subplots(
        2, len(kernels), figsize=(max(3.2 * len(kernels), 5), 5.5),
        gridspec_kw={"height_ratios": [3, 1]}, squeeze=False,
    )
    for col, kernel in enumerate(kernels):
        ax, tab_ax = axes[0, col], axes[1, col]
        cells = []
        for pos, strategy in enumerate(strategies):
            vals = report.ratio_values(kernel, strategy)
            if not vals:
                continue
            color = _STRATEGY_COLORS.get(strategy, f"C{pos}")
            if max(vals) - min(vals) < 1e-12:
                # KDE is undefined for a point mass; draw it as a flat line
                ax.hlines(vals[0], pos - 0.35, pos + 0.35, color=color, linewidth=2)
            else:
                parts = ax.violinplot([vals], positions=[pos], showmeans=True, showextrema=True)
                for body in parts["bodies"]:
                    body.set_facecolor(color)
                    body.set_alpha(0.6)
            st = report.stats[(kernel, strategy)]
            cells.append([strategy, f"{st.mean:.2f}", f"{st.worst:.2f}", f"{st.percent_below_one:.0f}%"])
        ax.axhline(1.0, color="red", linewidth=1.5)
        ax.set_xticks(range(len(strategies)))
        ax.set_xticklabels(strategies, fontsize=7)
        ax.set_title(kernel, fontsize=8)
        ax.set_ylabel("cycles / cycles(optimal)", fontsize=7)
        ax.tick_params(labelsize=7)
        tab_ax.axis("off")
        if cells:
            table = tab_ax.table(
                cellText=cells, colLabels=["", "avg", "worst", "<1"], loc="center", cellLoc="center"
            )
            table.auto_set_font_size(False)
            table.set_fontsize(7)
    fig.tight_layout()
    fig.savefig(destination, format=_image_format(destination))
    plt.close(fig)
    return len(kernels)
