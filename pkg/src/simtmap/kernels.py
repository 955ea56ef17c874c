"""Kernel models: per-iteration instruction templates tagged with code sections.

Kernels are instruction-count models. Control flow never depends on data, so
every iteration of a kernel replays the same template.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping


class KernelError(ValueError):
    pass


class InstrClass(Enum):
    ALU = "alu"
    LOAD = "load"
    STORE = "store"
    BRANCH = "branch"
    BARRIER = "barrier"


class SectionKind(Enum):
    INIT = "init"
    DISPATCH = "dispatch"
    BODY = "body"
    LOOP_OVERHEAD = "loop-overhead"
    EPILOGUE = "epilogue"


@dataclass(frozen=True)
class Section:
    """A code section; only ``body`` may carry a named sub-section."""

    kind: SectionKind
    sub: str = ""

    def __post_init__(self) -> None:
        if self.sub and self.kind is not SectionKind.BODY:
            raise ValueError(f"only body sections take a sub-name, got {self.kind.value}.{self.sub}")
        if any(ch in self.sub for ch in ", \n\t."):
            raise ValueError(f"invalid sub-section name {self.sub!r}")

    @property
    def name(self) -> str:
        return f"{self.kind.value}.{self.sub}" if self.sub else self.kind.value

    @property
    def is_body(self) -> bool:
        return self.kind is SectionKind.BODY

    @classmethod
    def parse(cls, text: str) -> "Section":
        head, _, sub = text.strip().partition(".")
        try:
            kind = SectionKind(head)
        except ValueError:
            raise ValueError(f"unknown section {text!r}") from None
        return cls(kind, sub)

    def __str__(self) -> str:
        return self.name


INIT = Section(SectionKind.INIT)
DISPATCH = Section(SectionKind.DISPATCH)
BODY = Section(SectionKind.BODY)
LOOP_OVERHEAD = Section(SectionKind.LOOP_OVERHEAD)
EPILOGUE = Section(SectionKind.EPILOGUE)


@dataclass(frozen=True)
class Instr:
    cls: InstrClass
    section: Section
    # irregular loads pay the irregular latency multiplier
    irregular: bool = False


@dataclass(frozen=True)
class SectionMap:
    """Half-open PC ranges, ordered and disjoint, each tagged with one section."""

    ranges: tuple[tuple[int, int, Section], ...]

    def section_of(self, pc: int) -> Section:
        for start, stop, section in self.ranges:
            if start <= pc < stop:
                return section
        raise KeyError(f"pc {pc} outside the kernel template")

    @property
    def size(self) -> int:
        return self.ranges[-1][1] if self.ranges else 0

    def sections(self) -> list[Section]:
        seen: list[Section] = []
        for _, _, s in self.ranges:
            if s not in seen:
                seen.append(s)
        return seen

    @classmethod
    def from_instructions(cls, instrs: Iterable[Instr]) -> "SectionMap":
        ranges: list[list] = []
        for pc, ins in enumerate(instrs):
            if ranges and ranges[-1][2] == ins.section:
                ranges[-1][1] = pc + 1
            else:
                ranges.append([pc, pc + 1, ins.section])
        return cls(tuple((a, b, s) for a, b, s in ranges))


@dataclass(frozen=True)
class KernelTemplate:
    prologue: tuple[Instr, ...]
    body: tuple[Instr, ...]
    loop_overhead: tuple[Instr, ...]
    epilogue: tuple[Instr, ...]

    def __post_init__(self) -> None:
        classes = {i.cls for i in self.body}
        if not classes & {InstrClass.LOAD, InstrClass.STORE}:
            raise KernelError("kernel body needs at least one load or store")
        if InstrClass.ALU not in classes:
            raise KernelError("kernel body needs at least one alu instruction")
        for part, allowed in (
            (self.prologue, {SectionKind.INIT, SectionKind.DISPATCH}),
            (self.body, {SectionKind.BODY}),
            (self.loop_overhead, {SectionKind.LOOP_OVERHEAD}),
            (self.epilogue, {SectionKind.EPILOGUE}),
        ):
            for ins in part:
                if ins.section.kind not in allowed:
                    raise KernelError(f"section {ins.section} misplaced in template")
        # warps run different trip counts, so a barrier inside the loop could never match up
        for ins in self.body + self.loop_overhead:
            if ins.cls is InstrClass.BARRIER:
                raise KernelError("barriers are only allowed in prologue and epilogue")
            if ins.irregular and ins.cls is not InstrClass.LOAD:
                raise KernelError("only loads can be irregular")

    @property
    def instructions(self) -> tuple[Instr, ...]:
        return self.prologue + self.body + self.loop_overhead + self.epilogue

    @property
    def body_start(self) -> int:
        return len(self.prologue)

    @property
    def overhead_start(self) -> int:
        return len(self.prologue) + len(self.body)

    @property
    def epilogue_start(self) -> int:
        return self.overhead_start + len(self.loop_overhead)

    @property
    def section_map(self) -> SectionMap:
        return SectionMap.from_instructions(self.instructions)


@dataclass(frozen=True)
class KernelInstance:
    name: str
    params: tuple[tuple[str, int], ...]
    gws: int
    template: KernelTemplate

    @property
    def section_map(self) -> SectionMap:
        return self.template.section_map

    def label(self) -> str:
        args = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.name}({args})"


@dataclass(frozen=True)
class KernelDescriptor:
    name: str
    description: str
    defaults: Mapping[str, int]
    gws_of: Callable[[Mapping[str, int]], int]
    build: Callable[[Mapping[str, int]], KernelTemplate]

    def instantiate(self, params: Mapping[str, int] | None = None) -> KernelInstance:
        return instantiate(self, params)


def instantiate(kernel: KernelDescriptor, params: Mapping[str, int] | None = None) -> KernelInstance:
    merged = dict(kernel.defaults)
    for key, value in (params or {}).items():
        if key not in kernel.defaults:
            known = ", ".join(kernel.defaults) or "none"
            raise KernelError(f"{kernel.name}: unknown parameter {key!r} (known: {known})")
        merged[key] = value
    for key, value in merged.items():
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise KernelError(f"{kernel.name}: parameter {key} must be a positive integer, got {value!r}")
    frozen = MappingProxyType(merged)
    gws = kernel.gws_of(frozen)
    return KernelInstance(kernel.name, tuple(merged.items()), gws, kernel.build(frozen))


# --- builtin catalog -------------------------------------------------------

_CLASS_TOKENS = {c.value: c for c in InstrClass}


def _seq(section: Section, spec: str) -> tuple[Instr, ...]:
    out = []
    for tok in spec.split():
        irregular = tok.endswith("!")
        out.append(Instr(_CLASS_TOKENS[tok.rstrip("!")], section, irregular))
    return tuple(out)


def _sub(name: str) -> Section:
    return Section(SectionKind.BODY, name)


# argument loads, then global-id / bound computation
_PROLOGUE = _seq(INIT, "alu load load") + _seq(DISPATCH, "alu alu alu")
_LOOP = _seq(LOOP_OVERHEAD, "alu branch")
_EPILOGUE = _seq(EPILOGUE, "alu branch")


def _template(body: tuple[Instr, ...], prologue=_PROLOGUE, epilogue=_EPILOGUE) -> KernelTemplate:
    return KernelTemplate(prologue, body, _LOOP, epilogue)


def _vecadd(p):
    return _template(_seq(BODY, "load load alu store"))


def _saxpy(p):
    return _template(_seq(BODY, "load load alu alu store"))


def _sgemm_tile(p):
    inner = _seq(_sub("inner-product"), "load load alu alu") * p["k"]
    return _template(_seq(_sub("setup"), "alu alu") + inner + _seq(_sub("writeback"), "store"))


def _gaussian_blur(p):
    taps = 2 * p["radius"] + 1
    stencil = _seq(_sub("stencil"), "load alu") * taps
    return _template(stencil + _seq(_sub("normalize"), "alu store"))


def _nearest_neighbor(p):
    chain = (_seq(_sub("distance"), "load alu alu") + _seq(_sub("compare"), "alu alu")) * p["candidates"]
    return _template(_seq(_sub("query"), "load") + chain + _seq(_sub("writeback"), "store"))


def _gcn_aggregate(p):
    gather = _seq(_sub("gather"), "load load! alu") * p["degree"]
    return _template(gather + _seq(_sub("normalize"), "alu store"))


def _dnn_dense(p):
    body = (
        _seq(_sub("matmul"), "load load alu") * p["inputs"]
        + _seq(_sub("bias"), "load alu")
        + _seq(_sub("activation"), "alu alu store")
    )
    epilogue = _seq(EPILOGUE, "barrier alu branch")
    return _template(body, epilogue=epilogue)


def _kd(name, description, defaults, gws_of, build) -> KernelDescriptor:
    return KernelDescriptor(name, description, MappingProxyType(dict(defaults)), gws_of, build)


_CATALOG: dict[str, KernelDescriptor] = {
    k.name: k
    for k in (
        _kd("vecadd", "c[i] = a[i] + b[i]", {"n": 1024}, lambda p: p["n"], _vecadd),
        _kd("saxpy", "y[i] = a * x[i] + y[i]", {"n": 1024}, lambda p: p["n"], _saxpy),
        _kd(
            "sgemm-tile",
            "one output element per work item, k-long inner product",
            {"m": 16, "n": 16, "k": 16},
            lambda p: p["m"] * p["n"],
            _sgemm_tile,
        ),
        _kd(
            "gaussian-blur-1d",
            "(2*radius+1)-tap stencil with overlapping loads",
            {"n": 1024, "radius": 2},
            lambda p: p["n"],
            _gaussian_blur,
        ),
        _kd(
            "nearest-neighbor",
            "distance plus compare/select chain over a fixed candidate set",
            {"n": 512, "candidates": 8},
            lambda p: p["n"],
            _nearest_neighbor,
        ),
        _kd(
            "gcn-aggregate",
            "neighbor feature gather with irregular loads",
            {"nodes": 512, "degree": 4},
            lambda p: p["nodes"],
            _gcn_aggregate,
        ),
        _kd(
            "dnn-dense-layer",
            "dense layer: matmul, bias, activation",
            {"batch": 4, "inputs": 16, "outputs": 64},
            lambda p: p["batch"] * p["outputs"],
            _dnn_dense,
        ),
    )
}

MATH_KERNELS = ("vecadd", "saxpy", "sgemm-tile")


def builtin_catalog() -> Mapping[str, KernelDescriptor]:
    return MappingProxyType(_CATALOG)


def get_kernel(name: str) -> KernelDescriptor | None:
    return _CATALOG.get(name)


# --- declarative kernel files ----------------------------------------------

_PART_OF = {
    SectionKind.INIT: "prologue",
    SectionKind.DISPATCH: "prologue",
    SectionKind.BODY: "body",
    SectionKind.LOOP_OVERHEAD: "loop_overhead",
    SectionKind.EPILOGUE: "epilogue",
}


@dataclass
class _FileTemplate:
    parts: dict[str, list[Instr]] = field(
        default_factory=lambda: {"prologue": [], "body": [], "loop_overhead": [], "epilogue": []}
    )

    def freeze(self) -> KernelTemplate:
        p = self.parts
        return KernelTemplate(
            tuple(p["prologue"]), tuple(p["body"]), tuple(p["loop_overhead"]), tuple(p["epilogue"])
        )


def parse_kernel_text(text: str, name: str = "custom") -> KernelDescriptor:
    """Parse the declarative kernel format.

    Optional ``key = value`` lines before the first section set ``name`` and the
    default ``n`` (the kernel's gws). Each ``[section]`` header is followed by
    one instruction class per line; ``load irregular`` marks an irregular load.
    Prologue sections (``init``, ``dispatch``) must precede ``body`` and so on.
    """
    default_n = 128
    tmpl = _FileTemplate()
    section: Section | None = None
    order = ["prologue", "body", "loop_overhead", "epilogue"]
    last_part = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            try:
                section = Section.parse(line[1:-1])
            except ValueError as exc:
                raise KernelError(f"line {lineno}: {exc}") from None
            part = order.index(_PART_OF[section.kind])
            if part < last_part:
                raise KernelError(f"line {lineno}: section [{section}] out of order")
            last_part = part
            continue
        if section is None:
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep:
                raise KernelError(f"line {lineno}: expected 'key = value' or a [section] header")
            if key == "name":
                name = value
            elif key == "n":
                try:
                    default_n = int(value)
                except ValueError:
                    raise KernelError(f"line {lineno}: n must be an integer") from None
            else:
                raise KernelError(f"line {lineno}: unknown setting {key!r}")
            continue
        tokens = line.lower().split()
        cls = _CLASS_TOKENS.get(tokens[0])
        if cls is None:
            raise KernelError(f"line {lineno}: unknown instruction class {tokens[0]!r}")
        irregular = tokens[1:] == ["irregular"]
        if tokens[1:] and not irregular:
            raise KernelError(f"line {lineno}: unexpected tokens {' '.join(tokens[1:])!r}")
        tmpl.parts[_PART_OF[section.kind]].append(Instr(cls, section, irregular))
    try:
        template = tmpl.freeze()
    except KernelError as exc:
        raise KernelError(f"{name}: {exc}") from None
    return _kd(name, "loaded from kernel file", {"n": default_n}, lambda p: p["n"], lambda p: template)


def load_kernel_file(path: str | Path) -> KernelDescriptor:
    path = Path(path)
    return parse_kernel_text(path.read_text(), name=path.stem)
