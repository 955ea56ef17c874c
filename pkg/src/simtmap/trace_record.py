from __future__ import annotations

from typing import NamedTuple

from .kernels import InstrClass, Section


class TraceRecord(NamedTuple):
    """One instruction issue event of a single warp."""

    cycle: int
    core_id: int
    warp_id: int
    call_index: int
    pc: int
    thread_mask: int
    section: Section
    instr_class: InstrClass

    @property
    def active_lanes(self) -> int:
        return self.thread_mask.bit_count()
