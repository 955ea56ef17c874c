"""Hardware and workload descriptors, plus the three-way mapping scenario."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

MAX_THREADS_PER_WARP = 64

_DEVICE_RE = re.compile(r"^\s*(\d+)c(\d+)w(\d+)t\s*$")


@dataclass(frozen=True)
class DeviceConfig:
    cores: int
    warps_per_core: int
    threads_per_warp: int

    def __post_init__(self) -> None:
        for name in ("cores", "warps_per_core", "threads_per_warp"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{name} must be an int, got {value!r}")
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.threads_per_warp > MAX_THREADS_PER_WARP:
            raise ValueError(
                f"threads_per_warp must be <= {MAX_THREADS_PER_WARP}, "
                f"got {self.threads_per_warp}"
            )

    @property
    def hp(self) -> int:
        return hardware_parallelism(self)

    @property
    def full_mask(self) -> int:
        return (1 << self.threads_per_warp) - 1

    @classmethod
    def parse(cls, text: str) -> "DeviceConfig":
        """Parse the compact ``<c>c<w>w<t>t`` form, e.g. ``"1c2w4t"``."""
        m = _DEVICE_RE.match(text)
        if m is None:
            raise ValueError(f"device string {text!r} is not of the form <c>c<w>w<t>t")
        return cls(*(int(g) for g in m.groups()))

    def __str__(self) -> str:
        return f"{self.cores}c{self.warps_per_core}w{self.threads_per_warp}t"


@dataclass(frozen=True)
class Workload:
    gws: int
    lws: int

    def __post_init__(self) -> None:
        if self.gws < 1:
            raise ValueError(f"gws must be >= 1, got {self.gws}")
        if self.lws < 1:
            raise ValueError(f"lws must be >= 1, got {self.lws}")
        if self.lws > self.gws:
            raise ValueError(f"lws ({self.lws}) must not exceed gws ({self.gws})")


class MappingScenario(Enum):
    MULTIPLE_CALLS = "multiple-calls"
    SINGLE_CALL_FULL = "single-call-full"
    SINGLE_CALL_UNDERUTILIZED = "single-call-underutilized"

    def __str__(self) -> str:
        return self.value


def hardware_parallelism(device: DeviceConfig) -> int:
    return device.cores * device.warps_per_core * device.threads_per_warp


def classify_scenario(workload: Workload, device: DeviceConfig) -> MappingScenario:
    # compare lws*hp against gws; exact for non-divisible sizes
    capacity = workload.lws * hardware_parallelism(device)
    if capacity < workload.gws:
        return MappingScenario.MULTIPLE_CALLS
    if capacity == workload.gws:
        return MappingScenario.SINGLE_CALL_FULL
    return MappingScenario.SINGLE_CALL_UNDERUTILIZED
