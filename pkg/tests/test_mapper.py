import math
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simtmap.device import DeviceConfig, MappingScenario, Workload, classify_scenario
from simtmap.mapper import core_chunks, distribute, kernel_call_count, optimal_lws

DATA = Path(__file__).parent / "data"


@pytest.mark.parametrize(
    "gws, hp, lws",
    [(128, 8, 16), (32, 65536, 1), (100, 8, 13), (64, 64, 1)],
)
def test_optimal_lws_examples(gws, hp, lws):
    assert optimal_lws(gws, hp) == lws


@pytest.mark.parametrize("gws, hp, lws, calls", [(128, 8, 1, 16), (128, 8, 16, 1), (130, 8, 16, 2)])
def test_kernel_call_count_examples(gws, hp, lws, calls):
    assert kernel_call_count(gws, hp, lws) == calls


def test_optimal_lws_rejects_zero():
    with pytest.raises(ValueError):
        optimal_lws(0, 4)


def test_core_chunks_remainder_goes_low():
    assert core_chunks(10, 4) == [(0, 3), (3, 3), (6, 2), (8, 2)]
    assert core_chunks(2, 4) == [(0, 1), (1, 1), (2, 0), (2, 0)]


def test_distribute_single_call_full():
    plan = distribute(Workload(128, 16), DeviceConfig(1, 2, 4))
    assert plan.kernel_calls == 1
    assert len(plan.launches) == 2
    for launch in plan.launches:
        assert launch.thread_mask == 0b1111
        assert launch.iterations_per_thread == (16, 16, 16, 16)
    assert plan.launches[0].first_iteration == (0, 16, 32, 48)
    assert plan.launches[1].first_iteration == (64, 80, 96, 112)


def test_distribute_underutilized_threads_first():
    plan = distribute(Workload(128, 64), DeviceConfig(1, 2, 4))
    assert plan.kernel_calls == 1
    (launch,) = plan.launches
    assert launch.warp_id == 0
    assert launch.thread_mask == 0b0011
    assert launch.iterations_per_thread == (64, 64, 0, 0)


def test_distribute_naive_many_calls():
    plan = distribute(Workload(128, 1), DeviceConfig(1, 2, 4))
    assert plan.kernel_calls == 16
    assert len(plan.launches) == 32
    assert all(l.thread_mask == 0b1111 for l in plan.launches)
    assert all(l.iterations_per_thread == (1, 1, 1, 1) for l in plan.launches)


def test_distribute_single_lane_device():
    plan = distribute(Workload(8, 8), DeviceConfig(1, 1, 1))
    assert plan.kernel_calls == 1
    (launch,) = plan.launches
    assert launch.thread_mask == 0b1
    assert launch.iterations_per_thread == (8,)


def test_distribute_partial_last_lane():
    plan = distribute(Workload(100, 13), DeviceConfig(1, 2, 4))
    assert plan.kernel_calls == 1
    counts = [n for l in plan.launches for n in l.iterations_per_thread]
    assert counts == [13] * 7 + [9]


def test_plan_text_golden():
    plan = distribute(Workload(10, 2), DeviceConfig(2, 2, 2))
    assert plan.to_text() == (DATA / "plan_2c2w2t_gws10_lws2.txt").read_text()


def _expected_iterations(plan):
    seen = []
    for l in plan.launches:
        for count, first in zip(l.iterations_per_thread, l.first_iteration):
            seen.extend(range(first, first + count))
    return sorted(seen)


devices = st.builds(DeviceConfig, st.integers(1, 8), st.integers(1, 8), st.integers(1, 16))


@st.composite
def workload_and_device(draw):
    dev = draw(devices)
    gws = draw(st.integers(1, 3000))
    lws = draw(st.integers(1, gws))
    return Workload(gws, lws), dev


@settings(max_examples=300, deadline=None)
@given(workload_and_device())
def test_distribute_properties(case):
    wl, dev = case
    plan = distribute(wl, dev)
    # conservation, and every iteration assigned exactly once
    assert plan.total_iterations == wl.gws
    assert _expected_iterations(plan) == list(range(wl.gws))
    for l in plan.launches:
        active = [n for n in l.iterations_per_thread if n > 0]
        assert bin(l.thread_mask).count("1") == len(active)
        assert max(l.iterations_per_thread) <= wl.lws
    assert plan.kernel_calls == max(l.call_index for l in plan.launches) + 1
    # per-core form of the call-count agreement
    per_core = [
        kernel_call_count(size, dev.warps_per_core * dev.threads_per_warp, wl.lws)
        for _, size in core_chunks(wl.gws, dev.cores)
        if size
    ]
    assert plan.kernel_calls == max(per_core)
    assert plan.kernel_calls == kernel_call_count(wl.gws, dev.hp, wl.lws)
    assert distribute(wl, dev) == plan


@settings(max_examples=200, deadline=None)
@given(devices, st.integers(1, 5000))
def test_optimal_lws_single_call(dev, gws):
    lws = optimal_lws(gws, dev.hp)
    assert lws == max(1, math.ceil(Fraction(gws, dev.hp)))
    assert distribute(Workload(gws, lws), dev).kernel_calls == 1
    assert classify_scenario(Workload(gws, lws), dev) is not MappingScenario.MULTIPLE_CALLS
