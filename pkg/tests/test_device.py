import pytest
from hypothesis import given
from hypothesis import strategies as st

from simtmap.device import (
    DeviceConfig,
    MappingScenario,
    Workload,
    classify_scenario,
    hardware_parallelism,
)


@pytest.mark.parametrize(
    "dims, hp",
    [((1, 2, 4), 8), ((1, 1, 1), 1), ((64, 32, 32), 65536)],
)
def test_hardware_parallelism(dims, hp):
    assert hardware_parallelism(DeviceConfig(*dims)) == hp


@pytest.mark.parametrize(
    "lws, expected",
    [
        (1, MappingScenario.MULTIPLE_CALLS),
        (16, MappingScenario.SINGLE_CALL_FULL),
        (32, MappingScenario.SINGLE_CALL_UNDERUTILIZED),
        (64, MappingScenario.SINGLE_CALL_UNDERUTILIZED),
    ],
)
def test_classify_vecadd_example(lws, expected):
    assert classify_scenario(Workload(128, lws), DeviceConfig(1, 2, 4)) is expected


def test_non_divisible_boundary_uses_integer_compare():
    dev = DeviceConfig(1, 1, 3)
    assert classify_scenario(Workload(10, 3), dev) is MappingScenario.MULTIPLE_CALLS
    assert classify_scenario(Workload(10, 4), dev) is MappingScenario.SINGLE_CALL_UNDERUTILIZED
    assert classify_scenario(Workload(9, 3), dev) is MappingScenario.SINGLE_CALL_FULL


@pytest.mark.parametrize("dims", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 65), (-2, 1, 1)])
def test_device_rejects_invalid(dims):
    with pytest.raises(ValueError):
        DeviceConfig(*dims)


def test_device_allows_64_lanes():
    assert DeviceConfig(1, 1, 64).full_mask == 2**64 - 1


@pytest.mark.parametrize("gws, lws", [(0, 1), (4, 0), (4, 5)])
def test_workload_rejects_invalid(gws, lws):
    with pytest.raises(ValueError):
        Workload(gws, lws)


@pytest.mark.parametrize("text", ["1c2w4t", "64c32w32t", " 2c8w16t "])
def test_device_string_roundtrip(text):
    dev = DeviceConfig.parse(text)
    assert str(dev) == text.strip()
    assert DeviceConfig.parse(str(dev)) == dev


@pytest.mark.parametrize("text", ["1c2w", "c2w4t", "1x2w4t", "", "0c1w1t"])
def test_device_string_rejects(text):
    with pytest.raises(ValueError):
        DeviceConfig.parse(text)


dims = st.integers(1, 16)


@given(dims, dims, dims, st.integers(0, 2), st.integers(1, 5))
def test_hp_monotone(c, w, t, which, bump):
    base = [c, w, t]
    bigger = list(base)
    bigger[which] += bump
    assert hardware_parallelism(DeviceConfig(*bigger)) >= hardware_parallelism(DeviceConfig(*base))
