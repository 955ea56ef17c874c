"""Exit criteria for the package, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import io
import math
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest

from simtmap import (
    FIXED32,
    NAIVE,
    OPTIMAL,
    DeviceConfig,
    LatencyModel,
    MappingScenario,
    Workload,
    builtin_catalog,
    classify_scenario,
    compute_metrics,
    distribute,
    get_kernel,
    optimal_lws,
    parse_trace,
    run_sweep,
    simulate,
    summarize,
    write_trace,
)
from simtmap.kernels import MATH_KERNELS
from simtmap.sweep import format_stats_table, preset_grid

GOLDEN = Path(__file__).parent / "data" / "golden_1c2w4t_vecadd_n8_lws1.trace"
DESK = [DeviceConfig(c, w, t) for c in (1, 2, 4) for w in (2, 4, 8) for t in (2, 4, 8)]
NEAR_OPT_TOL = 1.05

# traces produced by criteria 4-6, checked again by criterion 8
_scenario_checks: list[tuple[str, MappingScenario, MappingScenario]] = []
_traces: list[tuple[tuple, int]] = []


def _check_scenario(label, records, device, workload):
    inferred = compute_metrics(records, device, workload).inferred_scenario
    _scenario_checks.append((label, inferred, classify_scenario(workload, device)))


def test_c1_optimal_lws_rule(acceptance):
    with acceptance(1, "optimal lws rule: 128/8 -> 16, hp >= gws -> 1, ceiling on 20 random pairs"):
        assert optimal_lws(128, 8) == 16
        rng = random.Random(1)
        for _ in range(200):
            g = rng.randint(1, 5000)
            h = rng.randint(g, 70000)
            assert optimal_lws(g, h) == 1
        pairs = 0
        while pairs < 20:
            g, h = rng.randint(2, 100000), rng.randint(2, 4096)
            if g % h == 0:
                continue
            exact = Fraction(g, h)
            assert optimal_lws(g, h) == exact.numerator // exact.denominator + 1
            pairs += 1


def _random_device(rng):
    return DeviceConfig(rng.randint(1, 64), rng.randint(1, 32), rng.randint(1, 64))


def test_c2_scenario_partition(acceptance):
    with acceptance(2, "scenario partition on 1000 random triples"):
        rng = random.Random(2)
        for _ in range(1000):
            dev = _random_device(rng)
            gws = rng.randint(1, 200000)
            lws = rng.randint(1, gws)
            diff = lws * dev.hp - gws
            branches = [diff < 0, diff == 0, diff > 0]
            assert sum(branches) == 1
            expected = [
                MappingScenario.MULTIPLE_CALLS,
                MappingScenario.SINGLE_CALL_FULL,
                MappingScenario.SINGLE_CALL_UNDERUTILIZED,
            ][branches.index(True)]
            assert classify_scenario(Workload(gws, lws), dev) is expected


def test_c3_conservation(acceptance):
    with acceptance(3, "conservation on 500 random pairs; optimal lws gives one call"):
        rng = random.Random(3)
        for _ in range(500):
            dev = DeviceConfig(rng.randint(1, 8), rng.randint(1, 8), rng.randint(1, 32))
            gws = rng.randint(1, 20000)
            lws = rng.randint(1, gws)
            plan = distribute(Workload(gws, lws), dev)
            assert sum(sum(l.iterations_per_thread) for l in plan.launches) == gws
            assert distribute(Workload(gws, optimal_lws(gws, dev.hp)), dev).kernel_calls == 1


def test_c4_fig1_structure(acceptance):
    with acceptance(4, "vecadd n=128 on 1c2w4t: calls, warps, masks, lws=16 fastest"):
        t0 = time.perf_counter()
        dev = DeviceConfig(1, 2, 4)
        inst = get_kernel("vecadd").instantiate({"n": 128})
        runs = {}
        for lws in (1, 16, 32, 64):
            wl = Workload(128, lws)
            runs[lws] = simulate(dev, inst, distribute(wl, dev), LatencyModel())
            _check_scenario(f"c4 lws={lws}", runs[lws].trace, dev, wl)
            _traces.append(((1, 2, 4), lws))
        elapsed = time.perf_counter() - t0
        assert [runs[l].kernel_calls for l in (1, 16, 32, 64)] == [16, 1, 1, 1]
        assert [len({r.warp_id for r in runs[l].trace}) for l in (1, 16, 32, 64)] == [2, 2, 1, 1]
        popcounts = []
        for l in (1, 16, 32, 64):
            counts = {r.active_lanes for r in runs[l].trace if r.section.is_body}
            assert len(counts) == 1
            popcounts.append(counts.pop())
        assert popcounts == [4, 4, 4, 2]
        cycles = {l: r.total_cycles for l, r in runs.items()}
        assert all(cycles[16] < cycles[l] for l in (1, 32, 64))
        assert elapsed < 1.0


def _oracle_candidates(gws, hp):
    top = 1 << math.ceil(math.log2(gws)) if gws > 1 else 1
    cands = {min(gws, 1 << i) for i in range(top.bit_length())}
    cands.add(optimal_lws(gws, hp))
    return sorted(cands)


def test_c5_near_optimality(acceptance):
    with acceptance(5, f"optimal within {NEAR_OPT_TOL}x of brute-force best on desk grid x 7 kernels"):
        t0 = time.perf_counter()
        kernels = [kd.instantiate() for kd in builtin_catalog().values()]
        assert len(kernels) >= 5
        worst = 1.0
        for inst in kernels:
            for dev in DESK:
                cycles = {}
                for lws in _oracle_candidates(inst.gws, dev.hp):
                    wl = Workload(inst.gws, lws)
                    res = simulate(dev, inst, distribute(wl, dev))
                    cycles[lws] = res.total_cycles
                    _check_scenario(f"c5 {inst.name} {dev} lws={lws}", res.trace, dev, wl)
                opt = cycles[optimal_lws(inst.gws, dev.hp)]
                ratio = opt / min(cycles.values())
                worst = max(worst, ratio)
                assert ratio <= NEAR_OPT_TOL, (inst.name, str(dev), cycles)
        print(f"\nworst optimal/best ratio: {worst:.4f}")
        assert time.perf_counter() - t0 < 120


@pytest.fixture(scope="module")
def desk_report():
    t0 = time.perf_counter()
    kernels = [get_kernel(n).instantiate() for n in builtin_catalog()]
    report = run_sweep(preset_grid("desk", kernels), [OPTIMAL, NAIVE, FIXED32], trace_check=True)
    return report, time.perf_counter() - t0


def test_c6_direction_of_effect(acceptance, desk_report):
    report, elapsed = desk_report
    with acceptance(6, "mean ratio >= 1 for naive and fixed32 on math kernels; stats schema"):
        assert all(r.ok for r in report.rows)
        stats = {(s.kernel, s.strategy): s for s in summarize(report)}
        for name in MATH_KERNELS:
            label = get_kernel(name).instantiate().label()
            for strategy in ("naive", "fixed32"):
                s = stats[(label, strategy)]
                assert s.count == 27
                assert s.mean >= 1.0, (label, strategy, s.mean)
                assert s.worst >= s.mean
                assert 0.0 <= s.percent_below_one <= 100.0
        for s in stats.values():
            assert {"mean", "worst", "percent_below_one"} <= set(vars(s))
        header = format_stats_table(list(stats.values())).splitlines()[0].split()
        assert {"mean", "worst", "<1"} <= set(header)
        print("\n" + format_stats_table(list(stats.values())))
        assert elapsed < 120
    for r in report.rows:
        _scenario_checks.append(
            (f"c6 {r.kernel} {r.device} {r.strategy}", MappingScenario(r.inferred_scenario), MappingScenario(r.scenario))
        )


def test_c7_trace_roundtrip_and_golden(acceptance):
    with acceptance(7, "trace round trip on simulator traces; golden file byte-stable"):
        for dims, lws in _traces or [((1, 2, 4), l) for l in (1, 16, 32, 64)]:
            dev = DeviceConfig(*dims)
            inst = get_kernel("vecadd").instantiate({"n": 128})
            res = simulate(dev, inst, distribute(Workload(128, lws), dev))
            buf = io.StringIO()
            write_trace(res.trace, buf, lanes=dev.threads_per_warp)
            buf.seek(0)
            assert parse_trace(buf) == list(res.trace)
        dev = DeviceConfig(1, 2, 4)
        inst = get_kernel("vecadd").instantiate({"n": 8})
        texts = []
        for _ in range(2):
            buf = io.StringIO()
            write_trace(simulate(dev, inst, distribute(Workload(8, 1), dev)).trace, buf, lanes=4)
            texts.append(buf.getvalue().encode())
        assert texts[0] == texts[1] == GOLDEN.read_bytes()


def test_c8_scenario_self_evidence(acceptance, desk_report):
    with acceptance(8, "inferred scenario equals classify_scenario on every trace of criteria 4-6"):
        labels = {label.split()[0] for label, _, _ in _scenario_checks}
        assert {"c4", "c5", "c6"} <= labels, "run the whole acceptance module"
        mismatches = [(l, a, b) for l, a, b in _scenario_checks if a is not b]
        assert not mismatches, mismatches[:5]
