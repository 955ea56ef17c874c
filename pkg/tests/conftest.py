import pytest

from simtmap import DeviceConfig, Workload, distribute, get_kernel, simulate


@pytest.fixture(scope="session")
def dev_1c2w4t():
    return DeviceConfig(1, 2, 4)


@pytest.fixture(scope="session")
def vecadd128():
    return get_kernel("vecadd").instantiate({"n": 128})


@pytest.fixture(scope="session")
def fig1_runs(dev_1c2w4t, vecadd128):
    """vecadd n=128 on 1c2w4t under the four lws values of the timeline figure."""
    out = {}
    for lws in (1, 16, 32, 64):
        plan = distribute(Workload(128, lws), dev_1c2w4t)
        out[lws] = simulate(dev_1c2w4t, vecadd128, plan)
    return out


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    class Recorder:
        def __call__(self, number, text):
            return _Criterion(lines, number, text)

    return Recorder()


class _Criterion:
    def __init__(self, lines, number, text):
        self.lines, self.number, self.text = lines, number, text

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        prev = self.lines.get(self.number)
        # a criterion checked in several places fails if any part fails
        if prev is None or prev[0] == "PASS":
            self.lines[self.number] = (status, self.text)
        return False


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        status, text = lines[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {text}")
