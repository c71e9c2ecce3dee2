import pytest
from hypothesis import HealthCheck, settings

from emshield import _kernels

settings.register_profile(
    "emshield", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
settings.load_profile("emshield")


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run the test once per kernel backend."""
    if request.param == "numba" and not _kernels.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    previous = _kernels.active_backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(previous)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
