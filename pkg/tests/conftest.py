import pytest

from jumpsde import kernels


@pytest.fixture(params=kernels.BACKENDS)
def each_backend(request):
    with kernels.backend(request.param):
        yield request.param


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(mod.LINES, key=lambda k: (len(k.rstrip("ab")), k)):
        terminalreporter.write_line(mod.LINES[cid])
