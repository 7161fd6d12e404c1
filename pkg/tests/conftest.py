import pytest

from queue_regimes.analysis import build_state_graph
from queue_regimes.regimes import BUILTIN

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=sorted(BUILTIN))
def regime(request):
    return BUILTIN[request.param]()


def states_up_to(regime, max_n):
    return build_state_graph(regime, max_n).nodes


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
