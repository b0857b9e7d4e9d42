import pytest

from qnodyn.core_model import SystemParams

CRITERIA: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


# reference parameter sets (Delta0 = 1 unless stated)
FIG2 = SystemParams(epsilon=0.0, delta0=1.0, omega=1.0, alpha=0.02, g=0.18, kappa=0.0, beta=10.0)
FIG3 = SystemParams(epsilon=0.5, delta0=1.0, omega=1.0, alpha=0.02, g=0.18, kappa=0.0154, beta=10.0)
FIG4 = FIG2.with_(kappa=0.0154)
FIG5 = FIG4.with_(beta=3.0)
FIG6 = FIG5.with_(delta0=1.18)


@pytest.fixture
def fig2():
    return FIG2


@pytest.fixture
def fig3():
    return FIG3


@pytest.fixture
def fig4():
    return FIG4
