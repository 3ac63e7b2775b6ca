import pytest

from qcrsim.config import table1_config
from qcrsim.rates import TABLE1_QUBIT, calibrate_kappa


@pytest.fixture(scope="session")
def qubit_cal():
    return TABLE1_QUBIT.replace(kappa=calibrate_kappa(TABLE1_QUBIT, 4.31e-6))


@pytest.fixture(scope="session")
def reset_cfg():
    return table1_config().reset_config()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS
    if not VERDICTS:
        return
    terminalreporter.section("acceptance")
    for key in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[key])
