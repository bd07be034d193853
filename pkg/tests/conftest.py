import numpy as np
import pytest

from wavespread import MetricSpec, assign_equal_pi, generate_csr, generate_grid


@pytest.fixture
def grid3():
    return generate_grid(3, 3)


@pytest.fixture
def csr144():
    return generate_csr(144, 1, fixed_count=True)


@pytest.fixture
def csr_small():
    pop = generate_csr(30, 4, fixed_count=True)
    return assign_equal_pi(pop, 6)


@pytest.fixture
def shift_metric():
    return MetricSpec("shifted_tore2", grid_dims=(3, 3), shift=(1 / 12, 1 / 4))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
