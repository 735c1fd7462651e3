import numpy as np
import pytest

from crbwave.channel import ArrayGeometry, MultipathParams, OfdmNumerology
from crbwave.fim import ResourceGrid, SensingProblem
from crbwave.scenario import default_weight_matrix


def random_params(rng, L):
    return MultipathParams(
        gain=rng.standard_normal(L) + 1j * rng.standard_normal(L),
        tau=rng.uniform(10, 800, L) / 299_792_458.0,
        doppler=rng.uniform(0, 800, L),
        aoa=rng.uniform(-1.4, 1.4, L),
        aod=rng.uniform(-1.4, 1.4, L),
    )


def random_problem(rng, nT=4, nR=4, L=2, M=8, n_max=16, k_max=4, noise_var=None):
    params = random_params(rng, L)
    num = OfdmNumerology(15e3, 3e9)
    if noise_var is None:
        noise_var = rng.uniform(0.5, 2.0, M)
    grid = ResourceGrid(rng.integers(0, n_max, M), rng.integers(0, k_max, M), noise_var)
    return SensingProblem(params, grid, num, ArrayGeometry(nT, nR), default_weight_matrix(L, num))


def random_waveform(rng, nT, M):
    return rng.standard_normal((nT, M)) + 1j * rng.standard_normal((nT, M))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


def record_criterion(name, passed, detail=""):
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
