import pytest

from scse import MCConfig, UnderlyingParams, build_tables

SIGMA2 = 1.0 / 15.0  # snr 15 throughout the shared fixtures


@pytest.fixture(scope="session")
def params_b2():
    return UnderlyingParams(B=2, R=1.5, sigma2=SIGMA2)


@pytest.fixture(scope="session")
def params_b4():
    return UnderlyingParams(B=4, R=1.6, sigma2=SIGMA2)


@pytest.fixture(scope="session")
def mc_small():
    return MCConfig(seed=0, n_samples=20_000)


@pytest.fixture(scope="session")
def tables_b2(params_b2, mc_small):
    return build_tables(params_b2, mc_small, n_points=96)


@pytest.fixture(scope="session")
def tables_b4(params_b4, mc_small):
    return build_tables(params_b4, mc_small, n_points=96)
