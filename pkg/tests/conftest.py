import pytest

from cmsir.model import DegreeDistribution, EpidemicRates, limit_profile_from_distribution

ACCEPTANCE_LINES = []


@pytest.fixture
def profile_a():
    """p_3 = 1, alpha_S = 0.9, alpha_I = 0.1 (use with beta = rho = 1)."""
    return limit_profile_from_distribution(DegreeDistribution.regular(3), frac_i=0.1)


@pytest.fixture
def rates_a():
    return EpidemicRates(1.0, 1.0)


@pytest.fixture
def profile_b():
    """p_3 = 1, alpha_S = 1 (use with beta = 2, rho = 1)."""
    return limit_profile_from_distribution(DegreeDistribution.regular(3))


@pytest.fixture
def profile_b_small():
    """profile B with alpha_I = 1e-3 grafted in."""
    return limit_profile_from_distribution(DegreeDistribution.regular(3), frac_i=1e-3)


@pytest.fixture
def rates_b():
    return EpidemicRates(2.0, 1.0)


@pytest.fixture
def profile_poisson():
    return limit_profile_from_distribution(DegreeDistribution.poisson(2.5), frac_i=0.05, frac_r=0.1)


@pytest.fixture
def rates_poisson():
    return EpidemicRates(1.5, 0.5)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
