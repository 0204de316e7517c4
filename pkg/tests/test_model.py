import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmsir.exceptions import ConfigError, SolverError
from cmsir.model import (
    DegreeDistribution,
    EpidemicRates,
    LimitProfile,
    PopulationSpec,
    basic_reproductive_ratio,
    limit_profile_from_distribution,
    limit_profile_from_population,
    sample_population,
    validate_population,
)


@pytest.mark.parametrize("beta,rho", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.5), (math.inf, 1.0), (1.0, math.nan)])
def test_rates_reject_bad_values(beta, rho):
    with pytest.raises(ConfigError):
        EpidemicRates(beta, rho)


def test_rates_zero_recovery_allowed():
    assert EpidemicRates(1.0, 0.0).rho == 0.0


def test_population_counts_and_half_edges():
    spec = PopulationSpec({3: 900}, {3: 100}, {1: 2})
    assert (spec.n_s, spec.n_i, spec.n_r, spec.n) == (900, 100, 2, 1002)
    assert spec.half_edges() == 3002
    assert spec.half_edges("S") == 2700
    deg, state = spec.vertex_arrays()
    assert deg.size == 1002 and np.all(state[:900] == 0) and np.all(state[900:1000] == 1)
    assert PopulationSpec.from_dict(spec.to_dict()) == spec


def test_validate_odd_parity():
    report = validate_population(PopulationSpec({3: 1}, {2: 1}), EpidemicRates(1, 1))
    assert not report.ok
    assert "half-edge parity" in [c for c, _ in report.violations]


def test_validate_ok_example():
    report = validate_population(PopulationSpec({3: 900}, {3: 100}), EpidemicRates(1, 1))
    assert report.ok and report.violations == []


def test_validate_d7_violation():
    report = validate_population(PopulationSpec({2: 1000}), EpidemicRates(1, 0))
    assert not report.ok
    assert [c for c, _ in report.violations] == ["(D7)"]


def test_validate_d7_rescued_by_recovered_half_edges():
    report = validate_population(PopulationSpec({2: 1000}, {}, {2: 10}), EpidemicRates(1, 0))
    assert report.ok


def test_validate_empty_population():
    report = validate_population(PopulationSpec({}), EpidemicRates(1, 1))
    assert not report.ok and report.violations[0][0] == "empty"


def test_validate_warns_on_large_second_moment_and_infective_degree():
    report = validate_population(PopulationSpec({1: 10}, {40: 1}), EpidemicRates(1, 1))
    assert report.ok
    assert any(w.startswith("(G1)") for w in report.warnings)
    assert any(w.startswith("(D5)") for w in report.warnings)


def test_validation_report_json_shape():
    report = validate_population(PopulationSpec({2: 10}), EpidemicRates(1, 0))
    js = report.to_json()
    assert js["ok"] is False
    assert js["violations"][0]["condition"] == "(D7)"
    assert isinstance(js["warnings"], list)


def test_profile_from_population_regular():
    prof = limit_profile_from_population(PopulationSpec({3: 900}, {3: 100}))
    assert prof.alpha_s == pytest.approx(0.9, abs=1e-15)
    assert prof.alpha_i == pytest.approx(0.1, abs=1e-15)
    assert prof.p_k(3) == 1.0
    assert prof.lam == 3.0 and prof.mu == 3.0
    assert prof.mu_s == pytest.approx(2.7, abs=1e-12)
    assert prof.mu_i == pytest.approx(0.3, abs=1e-12)
    assert prof.mu_r == 0.0


def test_profile_from_population_mixed():
    prof = limit_profile_from_population(PopulationSpec({1: 500, 3: 500}))
    assert prof.p == {1: 0.5, 3: 0.5}
    assert prof.lam == 2.0


def test_profile_zero_mean_degree_blocks_downstream():
    prof = limit_profile_from_population(PopulationSpec({0: 10}))
    assert prof.lam == 0.0
    with pytest.raises(SolverError):
        basic_reproductive_ratio(prof, EpidemicRates(1, 1))


def test_profile_requires_susceptibles():
    with pytest.raises(ConfigError):
        limit_profile_from_population(PopulationSpec({}, {3: 10}))


def test_limit_profile_rejects_broken_invariants():
    with pytest.raises(ConfigError):
        LimitProfile(alpha_s=0.5, alpha_i=0.4, alpha_r=0.0, ks=[3], ps=[1.0], mu=3.0, mu_i=1.2, mu_r=0.0)
    with pytest.raises(ConfigError):
        LimitProfile(alpha_s=0.0, alpha_i=1.0, alpha_r=0.0, ks=[3], ps=[1.0], mu=3.0, mu_i=3.0, mu_r=0.0)
    with pytest.raises(ConfigError):
        LimitProfile(alpha_s=1.0, alpha_i=0.0, alpha_r=0.0, ks=[3], ps=[0.9], mu=3.0, mu_i=0.0, mu_r=0.0)


@st.composite
def populations(draw):
    def counts(min_size=0):
        return draw(st.dictionaries(st.integers(0, 8), st.integers(1, 50), min_size=min_size, max_size=4))

    s, i, r = counts(1), counts(), counts()
    spec = PopulationSpec(s, i, r)
    if spec.half_edges() % 2:
        s = dict(s)
        s[1] = s.get(1, 0) + 1
        spec = PopulationSpec(s, i, r)
    return spec


@given(populations())
@settings(max_examples=200, deadline=None)
def test_profile_invariants_hold_for_valid_populations(spec):
    report = validate_population(spec, EpidemicRates(1.0, 1.0))
    assert report.ok
    prof = limit_profile_from_population(spec)
    assert abs(prof.alpha_s + prof.alpha_i + prof.alpha_r - 1) <= 1e-12
    assert abs(prof.ps.sum() - 1) <= 1e-12
    assert abs(prof.mu_s + prof.mu_i + prof.mu_r - prof.mu) <= 1e-12
    assert abs(prof.mu_s - prof.alpha_s * prof.lam) <= 1e-12
    assert abs(prof.mu - spec.half_edges() / spec.n) <= 1e-12


def test_sample_population_regular_example():
    spec = sample_population({3: 1.0}, 1000, frac_i=0.1, seed=42)
    assert spec.counts_s == {3: 900}
    assert spec.counts_i == {3: 100}
    assert spec.counts_r == {}


def test_sample_population_parity_fix():
    spec = sample_population({1: 1.0}, 3, frac_i=0.0, seed=7)
    assert spec.n == 3
    assert spec.half_edges() == 4
    assert spec.counts_s == {1: 2, 2: 1}


def test_sample_population_fixed_infectives():
    spec = sample_population(DegreeDistribution.regular(3), 1000, seed=1, infectives={3: 1})
    assert spec.counts_i == {3: 1}
    assert spec.counts_s == {3: 999}


@given(
    st.integers(1, 400),
    st.floats(0, 0.5),
    st.floats(0, 0.4),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=60, deadline=None)
def test_sample_population_deterministic(n, frac_i, frac_r, seed):
    dist = DegreeDistribution.poisson(2.0)
    a = sample_population(dist, n, frac_i, frac_r, seed)
    b = sample_population(dist, n, frac_i, frac_r, seed)
    assert a == b
    assert a.n == n and a.half_edges() % 2 == 0


def test_poisson_truncation():
    dist = DegreeDistribution.poisson(2.5)
    assert abs(dist.ps.sum() - 1) <= 1e-12
    from scipy.stats import poisson

    assert poisson.sf(dist.k_max, 2.5) < 1e-10
    assert poisson.sf(dist.k_max - 1, 2.5) >= 1e-10
    assert dist.truncation_bound >= 0


def test_distribution_rejects_non_normalised():
    with pytest.raises(ConfigError, match="not a distribution"):
        DegreeDistribution.from_mapping({1: 0.3, 2: 0.3})


def test_r0_examples():
    b = limit_profile_from_distribution(DegreeDistribution.regular(3))
    assert abs(basic_reproductive_ratio(b, EpidemicRates(2, 1)) - 4 / 3) <= 1e-12
    a = limit_profile_from_distribution(DegreeDistribution.regular(3), frac_i=0.1)
    assert abs(basic_reproductive_ratio(a, EpidemicRates(1, 1)) - 0.9) <= 1e-12
    one = limit_profile_from_distribution(DegreeDistribution.regular(1), frac_i=0.2)
    assert basic_reproductive_ratio(one, EpidemicRates(3, 0.5)) == 0.0


@given(
    st.floats(0.01, 10), st.floats(0.01, 10), st.one_of(st.just(0.0), st.floats(1e-3, 5)),
    st.dictionaries(st.integers(0, 6), st.floats(0.01, 1), min_size=1, max_size=4),
)
@settings(max_examples=100, deadline=None)
def test_r0_monotone_in_beta(b1, b2, rho, weights):
    if weights.keys() <= {0}:
        weights[2] = 1.0
    total = sum(weights.values())
    dist = DegreeDistribution.from_mapping({k: w / total for k, w in weights.items()})
    prof = limit_profile_from_distribution(dist, frac_i=0.1)
    lo, hi = sorted((b1, b2))
    r_lo = basic_reproductive_ratio(prof, EpidemicRates(lo, rho))
    r_hi = basic_reproductive_ratio(prof, EpidemicRates(hi, rho))
    assert r_lo <= r_hi * (1 + 1e-12)
    if rho > 0 and hi > lo * (1 + 1e-9) and prof.second_factorial_moment() > 0:
        assert r_lo < r_hi


def test_r0_zero_on_degrees_zero_and_one():
    dist = DegreeDistribution.from_mapping({0: 0.4, 1: 0.6})
    prof = limit_profile_from_distribution(dist, frac_i=0.1)
    assert basic_reproductive_ratio(prof, EpidemicRates(5, 1)) == 0.0
