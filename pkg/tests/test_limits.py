import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmsir.exceptions import ConfigError, NoMajorOutbreak, SolverError
from cmsir.limits import (
    LimitCurves,
    LimitFunctions,
    eval_limit_functions,
    final_size,
    find_theta_infinity,
    invert_v_s,
    paths_to_csv,
    solve_theta,
    solve_v_paths,
)
from cmsir.model import DegreeDistribution, EpidemicRates, LimitProfile, limit_profile_from_distribution

# independent closed forms for p_3 = 1
THETA_INF_A = (6 - math.sqrt(3.6)) / 5.4
FINAL_SIZE_A = 0.9 * THETA_INF_A**3  # 0.39468385845407...


def test_values_at_one(profile_poisson, rates_poisson):
    v = eval_limit_functions(profile_poisson, rates_poisson, 1.0)
    p = profile_poisson
    assert abs(v["v_S"] - p.alpha_s) <= 1e-12
    assert abs(v["h_S"] - p.mu_s) <= 1e-12
    assert abs(v["h_X"] - p.mu) <= 1e-12
    assert abs(v["h_R"] - p.mu_r) <= 1e-12
    assert abs(v["h_I"] - p.mu_i) <= 1e-12
    assert abs(v["p_I"] - p.mu_i / p.mu) <= 1e-12


def test_h_i_polynomial_example(profile_a, rates_a):
    v = eval_limit_functions(profile_a, rates_a, 0.9)
    assert abs(v["h_I"] - 0.1917) <= 1e-12


def test_values_at_zero(profile_poisson, rates_poisson):
    fn = LimitFunctions(profile_poisson, rates_poisson)
    assert fn.v_s(0.0) == pytest.approx(profile_poisson.alpha_s * profile_poisson.p_k(0), abs=1e-15)
    assert fn.h_s(0.0) == 0 and fn.h_x(0.0) == 0 and fn.h_r(0.0) == 0
    with pytest.raises(SolverError):
        fn.p_i(0.0)
    with pytest.raises(ConfigError):
        eval_limit_functions(profile_poisson, rates_poisson, 1.5)


def random_profiles():
    @st.composite
    def build(draw):
        w = draw(st.dictionaries(st.integers(0, 12), st.floats(0.01, 1), min_size=1, max_size=6))
        if w.keys() <= {0}:
            w[3] = 1.0
        tot = sum(w.values())
        dist = DegreeDistribution.from_mapping({k: x / tot for k, x in w.items()})
        fi = draw(st.floats(0, 0.4))
        fr = draw(st.floats(0, 0.4))
        return limit_profile_from_distribution(dist, fi, fr)

    return build()


@given(random_profiles(), st.floats(0.1, 5), st.floats(0, 5))
@settings(max_examples=100, deadline=None)
def test_generating_function_identities(profile, beta, rho):
    fn = LimitFunctions(profile, EpidemicRates(beta, rho))
    th = np.linspace(0, 1, 1000)
    assert np.max(np.abs(fn.h_x(th) - fn.h_s(th) - fn.h_i(th) - fn.h_r(th))) <= 1e-12 * profile.mu
    assert np.max(np.abs(fn.h_s(th) - th * fn.dv_s(th))) <= 1e-10


def test_theta_inf_profile_b(profile_b, rates_b):
    assert abs(find_theta_infinity(profile_b, rates_b) - 0.5) <= 1e-12
    assert abs(final_size(profile_b, rates_b) - 0.125) <= 1e-12


def test_theta_inf_profile_a(profile_a, rates_a):
    assert abs(find_theta_infinity(profile_a, rates_a) - THETA_INF_A) <= 1e-9
    assert abs(final_size(profile_a, rates_a) - FINAL_SIZE_A) <= 1e-9


def test_no_major_outbreak_for_degree_one():
    prof = limit_profile_from_distribution(DegreeDistribution.regular(1))
    with pytest.raises(NoMajorOutbreak):
        find_theta_infinity(prof, EpidemicRates(1.0, 0.0))


def test_d7_failure_is_a_solver_error():
    prof = limit_profile_from_distribution(DegreeDistribution.regular(2), frac_i=0.1)
    with pytest.raises(SolverError, match="D7"):
        find_theta_infinity(prof, EpidemicRates(1.0, 0.0))


def test_isolated_vertices_all_escape():
    prof = LimitProfile(alpha_s=0.5, alpha_i=0.5, alpha_r=0.0, ks=[0], ps=[1.0], mu=1.0, mu_i=1.0, mu_r=0.0)
    assert final_size(prof, EpidemicRates(1.0, 1.0)) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("name", ["a", "b", "poisson"])
def test_root_sign_structure(name, request):
    prof = request.getfixturevalue(f"profile_{name}")
    rates = request.getfixturevalue(f"rates_{'a' if name == 'a' else name}")
    th_inf = find_theta_infinity(prof, rates)
    fn = LimitFunctions(prof, rates)
    th = np.linspace(0, 1, 1002)[1:-1]
    h = fn.h_i(th)
    assert np.all(h[th < th_inf - 1e-9] < 0)
    assert np.all(h[th > th_inf + 1e-9] > 0)


def test_invert_v_s_examples(profile_b, rates_b):
    assert abs(invert_v_s(profile_b, 0.5, rates_b) - 0.5 ** (1 / 3)) <= 1e-12
    assert abs(invert_v_s(profile_b, 0.5) - 0.5 ** (1 / 3)) <= 1e-12
    with pytest.raises(ConfigError):
        invert_v_s(profile_b, 1.0, rates_b)
    with pytest.raises(ConfigError):
        invert_v_s(profile_b, 0.125, rates_b)


def test_major_mode_start(profile_a, rates_a):
    path = solve_theta(profile_a, rates_a)
    assert path.theta[0] == 1.0 and path.t[0] == 0.0
    assert abs(path.dtheta_at(0.0) - (-0.1)) <= 1e-12
    assert abs(path.functions.dtheta_dt(1.0) + 0.1) <= 1e-15


def test_shifted_mode_start(profile_b, rates_b):
    path = solve_theta(profile_b, rates_b, "shifted", s0=0.9)
    assert abs(path.theta0 - 0.9 ** (1 / 3)) <= 1e-12
    assert abs(path.theta_at(0.0) - 0.9 ** (1 / 3)) <= 1e-10
    assert path.t_start < 0 < path.t_end
    assert abs(path.theta[-1] - 0.5) <= 2e-8
    assert 1 - path.theta[0] <= 2e-8


def test_shifted_default_threshold(profile_b, rates_b):
    path = solve_theta(profile_b, rates_b, "shifted")
    assert path.s0 == pytest.approx(0.99)


def test_mode_preconditions(profile_a, profile_b, rates_a, rates_b):
    with pytest.raises(SolverError):
        solve_theta(profile_b, rates_b, "major")
    with pytest.raises(SolverError):
        solve_theta(profile_a, rates_a, "shifted", s0=0.5)
    with pytest.raises(ConfigError):
        solve_theta(profile_a, rates_a, "sideways")


BUNDLED = [("a", "major", None), ("b", "shifted", 0.9), ("b_small", "major", None), ("poisson", "major", None)]


def _setup(request, name):
    prof = request.getfixturevalue(f"profile_{name}")
    rates = request.getfixturevalue("rates_b" if name.startswith("b") else f"rates_{name}")
    return prof, rates


@pytest.mark.parametrize("name,mode,s0", BUNDLED)
def test_path_shape_and_limit(name, mode, s0, request):
    prof, rates = _setup(request, name)
    path = solve_theta(prof, rates, mode, s0=s0)
    assert np.all(np.diff(path.theta) < 0)
    assert np.all(path.theta > path.theta_inf) and np.all(path.theta <= 1)
    assert path.theta[-1] - path.theta_inf <= 1e-8 * (1 + 1e-6)
    assert path.theta_inf == find_theta_infinity(prof, rates)


@pytest.mark.parametrize("name,mode,s0", BUNDLED)
def test_ode_self_consistency(name, mode, s0, request):
    prof, rates = _setup(request, name)
    rel_tol = 1e-9
    path = solve_theta(prof, rates, mode, s0=s0, rel_tol=rel_tol, dt=0.005)
    t = np.concatenate([path.t, 0.5 * (path.t[1:] + path.t[:-1])])
    res = np.abs(path.dtheta_at(t) + rates.beta * path.theta_at(t) * path.functions.p_i(path.theta_at(t)))
    assert res.max() <= 10 * rel_tol * rates.beta


@pytest.mark.parametrize("name,mode,s0", BUNDLED)
@pytest.mark.parametrize("rel_tol", [1e-7, 1e-9])
def test_tolerance_refinement(name, mode, s0, rel_tol, request):
    prof, rates = _setup(request, name)
    a = solve_theta(prof, rates, mode, s0=s0, rel_tol=rel_tol)
    b = solve_theta(prof, rates, mode, s0=s0, rel_tol=rel_tol / 2)
    t = a.t[(a.t >= b.t_start) & (a.t <= b.t_end)]
    assert np.max(np.abs(a.theta_at(t) - b.theta_at(t))) <= 10 * rel_tol


def test_fixed_horizon(profile_a, rates_a):
    path = solve_theta(profile_a, rates_a, t_span=(None, 15.0))
    assert path.t_end == 15.0
    ref = solve_theta(profile_a, rates_a)
    t = np.linspace(0, 15, 301)
    assert np.max(np.abs(path.theta_at(t) - ref.theta_at(t))) <= 1e-8


@pytest.mark.parametrize("name,mode,s0", BUNDLED)
def test_v_paths_properties(name, mode, s0, request):
    prof, rates = _setup(request, name)
    path = solve_theta(prof, rates, mode, s0=s0)
    vp = solve_v_paths(path, prof, rates)
    assert np.max(np.abs(vp.v_s + vp.v_i + vp.v_r - 1)) <= 1e-10
    assert vp.v_i.min() >= -1e-10
    assert np.all(np.diff(vp.v_r) >= -1e-12)
    if mode == "major":
        assert vp.v_i[0] == prof.alpha_i
        assert abs(vp.v_r[0] - prof.alpha_r) <= 1e-12


def test_v_paths_profile_a_long_run(profile_a, rates_a):
    path = solve_theta(profile_a, rates_a)
    vp = solve_v_paths(path, profile_a, rates_a)
    assert abs(vp.v_s[-1] - FINAL_SIZE_A) <= 1e-7
    assert vp.v_i_at(200.0) <= 1e-12
    assert vp.v_i[-1] < 1e-6


def test_v_r_constant_without_recovery():
    prof = limit_profile_from_distribution(DegreeDistribution.from_mapping({1: 0.3, 3: 0.7}), 0.05, 0.1)
    rates = EpidemicRates(1.0, 0.0)
    vp = solve_v_paths(solve_theta(prof, rates), prof, rates)
    assert np.max(np.abs(vp.v_r - prof.alpha_r)) <= 1e-10


def test_curves_and_csv(profile_a, rates_a):
    path = solve_theta(profile_a, rates_a)
    vp = solve_v_paths(path, profile_a, rates_a)
    curves = LimitCurves(path, vp)
    v = curves.evaluate(np.array([0.0]))
    assert v["S"][0] == pytest.approx(0.9) and v["I"][0] == pytest.approx(0.1)
    assert v["X"][0] == pytest.approx(3.0) and v["X_I"][0] == pytest.approx(0.3)
    csv = paths_to_csv(vp)
    lines = csv.splitlines()
    assert lines[0] == "t,theta,v_S,v_I,v_R,h_S,h_I,h_R,h_X"
    assert len(lines) == path.t.size + 1
    assert paths_to_csv(solve_v_paths(solve_theta(profile_a, rates_a), profile_a, rates_a)) == csv
