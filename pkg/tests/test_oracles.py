import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reshuffle.averaging import suffix_stepsize_average
from reshuffle.birr import birr_run
from reshuffle.engine import RunConfig, StepsizeSchedule, run
from reshuffle.oracles import (
    BIAS_ESTIMATE_FACTOR, I_qk, M_gamma, M_sigma, Y_qk, a_q_s, bias, bias_estimate, decomposition_ratio,
    limit_vector, mu_star, oracle_report, permutation_mean_v, theory_constants, theta_star, v_of_orders, v_of_sigma,
    zeta_stepsize_sum,
)
from reshuffle.problems import QuadraticComponent, build_problem, make_quadratic_problem, make_smooth_problem
from reshuffle.rates import fit_rate
from reshuffle.sampling import enumerate_permutations

from _zeta import zeta_em


def _v_direct(problem, sigma):
    """Double sum written out index by index."""
    H, G = problem.hessians_at_optimum, problem.gradients_at_optimum
    v = np.zeros(problem.n)
    for i in range(problem.m):
        for ell in range(i):
            v -= H[sigma[i]] @ G[sigma[ell]]
    return v


def _consistent_problem():
    # every component is minimized at the same point, so all gradients vanish at x*
    x0 = np.array([1.0, -2.0])
    comps = [QuadraticComponent(P, P @ x0) for P in (np.eye(2), np.diag([2.0, 0.5]), [[1.0, 0.3], [0.3, 1.0]])]
    return build_problem(comps)


def test_example1_v_values(ex1):
    assert v_of_sigma(ex1, (0, 1)).tolist() == [2.0]
    assert v_of_sigma(ex1, (1, 0)).tolist() == [-1.0]
    assert mu_star(ex1).tolist() == [0.5]
    assert M_sigma(ex1, (0, 1)) == 2.0 and M_sigma(ex1, (1, 0)) == 1.0
    mg = M_gamma(ex1)
    assert mg.value == 2.0 and mg.exact


def test_single_component_zero():
    p = build_problem([QuadraticComponent([[2.0]], [1.0])])
    assert v_of_sigma(p, (0,)).tolist() == [0.0]
    assert M_gamma(p).value == 0.0 and mu_star(p).tolist() == [0.0]


def test_v_rejects_non_permutation(ex1):
    with pytest.raises(ValueError):
        v_of_sigma(ex1, (0, 0))


@pytest.mark.parametrize("fixture", ["quad7", "smooth1"])
def test_permutation_mean_identity(fixture, request):
    p = request.getfixturevalue(fixture)
    assert np.abs(permutation_mean_v(p) - theta_star(p)).max() <= 1e-12
    perms = enumerate_permutations(p.m)
    for sigma in perms[:: max(1, len(perms) // 10)]:
        np.testing.assert_allclose(v_of_sigma(p, sigma), _v_direct(p, sigma), atol=1e-13)


@settings(max_examples=30)
@given(n=st.integers(1, 4), m=st.integers(1, 6), seed=st.integers(0, 10**6))
def test_permutation_mean_property(n, m, seed):
    p = make_quadratic_problem(n, m, 1.0, seed=seed)
    mu = mu_star(p)
    assert np.abs(permutation_mean_v(p) - mu).max() <= 1e-12 * max(1.0, np.abs(mu).max())
    mg = M_gamma(p)
    assert mg.value <= p.constants().M_gamma_bound * (1 + 1e-12)


def test_vectorized_orders_match(quad7):
    perms = np.array(enumerate_permutations(5))
    V = v_of_orders(quad7, perms, chunk=17)
    for sigma, v in zip(perms, V):
        np.testing.assert_allclose(v, v_of_sigma(quad7, sigma), rtol=1e-13, atol=1e-13)


def test_theta_equals_mu_on_quadratics(quad7):
    assert np.array_equal(theta_star(quad7), mu_star(quad7))
    with pytest.raises(ValueError):
        mu_star(make_smooth_problem(2, 3, seed=1))


def test_consistent_system_zero():
    p = _consistent_problem()
    np.testing.assert_allclose(theta_star(p), 0.0, atol=1e-14)
    np.testing.assert_allclose(bias(p, StepsizeSchedule(), 0.5, 100), 0.0, atol=1e-14)


def test_m_gamma_bound_flag():
    p = make_quadratic_problem(2, 9, seed=0)
    mg = M_gamma(p)
    assert not mg.exact and mg.value == p.constants().M_gamma_bound


def test_a_q_s_values():
    assert a_q_s(2.0, 0.75, 1.0) == -8.0
    assert a_q_s(1.0, 0.75, 0.5) == pytest.approx(-8 * (1 - 0.5**0.25), rel=1e-15)
    qs = np.linspace(0.001, 1, 2000)
    mags = np.abs([a_q_s(1.0, 0.6, q) for q in qs])
    # the suffix average shrinks toward the newest stepsizes as q -> 0
    assert np.all(np.diff(mags) > 0)
    for bad in [(1.0, 0.75, 0.0), (1.0, 1.0, 0.5), (0.0, 0.5, 0.5)]:
        with pytest.raises(ValueError):
            a_q_s(*bad)


@pytest.mark.parametrize("q,s", [(0.5, 0.75), (0.3, 0.6), (0.5, 0.9)])
def test_a_q_s_matches_numeric_limit(q, s):
    sch = StepsizeSchedule(1.0, s)
    k = 10**6
    assert suffix_stepsize_average(sch, q, k) * k**s == pytest.approx(-a_q_s(1.0, s, q), rel=1e-2)


def test_bias_values(ex1):
    sch = StepsizeSchedule(1.0, 0.75)
    assert bias(ex1, sch, 1.0, 1)[0] == pytest.approx(-1 / 6, rel=1e-15)
    k = 10**6
    np.testing.assert_allclose(bias(ex1, sch, 0.5, k) * k**0.75, limit_vector(ex1, sch, 0.5), rtol=1e-2)


def test_bias_estimate_at_optimum_equals_bias(quad7):
    sch = StepsizeSchedule(0.1, 0.75)
    abar = suffix_stepsize_average(sch, 0.5, 1000)
    inner = np.tile(quad7.optimum, (quad7.m + 1, 1))
    got = bias_estimate(quad7, inner, np.arange(quad7.m)[::-1], abar)
    np.testing.assert_allclose(got, bias(quad7, sch, 0.5, 1000), rtol=1e-12)
    assert BIAS_ESTIMATE_FACTOR == 0.5


def test_bias_estimate_error_is_second_order(ex1):
    # ||bhat - b|| / alpha_K^2 should not grow with K
    sch = StepsizeSchedule(1.0, 0.75)
    grid = [1000, 3162, 10000, 31623, 100000]
    ratios = []
    for seed in range(10):
        row = []
        for K in grid:
            res = birr_run(ex1, RunConfig("BIRR", sch, q=0.5, K=K, seed=seed, log_stride=K))
            err = np.linalg.norm(res.bias_estimate - bias(ex1, sch, 0.5, K))
            row.append(err / float(sch.alpha(K)) ** 2)
        ratios.append(row)
    assert fit_rate(grid, np.median(ratios, axis=0)).slope <= 0.05


def test_bias_estimate_needs_full_cycle(ex1):
    with pytest.raises(ValueError):
        bias_estimate(ex1, np.zeros((1, 1)), [0, 1], 0.1)


def test_Y_converges_to_mu(ex1):
    K = 100_000
    traj = run(ex1, RunConfig("RR", K=K, seed=0, log_stride=K), dense=True)
    mu = mu_star(ex1)
    assert np.linalg.norm(Y_qk(traj, 0.5, K) - mu) <= 0.05 * np.linalg.norm(mu) + 0.05


def test_Y_synthetic_and_trivial():
    alphas = StepsizeSchedule().alphas(50)
    mu = np.array([0.3, -1.0])
    dense = SimpleNamespace(E=alphas[:, None] * mu, alphas=alphas)
    np.testing.assert_allclose(Y_qk(SimpleNamespace(dense=dense), 0.5, 50), mu, rtol=1e-14)
    p = build_problem([QuadraticComponent([[1.0]], [1.0])])
    traj = run(p, RunConfig("RR", K=100), dense=True)
    assert Y_qk(traj, 1.0, 100).tolist() == [0.0]


def test_I_constant_iterates_and_dense_guard(ex1):
    alphas = StepsizeSchedule().alphas(20)
    dense = SimpleNamespace(x=np.ones((21, 2)), alphas=alphas)
    assert I_qk(SimpleNamespace(dense=dense), 0.5, 20).tolist() == [0.0, 0.0]
    traj = run(ex1, RunConfig("RR", K=10))
    with pytest.raises(ValueError):
        I_qk(traj, 0.5, 10)
    with pytest.raises(ValueError):
        decomposition_ratio(traj)


def test_zeta_sum_properties():
    assert zeta_stepsize_sum(StepsizeSchedule(3.0, 0.75), 1) == 9.0
    a = zeta_stepsize_sum(StepsizeSchedule(1.0, 0.75), 10_000)
    b = zeta_stepsize_sum(StepsizeSchedule(2.0, 0.75), 10_000)
    assert b == 4 * a
    with pytest.raises(ValueError):
        zeta_stepsize_sum(StepsizeSchedule(1.0, 0.5), 10)
    # partial sum plus the integral tail reproduces zeta(1.5)
    K = 10**6
    tail = K**-0.5 / 0.5 - 0.5 * K**-1.5
    assert zeta_stepsize_sum(StepsizeSchedule(1.0, 0.75), K) + tail == pytest.approx(zeta_em(1.5), rel=1e-9)


def test_oracle_report(ex1, quad7):
    rep = oracle_report(ex1)
    assert rep["mu_star"] == [0.5] and rep["M_gamma"] == 2.0
    assert rep["per_sigma"] == {"(1,2)": {"v": [2.0], "M_sigma": 2.0}, "(2,1)": {"v": [-1.0], "M_sigma": 1.0}}
    json.dumps(oracle_report(quad7))
    with pytest.raises(ValueError):
        oracle_report(make_quadratic_problem(1, 6))


def test_theory_constants(ex1):
    tc = theory_constants(ex1, StepsizeSchedule(1.0, 0.75), 1.0, K=1000)
    assert tc.M_sigma == {(0, 1): 2.0, (1, 0): 1.0}
    assert tc.a_q_s == -4.0 and tc.M_gamma == 2.0 and tc.M_gamma_exact
    assert tc.zeta_sum == zeta_stepsize_sum(StepsizeSchedule(1.0, 0.75), 1000)
