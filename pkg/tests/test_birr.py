import numpy as np
import pytest

from reshuffle.averaging import suffix_start
from reshuffle.birr import BirrState, birr_csv_columns, birr_exponent_check, birr_on_grid, birr_run
from reshuffle.engine import RunConfig, StepsizeSchedule, run
from reshuffle.problems import QuadraticComponent, build_problem

SCH = StepsizeSchedule(1.0, 0.75)


def _cfg(K, seed=0, q=0.5, schedule=SCH):
    return RunConfig("BIRR", schedule, q=q, K=K, seed=seed, log_stride=K)


def test_hessian_accumulator_equals_sum(quad7):
    res = birr_run(quad7, _cfg(3000, schedule=StepsizeSchedule(0.1, 0.75)))
    H = quad7.hessian_at_optimum
    assert np.abs(res.H_hat - H).max() <= 1e-12 * np.abs(H).max()


@pytest.mark.parametrize("q", [0.5, 1.0])
def test_without_subtraction_matches_rr_suffix(ex1, q):
    K = 4000
    res = birr_run(ex1, _cfg(K, seed=3, q=q), subtract_bias=False)
    traj = run(ex1, RunConfig("RR", SCH, q=q, K=K, seed=3, log_stride=K), extra_log=[suffix_start(q, K)])
    assert np.array_equal(res.output, traj.suffix_average(q, K))
    if q == 1.0:
        assert np.array_equal(res.output, traj.simple_average(K))


def test_deterministic(smooth1):
    a = birr_run(smooth1, _cfg(2000, seed=4, schedule=StepsizeSchedule(0.5, 0.75)))
    b = birr_run(smooth1, _cfg(2000, seed=4, schedule=StepsizeSchedule(0.5, 0.75)))
    assert np.array_equal(a.output, b.output) and np.array_equal(a.bias_estimate, b.bias_estimate)


def test_grid_matches_separate_runs(ex1):
    grid = [50, 200, 1000]
    together = birr_on_grid(ex1, _cfg(1000, seed=6), grid)
    for K, res in zip(grid, together):
        alone = birr_run(ex1, _cfg(K, seed=6))
        assert res.K == K
        assert np.array_equal(res.output, alone.output)
        assert np.array_equal(res.bias_estimate, alone.bias_estimate)
        assert res.alpha_bar_q == alone.alpha_bar_q


def test_bias_removal_helps(ex1):
    out, suffix = [], []
    for seed in range(20):
        res = birr_run(ex1, _cfg(100_000, seed=seed))
        out.append(res.output_dist)
        suffix.append(res.suffix_dist)
    assert np.median(out) <= 0.5 * np.median(suffix)


def test_zero_bias_problem_output_close_to_suffix():
    x0 = np.array([0.5, 1.0])
    p = build_problem([QuadraticComponent(P, P @ x0) for P in (np.eye(2), np.diag([2.0, 1.0]))])
    res = birr_run(p, _cfg(2000))
    assert res.bhat_norm <= 1e-12
    np.testing.assert_allclose(res.output, res.suffix_average, atol=1e-12)


def test_preconditions(ex1):
    with pytest.raises(ValueError):
        birr_run(ex1, RunConfig("RR", SCH, K=100))
    with pytest.raises(ValueError):
        birr_run(ex1, _cfg(100, schedule=StepsizeSchedule(1.0, 0.5)))
    with pytest.raises(ValueError):
        birr_run(ex1, _cfg(1))


def test_state_starts_empty_and_flags_singular():
    st = BirrState(2)
    assert not st.mu_hat.any() and not st.H_hat.any() and st.steps == 0
    st.accumulate(np.diag([1.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(np.linalg.LinAlgError):
        st.bias_estimate(0.1)


def test_exponent_check_example1(ex1):
    grid = [1000, 3162, 10000, 31623, 100000]
    ec = birr_exponent_check(ex1, SCH, 0.5, grid, range(20))
    assert ec.median_slope <= -0.85
    assert ec.median_gap_slope <= -1.7
    assert abs(ec.rr_median_slope + 0.75) <= 0.1
    assert ec.win_fraction >= 0.8
    d = ec.to_dict()
    assert len(d["per_seed_slopes"]) == 20 and d["K_grid"] == grid


def test_csv_columns(ex1):
    res = birr_on_grid(ex1, _cfg(500), [100, 500])
    cols = birr_csv_columns(res)
    assert set(cols) == {"bhat_norm", "output_dist"}
    assert cols["output_dist"][500] == res[1].output_dist
