"""Incremental gradient, random reshuffling and bias-removed suffix averaging
for finite-sum strongly convex problems, with exact theory oracles."""

from .averaging import StreamingAverage, suffix_from_snapshots, suffix_start, suffix_stepsize_average
from .birr import BirrResult, BirrState, birr_exponent_check, birr_on_grid, birr_run
from .engine import DivergenceError, RunConfig, StepsizeSchedule, Trajectory, cycle_gradient_error, run, run_cycle
from .harness import Check, ExperimentReport, compare_methods, validation_suite
from .oracles import (
    M_gamma, M_sigma, a_q_s, bias, bias_estimate, limit_vector, mu_star, oracle_report, permutation_mean_v,
    theta_star, v_of_sigma, zeta_stepsize_sum,
)
from .problems import (
    FiniteSumProblem, QuadraticComponent, SmoothComponent, SoftplusRidgeComponent, build_problem,
    example1_problem, load_fixture, load_problem, make_quadratic_problem, make_smooth_problem, save_problem,
)
from .rates import RateFit, fit_rate, log_grid
from .sampling import OrderSpec, cycle_orders, next_cycle_order

__version__ = "0.1.0"
