"""Bias-removed random reshuffling with suffix averaging (BIRR).

The RR pass keeps streaming simple averages of the outer iterates and the
stepsizes, snapshots them when the cycle counter reaches ``floor((1-q)K)``,
and accumulates ``Hhat`` and ``muhat`` along the inner iterates of the last
cycle.  The output is the q-suffix average minus the estimated bias.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .averaging import suffix_from_snapshots, suffix_start
from .engine import RunConfig, Trajectory, run
from .oracles import BIAS_ESTIMATE_FACTOR
from .problems import FiniteSumProblem
from .rates import RateFit, fit_rate


@dataclass
class BirrState:
    """Last-cycle accumulators ``muhat = sum H g`` and ``Hhat = sum H``."""

    n: int
    mu_hat: np.ndarray = None
    H_hat: np.ndarray = None
    steps: int = 0

    def __post_init__(self):
        self.mu_hat = np.zeros(self.n)
        self.H_hat = np.zeros((self.n, self.n))

    def accumulate(self, hessian: np.ndarray, gradient: np.ndarray) -> None:
        self.mu_hat = self.mu_hat + hessian @ gradient
        self.H_hat = self.H_hat + hessian
        self.steps += 1

    def bias_estimate(self, alpha_bar_q: float) -> np.ndarray:
        try:
            factor = linalg.cho_factor(self.H_hat)
        except linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("accumulated Hessian is not positive definite") from exc
        return -alpha_bar_q * linalg.cho_solve(factor, BIAS_ESTIMATE_FACTOR * self.mu_hat)


@dataclass
class BirrResult:
    K: int
    q: float
    output: np.ndarray
    suffix_average: np.ndarray
    bias_estimate: np.ndarray
    alpha_bar_q: float
    H_hat: np.ndarray
    output_dist: float
    suffix_dist: float
    output_gap: float
    suffix_gap: float
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def bhat_norm(self) -> float:
        return float(np.linalg.norm(self.bias_estimate))


def _check(config: RunConfig, K: int) -> None:
    if config.method != "BIRR":
        raise ValueError(f"BIRR requires method='BIRR', got {config.method!r}")
    if not 0.5 < config.schedule.s < 1:
        raise ValueError("BIRR requires s in (1/2, 1)")
    if K < 2:
        raise ValueError("BIRR requires K >= 2")


def _finish(problem, traj, q, K, subtract_bias) -> BirrResult:
    ell = suffix_start(q, K)
    xbar_q = np.atleast_1d(suffix_from_snapshots(traj.simple_average(K), traj.simple_average(ell), K, ell))
    abar_q = suffix_from_snapshots(traj.stepsize_average(K), traj.stepsize_average(ell), K, ell)
    inner, order = traj.captures[K - 1]
    state = BirrState(problem.n)
    for i, j in enumerate(order):
        comp = problem.components[int(j)]
        state.accumulate(comp.hessian(inner[i]), comp.gradient(inner[i]))
    bhat = state.bias_estimate(abar_q)
    out = xbar_q - bhat if subtract_bias else xbar_q.copy()
    xs = problem.optimum
    gaps = problem.objective_gap(np.vstack([out, xbar_q]))
    return BirrResult(
        K=K, q=q, output=out, suffix_average=xbar_q, bias_estimate=bhat, alpha_bar_q=float(abar_q),
        H_hat=state.H_hat, output_dist=float(np.linalg.norm(out - xs)),
        suffix_dist=float(np.linalg.norm(xbar_q - xs)), output_gap=float(gaps[0]), suffix_gap=float(gaps[1]),
        trajectory=traj,
    )


def birr_run(problem: FiniteSumProblem, config: RunConfig, *, subtract_bias: bool = True) -> BirrResult:
    """Bias-corrected output ``xbar_{q,K} - bhat_{q,K}`` with diagnostics."""
    K, q = config.K, config.q
    _check(config, K)
    traj = run(problem, config, extra_log=[suffix_start(q, K)], capture=[K - 1])
    return _finish(problem, traj, q, K, subtract_bias)


def birr_on_grid(problem: FiniteSumProblem, config: RunConfig, K_grid: Sequence[int], *, subtract_bias: bool = True):
    """BIRR outputs for every K in ``K_grid`` from one pass.

    Stepsizes and cycle orders do not depend on K, so each entry equals a
    separate :func:`birr_run` with that K.
    """
    K_grid = sorted(int(K) for K in K_grid)
    K_max, q = K_grid[-1], config.q
    for K in K_grid:
        _check(config, K)
    cfg = replace(config, K=K_max)
    extra = [suffix_start(q, K) for K in K_grid] + K_grid
    traj = run(problem, cfg, extra_log=extra, capture=[K - 1 for K in K_grid])
    return [_finish(problem, traj, q, K, subtract_bias) for K in K_grid]


def birr_csv_columns(results: Sequence[BirrResult]) -> dict:
    return {
        "bhat_norm": {r.K: r.bhat_norm for r in results},
        "output_dist": {r.K: r.output_dist for r in results},
    }


@dataclass
class ExponentCheck:
    K_grid: list
    seeds: list
    per_seed: list  # RateFit of the BIRR output distance
    per_seed_gap: list
    rr_per_seed: list  # RateFit of the plain suffix-average distance
    median_slope: float
    median_gap_slope: float
    rr_median_slope: float
    win_fraction: float  # share of seeds with BIRR closer than the suffix average at max K

    def to_dict(self) -> dict:
        return {
            "K_grid": list(self.K_grid),
            "seeds": list(self.seeds),
            "median_slope": self.median_slope,
            "median_gap_slope": self.median_gap_slope,
            "rr_median_slope": self.rr_median_slope,
            "win_fraction": self.win_fraction,
            "per_seed_slopes": [f.slope for f in self.per_seed],
            "rr_per_seed_slopes": [f.slope for f in self.rr_per_seed],
        }


def birr_exponent_check(problem: FiniteSumProblem, schedule, q: float, K_grid: Sequence[int], seeds: Sequence[int],
                        x0=None) -> ExponentCheck:
    """Per-seed log-log slopes of the BIRR error across ``K_grid``, with medians."""
    K_grid = sorted(int(K) for K in K_grid)
    fits, gap_fits, rr_fits, wins = [], [], [], 0
    for seed in seeds:
        cfg = RunConfig("BIRR", schedule, q=q, K=K_grid[-1], seed=int(seed), x0=x0, log_stride=K_grid[-1])
        res = birr_on_grid(problem, cfg, K_grid)
        fits.append(fit_rate(K_grid, [r.output_dist for r in res]))
        gap_fits.append(fit_rate(K_grid, [r.output_gap for r in res]))
        rr_fits.append(fit_rate(K_grid, [r.suffix_dist for r in res]))
        wins += res[-1].output_dist < res[-1].suffix_dist
    return ExponentCheck(
        K_grid=K_grid, seeds=list(seeds), per_seed=fits, per_seed_gap=gap_fits, rr_per_seed=rr_fits,
        median_slope=float(np.median([f.slope for f in fits])),
        median_gap_slope=float(np.median([f.slope for f in gap_fits])),
        rr_median_slope=float(np.median([f.slope for f in rr_fits])),
        win_fraction=wins / len(seeds),
    )
