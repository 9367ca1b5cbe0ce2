"""Analytic quantities behind the convergence theory, plus brute-force checks.

Conventions: ``v(sigma) = -sum_i H_{sigma(i)} sum_{l<i} g_{sigma(l)}`` with
component Hessians ``H_j`` and gradients ``g_j`` taken at the optimum; its
mean over uniform permutations is ``theta* = 1/2 sum_j H_j g_j`` (``mu*`` for
quadratics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import linalg

from .averaging import suffix_start, suffix_stepsize_average
from .problems import FiniteSumProblem
from .sampling import MAX_ENUMERATION, enumerate_permutations, format_order

BRUTE_FORCE_MAX = 7
REPORT_MAX_M = 5
# sum_i H_i g_i at the optimum equals 2 theta*, so the per-cycle estimate is halved
BIAS_ESTIMATE_FACTOR = 0.5


def _solve_spd(H, b):
    return linalg.cho_solve(linalg.cho_factor(H), b)


def v_of_sigma(problem: FiniteSumProblem, sigma: Sequence[int]) -> np.ndarray:
    H, G = problem.hessians_at_optimum, problem.gradients_at_optimum
    if sorted(int(i) for i in sigma) != list(range(problem.m)):
        raise ValueError(f"{tuple(sigma)} is not a permutation of 0..{problem.m - 1}")
    v = np.zeros(problem.n)
    prefix = np.zeros(problem.n)
    for j in sigma:
        v -= H[j] @ prefix
        prefix = prefix + G[j]
    return v


def v_of_orders(problem: FiniteSumProblem, orders: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """``v(sigma_k)`` for every row of ``orders``; shape (K, n)."""
    H, G = problem.hessians_at_optimum, problem.gradients_at_optimum
    out = np.empty((len(orders), problem.n))
    for start in range(0, len(orders), chunk):
        o = orders[start:start + chunk]
        g = G[o]
        prefix = np.cumsum(g, axis=1) - g
        out[start:start + chunk] = -np.einsum("kijl,kil->kj", H[o], prefix)
    return out


def theta_star(problem: FiniteSumProblem) -> np.ndarray:
    H, G = problem.hessians_at_optimum, problem.gradients_at_optimum
    return 0.5 * np.einsum("ijk,ik->j", H, G)


def mu_star(problem: FiniteSumProblem) -> np.ndarray:
    if problem.kind != "quadratic":
        raise ValueError("mu* is defined for quadratic problems; use theta_star")
    return theta_star(problem)


def permutation_mean_v(problem: FiniteSumProblem) -> np.ndarray:
    """Exact mean of ``v(sigma)`` over all m! orders (m <= 7)."""
    if problem.m > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to m <= {BRUTE_FORCE_MAX}")
    perms = np.array(enumerate_permutations(problem.m), dtype=np.int64)
    return v_of_orders(problem, perms).mean(axis=0)


def M_sigma(problem: FiniteSumProblem, sigma: Sequence[int]) -> float:
    return float(np.linalg.norm(v_of_sigma(problem, sigma)))


class MGamma(NamedTuple):
    value: float
    exact: bool  # False when the L*m*G* bound is returned instead of the sup


def M_gamma(problem: FiniteSumProblem) -> MGamma:
    if problem.m > MAX_ENUMERATION:
        c = problem.constants()
        return MGamma(c.M_gamma_bound, False)
    perms = np.array(enumerate_permutations(problem.m), dtype=np.int64)
    return MGamma(float(np.linalg.norm(v_of_orders(problem, perms), axis=1).max()), True)


def a_q_s(R: float, s: float, q: float) -> float:
    """Limit of ``-k^s * mean(alpha_j over the q-suffix)``, negated.

    ``a_q(s) = -R (1 - (1-q)^(1-s)) / (q (1-s))``.
    """
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if not R > 0:
        raise ValueError("R must be positive")
    return -R * (1.0 - (1.0 - q) ** (1.0 - s)) / (q * (1.0 - s))


def limit_vector(problem: FiniteSumProblem, schedule, q: float) -> np.ndarray:
    """Almost-sure limit of ``k^s (xbar_{q,k} - x*)``: ``a_q(s) H*^{-1} theta*``."""
    return a_q_s(schedule.R, schedule.s, q) * _solve_spd(problem.hessian_at_optimum, theta_star(problem))


def bias(problem: FiniteSumProblem, schedule, q: float, k: int) -> np.ndarray:
    """Deterministic bias ``-abar_{q,k} H*^{-1} theta*``."""
    abar = suffix_stepsize_average(schedule, q, k)
    return -abar * _solve_spd(problem.hessian_at_optimum, theta_star(problem))


def bias_estimate(problem: FiniteSumProblem, inner_iterates, order, alpha_bar: float) -> np.ndarray:
    """Per-cycle bias estimate from the inner iterates of a single cycle.

    ``-alpha_bar * Hhat^{-1} * (1/2) sum_i H_{sigma(i)}(x_{i-1}) g_{sigma(i)}(x_{i-1})``
    with ``Hhat = sum_i H_{sigma(i)}(x_{i-1})``.
    """
    if len(inner_iterates) < problem.m:
        raise ValueError("need the inner iterates of one full cycle")
    H_hat = np.zeros((problem.n, problem.n))
    mu_hat = np.zeros(problem.n)
    for i, j in enumerate(order):
        comp = problem.components[int(j)]
        Hj = comp.hessian(inner_iterates[i])
        H_hat += Hj
        mu_hat += Hj @ comp.gradient(inner_iterates[i])
    try:
        factor = linalg.cho_factor(H_hat)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("estimated Hessian is singular") from exc
    return -alpha_bar * linalg.cho_solve(factor, BIAS_ESTIMATE_FACTOR * mu_hat)


def _dense(trajectory):
    if trajectory.dense is None:
        raise ValueError("trajectory has no dense per-cycle log; rerun with dense=True")
    return trajectory.dense


def Y_qk(trajectory, q: float, k: int) -> np.ndarray:
    """Suffix sum of cycle gradient errors over the suffix sum of stepsizes."""
    d = _dense(trajectory)
    ell = suffix_start(q, k)
    return d.E[ell:k].sum(axis=0) / d.alphas[ell:k].sum()


def I_qk(trajectory, q: float, k: int) -> np.ndarray:
    """Suffix mean of ``(x_0^j - x_0^{j+1}) / alpha_j``."""
    d = _dense(trajectory)
    ell = suffix_start(q, k)
    steps = (d.x[ell:k] - d.x[ell + 1:k + 1]) / d.alphas[ell:k, None]
    return steps.sum(axis=0) / (k - ell)


def decomposition_ratio(trajectory) -> np.ndarray:
    """``|E_k - alpha_k v(sigma_k)| / alpha_k^2`` for every cycle."""
    d = _dense(trajectory)
    v = v_of_orders(trajectory.problem, d.orders)
    return np.linalg.norm(d.E - d.alphas[:, None] * v, axis=1) / d.alphas**2


def zeta_stepsize_sum(schedule, K: int, chunk: int = 1 << 20) -> float:
    """Partial sum ``sum_{j<K} alpha_j^2`` (tends to ``R^2 zeta(2s)``)."""
    if schedule.s <= 0.5:
        raise ValueError(f"sum of squared stepsizes diverges for s = {schedule.s} <= 1/2")
    total = 0.0
    # smallest terms first
    for stop in range(K, 0, -chunk):
        j = np.arange(max(0, stop - chunk), stop, dtype=float)
        total += float(np.sum((schedule.R / (j + 1.0) ** schedule.s)[::-1] ** 2))
    return total


@dataclass(frozen=True)
class TheoryConstants:
    mu_star: np.ndarray
    theta_star: np.ndarray
    a_q_s: float
    M_sigma: Optional[dict]
    M_gamma: float
    M_gamma_exact: bool
    zeta_sum: float


def theory_constants(problem: FiniteSumProblem, schedule, q: float, K: int = 10**6) -> TheoryConstants:
    th = theta_star(problem)
    per_sigma = None
    if problem.m <= MAX_ENUMERATION:
        per_sigma = {p: M_sigma(problem, p) for p in enumerate_permutations(problem.m)}
    mg = M_gamma(problem)
    zs = zeta_stepsize_sum(schedule, K) if schedule.s > 0.5 else math.inf
    return TheoryConstants(th, th, a_q_s(schedule.R, schedule.s, q), per_sigma, mg.value, mg.exact, zs)


def oracle_report(problem: FiniteSumProblem) -> dict:
    """JSON-ready summary: ``mu_star``, ``M_gamma`` and per-order values (m <= 5)."""
    if problem.m > REPORT_MAX_M:
        raise ValueError(f"oracle report limited to m <= {REPORT_MAX_M}")
    per_sigma = {}
    for p in enumerate_permutations(problem.m):
        v = v_of_sigma(problem, p)
        per_sigma[format_order(p)] = {"v": v.tolist(), "M_sigma": float(np.linalg.norm(v))}
    return {
        "kind": problem.kind,
        "mu_star": theta_star(problem).tolist(),
        "M_gamma": M_gamma(problem).value,
        "per_sigma": per_sigma,
    }
