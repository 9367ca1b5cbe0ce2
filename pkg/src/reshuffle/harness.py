"""Multi-seed experiments, method comparisons and the validation suite.

Every check produces a :class:`Check` with the measured value next to its
threshold; failures are collected rather than raised so a single report
shows the whole picture.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence

import numpy as np

from . import defaults as D
from .averaging import StreamingAverage, suffix_from_snapshots, suffix_start
from .birr import birr_csv_columns, birr_exponent_check, birr_on_grid, birr_run
from .engine import DivergenceError, RunConfig, StepsizeSchedule, run
from .oracles import (
    M_gamma, M_sigma, I_qk, decomposition_ratio, limit_vector, permutation_mean_v, theta_star, v_of_sigma,
    zeta_stepsize_sum,
)
from .problems import FiniteSumProblem
from .rates import RateFit, fit_rate, log_grid
from .sampling import MAX_ENUMERATION

log = logging.getLogger(__name__)


@dataclass
class Check:
    passed: bool
    measured: Any
    threshold: Any
    note: str = ""

    def to_dict(self) -> dict:
        return {"passed": bool(self.passed), "measured": _jsonable(self.measured),
                "threshold": _jsonable(self.threshold), "note": self.note}


@dataclass
class MethodSummary:
    k: list
    median: list
    p10: list
    p90: list
    fit: Optional[RateFit]
    seed_slopes: list
    median_seed_slope: float
    final_dist: list
    diverged: list
    csv: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k, "median": self.median, "p10": self.p10, "p90": self.p90,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "seed_slopes": self.seed_slopes, "median_seed_slope": self.median_seed_slope,
            "final_dist": self.final_dist, "diverged": self.diverged, "csv": self.csv,
        }


@dataclass
class ExperimentReport:
    methods: Dict[str, MethodSummary] = field(default_factory=dict)
    checks: Dict[str, Check] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "version": D.VERSION,
            "meta": _jsonable(self.meta),
            "passed": self.passed,
            "checks": {name: c.to_dict() for name, c in self.checks.items()},
            "methods": {name: _jsonable(m.to_dict()) for name, m in self.methods.items()},
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def step_scale(name: str, problem: FiniteSumProblem) -> float:
    if name in D.FIXTURE_R:
        return D.FIXTURE_R[name]
    return 1.0 / max(c.gradient_lipschitz for c in problem.components)


def default_window(K: int) -> tuple:
    return (min(D.FIT_WINDOW[0], max(1, K // 100)), K)


def _safe_slope(k, values) -> float:
    try:
        return fit_rate(k, values).slope
    except ValueError:
        return math.nan


# --- method comparison -------------------------------------------------------

def _averaged_gaps(problem, config, grid, csv_path=None):
    """Suffix-averaged f-gap on ``grid`` (BIRR: output f-gap) and the final distance."""
    q = config.q
    if config.method == "BIRR":
        results = birr_on_grid(problem, config, grid)
        traj = results[-1].trajectory
        gaps = np.array([r.output_gap for r in results])
        final = results[-1].output_dist
        extra = birr_csv_columns(results)
    else:
        traj = run(problem, config, extra_log=list(grid) + [suffix_start(q, k) for k in grid])
        avgs = np.array([np.atleast_1d(traj.suffix_average(q, k)) for k in grid])
        gaps = problem.objective_gap(avgs)
        final = float(traj.dist[-1])
        extra = None
    if csv_path is not None:
        traj.to_csv(csv_path, extra=extra)
    return gaps, final


def write_figure_csv(path, k, median, p10, p90) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "median", "p10", "p90"])
        for row in zip(k, median, p10, p90):
            w.writerow([str(int(row[0]))] + [format(float(v), ".17g") for v in row[1:]])


def compare_methods(problem: FiniteSumProblem, base: RunConfig, methods: Sequence[str], seeds: Sequence[int], *,
                    window: Optional[tuple] = None, csv_dir=None, slack: float = D.ENVELOPE_SLACK) -> ExperimentReport:
    """Run every method on every seed with a common schedule and K.

    Per method: median/p10/p90 of the suffix-averaged f-gap on a log grid,
    a rate fit of the median path and the median of per-seed slopes.
    Diverged runs are recorded and left out of the medians.
    """
    K = base.K
    window = window or default_window(K)
    grid = [int(k) for k in log_grid(max(2, window[0]), window[1]) if 2 <= k <= K]
    report = ExperimentReport(meta={"K": K, "q": base.q, "R": base.schedule.R, "s": base.schedule.s,
                                    "seeds": list(seeds), "window": list(window)})
    if csv_dir is not None:
        Path(csv_dir).mkdir(parents=True, exist_ok=True)
    for method in methods:
        method = method.upper()
        rows, finals, diverged, paths = [], [], [], []
        for seed in seeds:
            cfg = replace(base, method=method, seed=int(seed))
            path = None if csv_dir is None else Path(csv_dir) / f"{method.lower()}_seed{seed}.csv"
            try:
                gaps, final = _averaged_gaps(problem, cfg, grid, path)
            except DivergenceError as exc:
                log.warning("%s seed %s diverged at cycle %s", method, seed, exc.cycle)
                diverged.append(int(seed))
                continue
            rows.append(gaps)
            finals.append(final)
            if path is not None:
                paths.append(str(path))
        if rows:
            G = np.array(rows)
            p10, med, p90 = np.percentile(G, [10, 50, 90], axis=0)
            slopes = [_safe_slope(grid, g) for g in G]
            try:
                fit = fit_rate(grid, med)
            except ValueError as exc:
                log.warning("no rate fit for %s: %s", method, exc)
                fit = None
            med_slope = float(np.nanmedian(slopes)) if not all(map(math.isnan, slopes)) else math.nan
        else:
            p10 = med = p90 = np.full(len(grid), np.nan)
            slopes, fit, med_slope = [], None, math.nan
        summary = MethodSummary(grid, med.tolist(), p10.tolist(), p90.tolist(), fit, slopes, med_slope, finals,
                                diverged, paths)
        report.methods[method] = summary
        if csv_dir is not None and rows:
            fig = Path(csv_dir) / f"{method.lower()}_fgap.csv"
            write_figure_csv(fig, grid, med, p10, p90)
            summary.csv.append(str(fig))
        if diverged:
            report.checks[f"{method.lower()}_no_divergence"] = Check(False, diverged, [], "diverged seeds")

    _comparison_checks(problem, base, report, slack)
    return report


def _comparison_checks(problem, base, report, slack) -> None:
    M = report.methods
    s, R, K = base.schedule.s, base.schedule.R, base.K
    if "RR" in M and "SGD" in M:
        rr, sgd = M["RR"], M["SGD"]
        report.checks["rr_slope_below_sgd"] = Check(
            rr.median_seed_slope < sgd.median_seed_slope,
            {"rr": rr.median_seed_slope, "sgd": sgd.median_seed_slope}, "rr < sgd")
        report.checks["rr_gap_below_sgd_at_K"] = Check(
            rr.median[-1] < sgd.median[-1], {"rr": rr.median[-1], "sgd": sgd.median[-1]}, "rr < sgd")
    if problem.m > MAX_ENUMERATION:
        return
    c = problem.constants().c
    if "IG" in M and M["IG"].final_dist:
        order = base.order or tuple(range(problem.m))
        bound = slack * R * M_sigma(problem, order) / c
        worst = max(M["IG"].final_dist) * K**s
        report.checks["ig_envelope"] = Check(worst <= bound, worst, bound, f"order {order}")
    if "RR" in M and M["RR"].final_dist:
        bound = slack * R * M_gamma(problem).value / c
        worst = max(M["RR"].final_dist) * K**s
        report.checks["rr_envelope"] = Check(worst <= bound, worst, bound)


# --- individual checks ------------------------------------------------

def check_permutation_mean(problem) -> Check:
    err = float(np.max(np.abs(permutation_mean_v(problem) - theta_star(problem))))
    return Check(err <= D.IDENTITY_ATOL, err, D.IDENTITY_ATOL)


def check_example1_values(problem) -> Check:
    v12, v21 = float(v_of_sigma(problem, (0, 1))[0]), float(v_of_sigma(problem, (1, 0))[0])
    mu = float(theta_star(problem)[0])
    return Check(v12 == 2.0 and v21 == -1.0 and mu == 0.5, {"(1,2)": v12, "(2,1)": v21, "mu_star": mu},
                 {"(1,2)": 2.0, "(2,1)": -1.0, "mu_star": 0.5})


def check_norm_bound(problem) -> Check:
    mg = M_gamma(problem).value
    bound = problem.constants().M_gamma_bound
    return Check(mg <= bound, mg, bound, "strict" if mg < bound else "equality")


def check_decomposition(problem, schedule, K=D.K_FINAL, seed=0) -> Check:
    traj = run(problem, RunConfig("RR", schedule, K=K, seed=seed, log_stride=K), dense=True)
    ratio = decomposition_ratio(traj)
    k = np.arange(K)
    lo, hi = D.DECOMPOSITION_WINDOW
    sel = (k >= lo) & (k <= min(hi, K))
    slope = fit_rate(k[sel], ratio[sel]).slope
    return Check(slope <= D.DECOMPOSITION_MAX_SLOPE, {"slope": slope, "max_ratio": float(ratio[sel].max())},
                 D.DECOMPOSITION_MAX_SLOPE)


def limit_deviation(problem, schedule, q, K, seeds, x0=None):
    """Median over seeds of ``||K^s (xbar_{q,K} - x*) - L||`` and ``||L||``."""
    L = limit_vector(problem, schedule, q)
    ell = suffix_start(q, K)
    devs = []
    for seed in seeds:
        cfg = RunConfig("RR", schedule, q=q, K=K, seed=int(seed), x0=x0, log_stride=K)
        traj = run(problem, cfg, extra_log=[ell])
        devs.append(np.linalg.norm(K**schedule.s * (traj.suffix_average(q, K) - problem.optimum) - L))
    return float(np.median(devs)), float(np.linalg.norm(L))


def check_limit(problem, R, grid, K, seeds) -> Check:
    measured, tol, ok = {}, {}, True
    for q, s in grid:
        dev, norm_L = limit_deviation(problem, StepsizeSchedule(R, s), q, K, seeds)
        key = f"q={q:g},s={s:g}"
        measured[key] = dev
        tol[key] = D.LIMIT_REL * norm_L + D.LIMIT_ABS
        ok &= dev <= tol[key]
    return Check(ok, measured, tol)


def check_separation(problem, R, K, seeds) -> Check:
    base = RunConfig("RR", StepsizeSchedule(R, D.S), q=D.SEPARATION_Q, K=K, log_stride=K)
    rep = compare_methods(problem, base, ["RR", "SGD"], seeds)
    rr, sgd = rep.methods["RR"].median_seed_slope, rep.methods["SGD"].median_seed_slope
    lo, hi = D.RR_GAP_SLOPE
    ok = lo <= rr <= hi and sgd >= D.SGD_GAP_SLOPE_MIN and rr < sgd
    measured = {"rr": rr, "sgd": sgd, "rr_median_path": _fit_slope(rep.methods["RR"].fit),
                "sgd_median_path": _fit_slope(rep.methods["SGD"].fit)}
    return Check(ok, measured, {"rr": [lo, hi], "sgd_min": D.SGD_GAP_SLOPE_MIN})


def _fit_slope(fit):
    return None if fit is None else fit.slope


def check_envelope(problem, R, K, seeds) -> Check:
    sch = StepsizeSchedule(R, D.S)
    c = problem.constants().c
    measured, bound, ok = {}, {}, True
    for order in [tuple(range(problem.m)), tuple(reversed(range(problem.m)))]:
        traj = run(problem, RunConfig("IG", sch, K=K, order=order, log_stride=K))
        key = "IG" + "".join(str(i + 1) for i in order)
        measured[key] = float(traj.dist[-1]) * K**D.S
        bound[key] = D.ENVELOPE_SLACK * R * M_sigma(problem, order) / c
        ok &= measured[key] <= bound[key]
    worst = max(float(run(problem, RunConfig("RR", sch, K=K, seed=int(sd), log_stride=K)).dist[-1])
                for sd in seeds) * K**D.S
    measured["RR"] = worst
    bound["RR"] = D.ENVELOPE_SLACK * R * M_gamma(problem).value / c
    ok &= worst <= bound["RR"]
    return Check(ok, measured, bound)


def check_birr(problem, R, seeds) -> Check:
    ec = birr_exponent_check(problem, StepsizeSchedule(R, D.S), D.BIRR_Q, D.BIRR_K_GRID, seeds)
    ok = (ec.median_slope <= D.BIRR_DIST_SLOPE_MAX and ec.median_gap_slope <= D.BIRR_GAP_SLOPE_MAX
          and ec.win_fraction >= D.BIRR_WIN_FRACTION)
    return Check(ok, {"dist_slope": ec.median_slope, "gap_slope": ec.median_gap_slope,
                      "rr_dist_slope": ec.rr_median_slope, "win_fraction": ec.win_fraction},
                 {"dist_slope": D.BIRR_DIST_SLOPE_MAX, "gap_slope": D.BIRR_GAP_SLOPE_MAX,
                  "win_fraction": D.BIRR_WIN_FRACTION})


def check_increment_decay(problem, R, K, seeds) -> Check:
    grid = [k for k in D.INCREMENT_K_GRID if k <= K]
    A, B = [], []
    for seed in seeds:
        traj = run(problem, RunConfig("RR", StepsizeSchedule(R, D.S), K=K, seed=int(seed), log_stride=K), dense=True)
        A.append([np.linalg.norm(I_qk(traj, 0.5, k)) * k for k in grid])
        B.append([np.linalg.norm(I_qk(traj, 1.0, k)) * k / math.log(k) for k in grid])
    sa = float(np.median([fit_rate(grid, a).slope for a in A]))
    sb = float(np.median([fit_rate(grid, b).slope for b in B]))
    ok = sa <= D.INCREMENT_MAX_SLOPE and sb <= D.INCREMENT_MAX_SLOPE
    return Check(ok, {"q=0.5": sa, "q=1": sb}, D.INCREMENT_MAX_SLOPE)


def check_averaging(cases=1000, seed=0) -> Check:
    rng = np.random.default_rng(seed)
    worst_stream, worst_suffix = 0.0, 0.0
    for _ in range(cases):
        k = int(rng.integers(2, 200))
        xs = rng.normal(size=k) * 10.0 ** rng.uniform(-3, 3)
        avg = StreamingAverage()
        means = [0.0]
        for v in xs:
            means.append(avg.update(v).mean)
        direct = math.fsum(xs) / k
        # relative to the magnitude of the data, so cancelling sums do not inflate it
        worst_stream = max(worst_stream, abs(means[-1] - direct) / max(abs(direct), float(np.abs(xs).mean())))
        ell = int(rng.integers(0, k))
        got = suffix_from_snapshots(means[k], means[ell], k, ell)
        worst_suffix = max(worst_suffix, abs(got - math.fsum(xs[ell:]) / (k - ell)) / max(1.0, np.abs(xs).max()))
    ok = worst_stream <= D.STREAMING_RTOL and worst_suffix <= D.SUFFIX_ATOL
    return Check(ok, {"streaming_rel": worst_stream, "suffix_scaled": worst_suffix},
                 {"streaming_rel": D.STREAMING_RTOL, "suffix_scaled": D.SUFFIX_ATOL})


def check_zeta(R=D.R, s=D.S, K=D.ZETA_K) -> Check:
    from scipy.special import zeta

    partial = zeta_stepsize_sum(StepsizeSchedule(R, s), K)
    target = R**2 * float(zeta(2 * s))
    rel = abs(partial - target) / target
    return Check(rel <= D.ZETA_RTOL, {"partial_sum": partial, "zeta": target, "rel": rel}, D.ZETA_RTOL)


def check_determinism(problem, R, K=2_000) -> Check:
    cfg = RunConfig("RR", StepsizeSchedule(R, D.S), q=0.5, K=K, seed=3, log_stride=100)
    a, b = run(problem, cfg), run(problem, cfg)
    same = np.array_equal(a.x, b.x) and np.array_equal(a.xbar, b.xbar)
    return Check(same, same, True)


def check_birr_bias_off(problem, R, K=2_000) -> Check:
    """BIRR without subtraction equals the RR q-suffix average bitwise."""
    sch = StepsizeSchedule(R, D.S)
    res = birr_run(problem, RunConfig("BIRR", sch, q=0.5, K=K, seed=5, log_stride=K), subtract_bias=False)
    traj = run(problem, RunConfig("RR", sch, q=0.5, K=K, seed=5, log_stride=K), extra_log=[suffix_start(0.5, K)])
    same = np.array_equal(res.output, np.atleast_1d(traj.suffix_average(0.5, K)))
    return Check(same, same, True)


def check_hessian_accumulator(problem, R, K=2_000) -> Check:
    res = birr_run(problem, RunConfig("BIRR", StepsizeSchedule(R, D.S), q=0.5, K=K, seed=1, log_stride=K))
    H = problem.hessian_at_optimum
    rel = float(np.max(np.abs(res.H_hat - H)) / np.max(np.abs(H)))
    return Check(rel <= D.IDENTITY_ATOL, rel, D.IDENTITY_ATOL)


def check_fit_scale_invariance() -> Check:
    k = log_grid(10, 10_000)
    y = 3.0 * k**-0.75 * (1 + 0.01 * np.sin(k))
    a, b = fit_rate(k, y).slope, fit_rate(k, 1e6 * y).slope
    return Check(abs(a - b) <= 1e-12, {"slope": a, "scaled_slope": b}, 1e-12)


# --- suite --------------------------------------------------------------------

def _guard(checks, name, fn, *args):
    try:
        checks[name] = fn(*args)
    except Exception as exc:  # collected, not fatal
        log.exception("check %s raised", name)
        checks[name] = Check(False, None, None, f"{type(exc).__name__}: {exc}")


def validation_suite(problems: Mapping[str, FiniteSumProblem], *, seeds: Sequence[int] = D.SEEDS, K: int = D.K_FINAL,
                  limit_grid=D.LIMIT_QS, sweep_s=D.LIMIT_SWEEP_S) -> ExperimentReport:
    """Evaluate the validation checks on named problems; an empty mapping gives an empty report.

    ``example1`` additionally gets its exact oracle values, the cycle-error
    decomposition, the RR/SGD rate separation, the IG/RR envelope and the
    increment-mean decay.
    """
    report = ExperimentReport(meta={"problems": list(problems), "seeds": list(seeds), "K": K,
                                    "limit_grid": [list(g) for g in limit_grid], "sweep_s": list(sweep_s)})
    if not problems:
        return report
    ch = report.checks
    for name, p in problems.items():
        R = step_scale(name, p)
        if p.m <= 7:
            _guard(ch, f"{name}.permutation_mean_identity", check_permutation_mean, p)
            _guard(ch, f"{name}.norm_bound", check_norm_bound, p)
        _guard(ch, f"{name}.limit", check_limit, p, R, limit_grid, K, seeds)
        _guard(ch, f"{name}.limit_s_sweep", check_limit, p, R, [(D.BIRR_Q, s) for s in sweep_s], K, seeds)
        _guard(ch, f"{name}.birr_acceleration", check_birr, p, R, seeds)
        _guard(ch, f"{name}.determinism", check_determinism, p, R)
        _guard(ch, f"{name}.birr_bias_off_matches_rr", check_birr_bias_off, p, R)
        if p.kind == "quadratic":
            _guard(ch, f"{name}.hessian_accumulator", check_hessian_accumulator, p, R)
        if name == "example1":
            sch = StepsizeSchedule(R, D.S)
            _guard(ch, "example1.v_values", check_example1_values, p)
            _guard(ch, "example1.decomposition_bounded", check_decomposition, p, sch, K)
            _guard(ch, "example1.rate_separation", check_separation, p, R, K, seeds)
            _guard(ch, "example1.error_envelope", check_envelope, p, R, K, seeds)
            _guard(ch, "example1.increment_mean_decay", check_increment_decay, p, R, K, seeds)
    _guard(ch, "averaging_identities", check_averaging)
    _guard(ch, "stepsize_square_sum", check_zeta)
    _guard(ch, "rate_fit_scale_invariance", check_fit_scale_invariance)
    return report
