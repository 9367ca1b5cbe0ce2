"""Inner/outer incremental-gradient loops for IG, RR and SGD."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .averaging import StreamingAverage, suffix_from_snapshots, suffix_start
from .problems import FiniteSumProblem
from .sampling import OrderSpec, next_cycle_order

METHODS = ("IG", "SGD", "RR", "BIRR")
ORDER_MODE = {"IG": "fixed", "RR": "reshuffle", "BIRR": "reshuffle", "SGD": "with_replacement"}
DIVERGENCE_FACTOR = 1e12
CSV_COLUMNS = ("k", "dist", "f_gap", "xbar_dist", "alpha_bar")


class DivergenceError(RuntimeError):
    def __init__(self, cycle: int, message: str = ""):
        self.cycle = cycle
        super().__init__(message or f"iterates diverged at cycle {cycle}")


@dataclass(frozen=True)
class StepsizeSchedule:
    """``alpha_k = R / (k+1)^s``."""

    R: float = 1.0
    s: float = 0.75

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be positive")
        if not 0 < self.s < 1:
            raise ValueError("s must lie in (0, 1)")

    def alpha(self, k):
        return self.R / (np.asarray(k, dtype=float) + 1.0) ** self.s

    def alphas(self, K: int) -> np.ndarray:
        return self.alpha(np.arange(K))


@dataclass(frozen=True)
class RunConfig:
    method: str = "RR"
    schedule: StepsizeSchedule = field(default_factory=StepsizeSchedule)
    q: float = 1.0
    K: int = 1000
    seed: int = 0
    x0: Optional[tuple] = None
    log_stride: int = 1
    order: Optional[tuple] = None  # fixed IG order, 0-based

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if self.K < 0:
            raise ValueError("K must be non-negative")
        if self.log_stride < 1:
            raise ValueError("log_stride must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        from .sampling import parse_order

        order = doc.get("order")
        if isinstance(order, str):
            order = parse_order(order)
        elif order is not None:
            order = tuple(int(i) - 1 for i in order)
        return cls(
            method=doc.get("method", "RR").upper(),
            schedule=StepsizeSchedule(float(doc.get("R", 1.0)), float(doc.get("s", 0.75))),
            q=float(doc.get("q", 1.0)),
            K=int(doc.get("K", 1000)),
            seed=int(doc.get("seed", 0)),
            x0=None if doc.get("x0") is None else tuple(doc["x0"]),
            log_stride=int(doc.get("log_stride", 1)),
            order=order,
        )

    def order_spec(self, m: int) -> OrderSpec:
        return OrderSpec(ORDER_MODE[self.method], m, self.seed, self.order if self.method == "IG" else None)

    def initial_point(self, n: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(n)
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (n,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")
        return x0


@dataclass
class DenseLog:
    """Per-cycle records; row ``k`` of ``x``/``xbar``/``alpha_bar`` is the state entering cycle k."""

    x: np.ndarray
    xbar: np.ndarray
    alpha_bar: np.ndarray
    E: np.ndarray
    orders: np.ndarray
    inner_max_dist: np.ndarray
    alphas: np.ndarray


@dataclass
class Trajectory:
    problem: FiniteSumProblem
    config: RunConfig
    k: np.ndarray
    x: np.ndarray
    xbar: np.ndarray
    alpha_bar: np.ndarray
    dense: Optional[DenseLog] = None
    captures: dict = field(default_factory=dict)

    def __post_init__(self):
        self._pos = {int(c): i for i, c in enumerate(self.k)}

    @property
    def dist(self) -> np.ndarray:
        return np.linalg.norm(self.x - self.problem.optimum, axis=1)

    @property
    def f_gap(self) -> np.ndarray:
        return self.problem.objective_gap(self.x)

    @property
    def xbar_dist(self) -> np.ndarray:
        d = np.linalg.norm(self.xbar - self.problem.optimum, axis=1)
        d[self.k == 0] = np.nan  # empty average
        return d

    @property
    def final(self) -> np.ndarray:
        return self.x[-1]

    @property
    def last_cycle(self):
        """``(inner_iterates, order)`` of cycle K-1."""
        return self.captures[self.config.K - 1]

    def _row(self, k: int) -> int:
        try:
            return self._pos[int(k)]
        except KeyError:
            raise KeyError(f"cycle {k} was not logged") from None

    def simple_average(self, k: int) -> np.ndarray:
        return self.xbar[self._row(k)]

    def stepsize_average(self, k: int) -> float:
        return float(self.alpha_bar[self._row(k)])

    def suffix_average(self, q: float, k: int) -> np.ndarray:
        ell = suffix_start(q, k)
        return suffix_from_snapshots(self.simple_average(k), self.simple_average(ell), k, ell)

    def suffix_stepsize_average(self, q: float, k: int) -> float:
        ell = suffix_start(q, k)
        return suffix_from_snapshots(self.stepsize_average(k), self.stepsize_average(ell), k, ell)

    def to_csv(self, path, extra: Optional[dict] = None) -> None:
        """Write ``k,dist,f_gap,xbar_dist,alpha_bar`` (+ extra columns) at 17 significant digits.

        ``extra`` maps column name to ``{k: value}``; missing cells are left empty.
        """
        extra = extra or {}
        cols = {"dist": self.dist, "f_gap": self.f_gap, "xbar_dist": self.xbar_dist, "alpha_bar": self.alpha_bar}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(CSV_COLUMNS) + list(extra))
            for i, k in enumerate(self.k):
                row = [str(int(k))] + [_fmt(cols[c][i]) for c in CSV_COLUMNS[1:]]
                row += [_fmt(extra[c].get(int(k), float("nan"))) for c in extra]
                w.writerow(row)


def _fmt(v) -> str:
    v = float(v)
    return "" if math.isnan(v) else format(v, ".17g")


def run_cycle(problem: FiniteSumProblem, x_in, order: Sequence[int], alpha: float):
    """One cycle of sequential component steps; returns ``(x_out, inner_iterates)``."""
    x = np.array(x_in, dtype=float)
    if len(order) != problem.m:
        raise ValueError(f"order has length {len(order)}, expected m={problem.m}")
    if alpha < 0:
        raise ValueError("stepsize must be non-negative")
    inner = [x.copy()]
    for j in order:
        x = x - alpha * problem.component_gradient(int(j), x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(-1, "non-finite inner iterate")
        inner.append(x.copy())
    return x, inner


def cycle_gradient_error(problem: FiniteSumProblem, x_start, inner_iterates, order) -> np.ndarray:
    """``sum_i grad f_{sigma(i)}(x_{i-1}) - grad f_{sigma(i)}(x_start)``."""
    E = np.zeros(problem.n)
    for i, j in enumerate(order):
        E += problem.component_gradient(int(j), inner_iterates[i]) - problem.component_gradient(int(j), x_start)
    return E


def log_schedule(K: int, stride: int, extra: Sequence[int] = ()) -> np.ndarray:
    cycles = set(range(0, K + 1, stride)) | {K} | {int(c) for c in extra if 0 <= c <= K}
    return np.array(sorted(cycles), dtype=np.int64)


def run(
    problem: FiniteSumProblem,
    config: RunConfig,
    *,
    extra_log: Sequence[int] = (),
    capture: Sequence[int] = (),
    dense: bool = False,
) -> Trajectory:
    """Execute ``config.K`` cycles and return the logged trajectory.

    ``extra_log`` adds cycles to the log (e.g. suffix-window starts),
    ``capture`` keeps the inner iterates and order of the given cycles (the
    last cycle is always captured), ``dense`` records every cycle.
    """
    K = config.K
    spec = config.order_spec(problem.m)
    x0 = config.initial_point(problem.n)
    log_cycles = log_schedule(K, config.log_stride, extra_log)
    cap = sorted({int(c) for c in capture if 0 <= c < K} | ({K - 1} if K > 0 else set()))
    if problem.is_structured:
        return _run_compiled(problem, config, spec, x0, log_cycles, np.array(cap, dtype=np.int64), dense)
    return _run_reference(problem, config, spec, x0, log_cycles, cap, dense)


def _run_compiled(problem, config, spec, x0, log_cycles, cap, dense):
    P, q, eps, a = problem.stacked()
    sch = config.schedule
    (status, x_log, xbar_log, abar_log, xd, xbard, abard, E, orders, inner_max, cap_inner, cap_orders) = (
        _kernels.run_kernel(
            P, q, eps, a, x0, np.asarray(problem.optimum, dtype=float), float(sch.R), float(sch.s),
            int(config.K), spec.code, spec.fixed_array(), spec.key, log_cycles, cap, bool(dense),
            DIVERGENCE_FACTOR,
        )
    )
    if status >= 0:
        raise DivergenceError(int(status))
    dense_log = None
    if dense:
        dense_log = DenseLog(xd, xbard, abard, E, orders, inner_max, sch.alphas(config.K))
    captures = {int(c): (cap_inner[i], cap_orders[i]) for i, c in enumerate(cap)}
    return Trajectory(problem, config, log_cycles, x_log, xbar_log, abar_log, dense_log, captures)


def _run_reference(problem, config, spec, x0, log_cycles, cap, dense):
    K, n, m = config.K, problem.n, problem.m
    sch = config.schedule
    xs = problem.optimum
    limit = DIVERGENCE_FACTOR * max(1.0, float(np.linalg.norm(x0 - xs)))
    logged = set(int(c) for c in log_cycles)
    cap_set = set(cap)
    x = x0.copy()
    xbar, abar = StreamingAverage((n,)), StreamingAverage()
    rows_x, rows_xbar, rows_abar = [], [], []
    dx, dxbar, dabar, dE, dorders, dinner = [], [], [], [], [], []
    captures = {}
    for k in range(K + 1):
        if k in logged:
            rows_x.append(x.copy())
            rows_xbar.append(xbar.mean)
            rows_abar.append(abar.mean)
        if dense:
            dx.append(x.copy())
            dxbar.append(xbar.mean)
            dabar.append(abar.mean)
        if k == K:
            break
        order = next_cycle_order(spec, k)
        alpha = float(sch.alpha(k))
        x_new, inner = run_cycle(problem, x, order, alpha)
        if dense:
            dE.append(cycle_gradient_error(problem, x, inner, order))
            dorders.append(order)
            dinner.append(max(np.linalg.norm(v - xs) for v in inner[:-1]))
        if k in cap_set:
            captures[k] = (np.array(inner), order)
        xbar.update(x)
        abar.update(alpha)
        x = x_new
        if not np.all(np.isfinite(x)) or np.linalg.norm(x - xs) > limit:
            raise DivergenceError(k)
    dense_log = None
    if dense:
        dense_log = DenseLog(
            np.array(dx), np.array(dxbar), np.array(dabar), np.array(dE).reshape(K, n),
            np.array(dorders, dtype=np.int64).reshape(K, m), np.array(dinner), sch.alphas(K),
        )
    return Trajectory(
        problem, config, log_cycles, np.array(rows_x), np.array(rows_xbar), np.array(rows_abar, dtype=float),
        dense_log, captures,
    )
