"""Finite-sum problems: components, optimum, analytic constants, generators.

Two structured component families are supported natively (and run through
the compiled kernels):

* :class:`QuadraticComponent`  ``f(x) = 1/2 x'Px - q'x + r``
* :class:`SoftplusRidgeComponent`  the quadratic plus ``eps * log(1 + exp(a'x))``

Arbitrary smooth components can be wrapped in :class:`SmoothComponent`; they
are solved and iterated with the pure-Python reference path.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import expit

SYM_TOL = 1e-12
PSD_TOL = 1e-10
# max |rho'''| for rho(t) = log(1 + e^t), attained where sigmoid(t) = (3 - sqrt 3) / 6
SOFTPLUS_THIRD_MAX = 1.0 / (6.0 * math.sqrt(3.0))

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
OPTIMALITY_TOL = 1e-10


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


def _check_curvature(P: np.ndarray) -> None:
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"curvature matrix must be square, got shape {P.shape}")
    scale = max(1.0, float(np.linalg.norm(P, 2)))
    if np.linalg.norm(P - P.T, 2) > SYM_TOL * scale:
        raise ValueError("curvature matrix is not symmetric")
    if np.linalg.eigvalsh(P).min() < -PSD_TOL:
        raise ValueError("curvature matrix is not positive semidefinite; components must be convex")


def softplus(t):
    return np.logaddexp(0.0, t)


@dataclass(frozen=True, eq=False)
class QuadraticComponent:
    """``f(x) = 1/2 x'Px - q'x + r`` with symmetric PSD ``P``."""

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P, 2))
        object.__setattr__(self, "q", _frozen(self.q, 1))
        object.__setattr__(self, "r", float(self.r))
        _check_curvature(self.P)
        if self.q.shape != (self.P.shape[0],):
            raise ValueError("linear term does not match curvature dimension")

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def gradient_lipschitz(self) -> float:
        return float(np.linalg.norm(self.P, 2))

    hessian_lipschitz = 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.P @ x - self.q @ x + self.r

    def gradient(self, x):
        return self.P @ np.asarray(x, dtype=float) - self.q

    def hessian(self, x=None):
        return self.P

    def evaluate(self, x):
        return self.value(x), self.gradient(x), self.P


@dataclass(frozen=True, eq=False)
class SoftplusRidgeComponent:
    """Quadratic plus a softplus ridge ``eps * log(1 + exp(a'x))``.

    Every derivative of the ridge is bounded, so the Hessian is Lipschitz
    with constant ``eps * |a|^3 / (6 sqrt 3)`` and the gradient is globally
    Lipschitz.
    """

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0
    eps: float = 0.0
    a: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P, 2))
        object.__setattr__(self, "q", _frozen(self.q, 1))
        a = np.zeros(self.P.shape[0]) if self.a is None else self.a
        object.__setattr__(self, "a", _frozen(a, 1))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "eps", float(self.eps))
        _check_curvature(self.P)
        if self.eps < 0:
            raise ValueError("ridge weight must be non-negative")
        if self.q.shape != (self.dim,) or self.a.shape != (self.dim,):
            raise ValueError("vector terms do not match curvature dimension")

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    @property
    def gradient_lipschitz(self) -> float:
        return float(np.linalg.norm(self.P, 2)) + 0.25 * self.eps * float(self.a @ self.a)

    @property
    def hessian_lipschitz(self) -> float:
        return self.eps * float(np.linalg.norm(self.a)) ** 3 * SOFTPLUS_THIRD_MAX

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x @ self.P @ x - self.q @ x + self.r + self.eps * softplus(self.a @ x)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.P @ x - self.q + self.eps * expit(self.a @ x) * self.a

    def hessian(self, x):
        s = expit(self.a @ np.asarray(x, dtype=float))
        return self.P + self.eps * s * (1.0 - s) * np.outer(self.a, self.a)

    def evaluate(self, x):
        return self.value(x), self.gradient(x), self.hessian(x)


@dataclass(frozen=True, eq=False)
class SmoothComponent:
    """A convex component given by ``evaluator(x) -> (value, gradient, hessian)``."""

    evaluator: Callable
    dim: int
    gradient_lipschitz: float
    hessian_lipschitz: float = 0.0

    def evaluate(self, x):
        v, g, H = self.evaluator(np.asarray(x, dtype=float))
        H = np.asarray(H, dtype=float)
        if np.abs(H - H.T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(H).max(initial=0.0)):
            raise ValueError("evaluator returned a non-symmetric Hessian")
        return float(v), np.asarray(g, dtype=float), H

    def value(self, x):
        return self.evaluate(x)[0]

    def gradient(self, x):
        return self.evaluate(x)[1]

    def hessian(self, x):
        return self.evaluate(x)[2]


Component = Union[QuadraticComponent, SoftplusRidgeComponent, SmoothComponent]


@dataclass(frozen=True)
class ProblemConstants:
    c: float
    L: float
    G_star: float
    U: float
    M_gamma_bound: float


@dataclass(frozen=True, eq=False)
class FiniteSumProblem:
    """``f = sum_i f_i`` with its solved optimum and analytic constants.

    Build with :func:`build_problem`; instances are read-only.
    """

    components: tuple
    optimum: np.ndarray
    hessian_at_optimum: np.ndarray
    strong_convexity: float
    sum_gradient_lipschitz: float
    grad_norm_bound: float
    hessian_lipschitz: float
    seed: Optional[int] = None
    _grads_star: np.ndarray = field(default=None, repr=False)
    _hess_star: np.ndarray = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return self.optimum.shape[0]

    @property
    def kind(self) -> str:
        if all(isinstance(c, QuadraticComponent) for c in self.components):
            return "quadratic"
        return "smooth"

    @property
    def is_structured(self) -> bool:
        """True when every component belongs to a family the compiled kernels handle."""
        return all(isinstance(c, (QuadraticComponent, SoftplusRidgeComponent)) for c in self.components)

    @property
    def gradients_at_optimum(self) -> np.ndarray:
        """(m, n) array of component gradients at the optimum."""
        return self._grads_star

    @property
    def hessians_at_optimum(self) -> np.ndarray:
        """(m, n, n) array of component Hessians at the optimum."""
        return self._hess_star

    def component_gradient(self, i: int, x) -> np.ndarray:
        if not 0 <= i < self.m:
            raise IndexError(f"component index {i} out of range for m={self.m}")
        return self.components[i].gradient(x)

    def value(self, x) -> float:
        return float(sum(c.value(x) for c in self.components))

    def gradient(self, x) -> np.ndarray:
        return sum(c.gradient(x) for c in self.components)

    def constants(self) -> ProblemConstants:
        return problem_constants(self)

    def stacked(self):
        """Arrays ``(P, q, eps, a)`` of shapes (m,n,n), (m,n), (m,), (m,n) for the kernels."""
        if not self.is_structured:
            raise TypeError("problem has generic smooth components; no stacked form")
        P = np.stack([c.P for c in self.components])
        q = np.stack([c.q for c in self.components])
        eps = np.array([getattr(c, "eps", 0.0) for c in self.components])
        a = np.stack([c.a if isinstance(c, SoftplusRidgeComponent) else np.zeros(self.n) for c in self.components])
        return P, q, eps, a

    def objective_gap(self, X) -> np.ndarray:
        """``f(x) - f(x*)`` for one point or a stack of points (rows).

        For the structured families the gap is expanded around the optimum so
        that tiny gaps are not lost to cancellation.
        """
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if not self.is_structured:
            fstar = self.value(self.optimum)
            out = np.array([self.value(x) - fstar for x in X])
            return out[0] if single else out
        P, q, eps, a = self.stacked()
        xs = self.optimum
        D = X - xs
        lin = np.einsum("ijk,k->j", P, xs) - q.sum(axis=0)
        out = D @ lin + 0.5 * np.einsum("pj,jk,pk->p", D, P.sum(axis=0), D)
        for e, ai in zip(eps, a):
            if e == 0.0:
                continue
            v = ai @ xs
            u = D @ ai
            small = np.abs(u) < 1.0
            diff = np.where(
                small,
                np.log1p(expit(v) * np.expm1(np.where(small, u, 0.0))),
                softplus(v + u) - softplus(v),
            )
            out = out + e * diff
        return out[0] if single else out


def solve_optimum(components: Sequence[Component]) -> np.ndarray:
    """Unique minimizer of the sum; exact solve for quadratics, damped Newton otherwise."""
    components = list(components)
    if not components:
        raise ValueError("at least one component is required")
    n = components[0].dim
    if any(c.dim != n for c in components):
        raise ValueError("components have mismatched dimensions")

    if all(isinstance(c, QuadraticComponent) for c in components):
        H = sum(c.P for c in components)
        b = sum(c.q for c in components)
        try:
            factor = linalg.cho_factor(H)
        except linalg.LinAlgError as exc:
            raise ValueError("sum of curvature matrices is singular; the sum is not strongly convex") from exc
        x = linalg.cho_solve(factor, b)
        # one step of iterative refinement
        x = x + linalg.cho_solve(factor, b - H @ x)
        return x
    return _newton(components, n)


def _newton(components, n: int) -> np.ndarray:
    def total(x):
        v, g, H = 0.0, np.zeros(n), np.zeros((n, n))
        for c in components:
            vi, gi, Hi = c.evaluate(x)
            v, g, H = v + vi, g + gi, H + Hi
        return v, g, H

    x = np.zeros(n)
    v, g, H = total(x)
    scale = max(1.0, float(np.linalg.norm(g)))
    for _ in range(NEWTON_MAX_ITER):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= NEWTON_TOL * scale:
            return x
        try:
            d = linalg.cho_solve(linalg.cho_factor(H), g)
        except linalg.LinAlgError as exc:
            raise ValueError("Hessian of the sum is singular; the sum is not strongly convex") from exc
        t = 1.0
        while True:
            x_new = x - t * d
            v_new, g_new, H_new = total(x_new)
            if v_new <= v - 1e-4 * t * (g @ d) or np.linalg.norm(g_new) < gnorm:
                break
            t *= 0.5
            if t < 1e-12:
                break
        if np.linalg.norm(g_new) >= gnorm and gnorm <= OPTIMALITY_TOL * scale:
            # rounding floor reached
            return x
        x, v, g, H = x_new, v_new, g_new, H_new
    if np.linalg.norm(g) <= OPTIMALITY_TOL * scale:
        return x
    raise RuntimeError(f"Newton did not converge in {NEWTON_MAX_ITER} iterations (|grad| = {np.linalg.norm(g):.3e})")


def build_problem(components: Sequence[Component], seed: Optional[int] = None) -> FiniteSumProblem:
    """Solve for the optimum and assemble an immutable :class:`FiniteSumProblem`."""
    components = tuple(components)
    xs = solve_optimum(components)
    grads = np.stack([c.gradient(xs) for c in components])
    hess = np.stack([c.hessian(xs) for c in components])
    Hs = hess.sum(axis=0)
    if all(isinstance(c, (QuadraticComponent, SoftplusRidgeComponent)) for c in components) and not all(
        isinstance(c, QuadraticComponent) for c in components
    ):
        # global certificate: the ridges only add curvature
        c_const = float(np.linalg.eigvalsh(sum(c.P for c in components)).min())
    else:
        c_const = float(np.linalg.eigvalsh(Hs).min())
    if c_const <= 0:
        raise ValueError(f"sum function is not strongly convex (c = {c_const:.3e})")
    for arr in (xs, grads, hess, Hs):
        arr.setflags(write=False)
    return FiniteSumProblem(
        components=components,
        optimum=xs,
        hessian_at_optimum=Hs,
        strong_convexity=c_const,
        sum_gradient_lipschitz=float(sum(c.gradient_lipschitz for c in components)),
        grad_norm_bound=float(np.linalg.norm(grads, axis=1).max()),
        hessian_lipschitz=float(sum(c.hessian_lipschitz for c in components)),
        seed=seed,
        _grads_star=grads,
        _hess_star=hess,
    )


def problem_constants(problem: FiniteSumProblem) -> ProblemConstants:
    L, G = problem.sum_gradient_lipschitz, problem.grad_norm_bound
    return ProblemConstants(
        c=problem.strong_convexity,
        L=L,
        G_star=G,
        U=problem.hessian_lipschitz,
        M_gamma_bound=L * problem.m * G,
    )


# ---------------------------------------------------------------- generators


def example1_problem() -> FiniteSumProblem:
    """f1 = (x-1)^2/2, f2 = (x+1)^2/2 + x^2/2 in one dimension; x* = 0."""
    return build_problem(
        [
            QuadraticComponent(P=[[1.0]], q=[1.0], r=0.5),
            QuadraticComponent(P=[[2.0]], q=[-1.0], r=0.5),
        ]
    )


def _random_quadratic_terms(rng, n, m, c_target):
    A = rng.standard_normal((m, n, n))
    P = np.einsum("ilj,ilk->ijk", A, A)
    P = P + (c_target / m) * np.eye(n)
    P = 0.5 * (P + np.transpose(P, (0, 2, 1)))
    q = rng.standard_normal((m, n))
    r = rng.standard_normal(m)
    return P, q, r


def make_quadratic_problem(n: int, m: int, c_target: float = 1.0, seed: int = 0) -> FiniteSumProblem:
    """Random problem with ``P_i = A_i'A_i + (c/m) I``, so ``sum P_i >= c I``."""
    if n < 1 or m < 1 or c_target <= 0:
        raise ValueError("need n >= 1, m >= 1, c_target > 0")
    rng = np.random.default_rng(seed)
    P, q, r = _random_quadratic_terms(rng, n, m, c_target)
    return build_problem([QuadraticComponent(P[i], q[i], r[i]) for i in range(m)], seed=seed)


def make_smooth_problem(
    n: int, m: int, c_target: float = 1.0, seed: int = 0, eps_scale: float = 1.0
) -> FiniteSumProblem:
    """Random quadratic-plus-softplus-ridge problem (Lipschitz Hessians)."""
    if n < 1 or m < 1 or c_target <= 0:
        raise ValueError("need n >= 1, m >= 1, c_target > 0")
    rng = np.random.default_rng(seed)
    P, q, r = _random_quadratic_terms(rng, n, m, c_target)
    eps = eps_scale * rng.uniform(0.5, 1.5, size=m)
    a = rng.standard_normal((m, n))
    comps = [SoftplusRidgeComponent(P[i], q[i], r[i], eps[i], a[i]) for i in range(m)]
    return build_problem(comps, seed=seed)


FIXTURES = {
    "example1": example1_problem,
    "quad7": lambda: make_quadratic_problem(n=5, m=5, c_target=1.0, seed=7),
    "smooth1": lambda: make_smooth_problem(n=2, m=4, c_target=1.0, seed=1),
}


def load_fixture(name: str) -> FiniteSumProblem:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise ValueError(f"unknown fixture {name!r}; known: {sorted(FIXTURES)}") from None


# ------------------------------------------------------------- serialization


def problem_to_dict(problem: FiniteSumProblem) -> dict:
    kind = problem.kind
    comps = []
    for c in problem.components:
        if isinstance(c, SmoothComponent):
            raise TypeError("generic smooth components cannot be serialized")
        entry = {"P": c.P.tolist(), "q": c.q.tolist(), "r": c.r}
        if kind == "smooth":
            entry["eps"] = getattr(c, "eps", 0.0)
            entry["a"] = (c.a if isinstance(c, SoftplusRidgeComponent) else np.zeros(problem.n)).tolist()
        comps.append(entry)
    return {"type": kind, "n": problem.n, "m": problem.m, "components": comps, "seed": problem.seed}


def problem_from_dict(doc: dict) -> FiniteSumProblem:
    if "fixture" in doc:
        return load_fixture(doc["fixture"])
    kind = doc.get("type", "quadratic")
    if kind == "quadratic":
        comps = [QuadraticComponent(c["P"], c["q"], c.get("r", 0.0)) for c in doc["components"]]
    elif kind == "smooth":
        comps = [
            SoftplusRidgeComponent(c["P"], c["q"], c.get("r", 0.0), c.get("eps", 0.0), c.get("a"))
            for c in doc["components"]
        ]
    else:
        raise ValueError(f"unknown problem type {kind!r}")
    if len(comps) != doc.get("m", len(comps)) or (comps and comps[0].dim != doc.get("n", comps[0].dim)):
        raise ValueError("declared n/m do not match the components")
    return build_problem(comps, seed=doc.get("seed"))


def save_problem(problem: FiniteSumProblem, path) -> None:
    # float repr is the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=1))


def load_problem(path_or_name) -> FiniteSumProblem:
    """Load a problem JSON file, or a fixture by name."""
    if isinstance(path_or_name, str) and path_or_name in FIXTURES:
        return load_fixture(path_or_name)
    return problem_from_dict(json.loads(Path(path_or_name).read_text()))
