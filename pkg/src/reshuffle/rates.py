"""Log-log power-law fits for empirical convergence exponents."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import stats

MIN_POINTS = 5
MIN_DECADES = 1.5


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    n_points: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def fit_rate(k, values, window: Optional[Tuple[float, float]] = None) -> RateFit:
    """Least-squares fit of ``log(value) = intercept + slope * log(k)``.

    Non-positive values inside the window are dropped with a warning.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(values, dtype=float)
    if k.shape != y.shape:
        raise ValueError("k and values must have the same shape")
    lo, hi = window if window is not None else (k.min(initial=np.inf), k.max(initial=-np.inf))
    sel = (k >= lo) & (k <= hi) & np.isfinite(y)
    bad = sel & (y <= 0)
    if bad.any():
        warnings.warn(f"dropping {int(bad.sum())} non-positive values from the fit window", RuntimeWarning)
        sel &= ~bad
    k, y = k[sel], y[sel]
    if k.size < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} positive points in the window, got {k.size}")
    if np.log10(k.max() / k.min()) < MIN_DECADES - 1e-9:
        raise ValueError(f"fit window spans fewer than {MIN_DECADES} decades")
    lk, ly = np.log(k), np.log(y)
    res = stats.linregress(lk, ly)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum((ly - res.intercept - res.slope * lk) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(res.slope), float(res.intercept), r2, (float(k.min()), float(k.max())), int(k.size))


def log_grid(k_min: int, k_max: int, per_decade: int = 10) -> np.ndarray:
    """Integer grid, geometrically spaced, including both ends."""
    n = max(2, int(round(np.log10(k_max / k_min) * per_decade)) + 1)
    return np.unique(np.round(np.geomspace(k_min, k_max, n)).astype(np.int64))
