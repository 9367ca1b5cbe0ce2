"""Streaming simple averages and q-suffix averages rebuilt from snapshots."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


@njit(cache=True)
def compensated_mean_step(mean, comp, value, count):
    """``mean <- mean + (value - mean) / count`` with Kahan compensation, in place.

    ``count`` is the number of values *including* ``value``.  This is the
    recurrence ``mean_{k+1} = k/(k+1) mean_k + value/(k+1)``.
    """
    inv = 1.0 / count
    for i in range(mean.shape[0]):
        y = (value[i] - mean[i]) * inv - comp[i]
        t = mean[i] + y
        comp[i] = (t - mean[i]) - y
        mean[i] = t


class StreamingAverage:
    """Running mean of vectors (or scalars) in O(n) memory."""

    def __init__(self, shape=()):
        self.scalar = shape == ()
        size = 1 if self.scalar else shape
        self.count = 0
        self._mean = np.zeros(size)
        self._comp = np.zeros(size)

    def update(self, value) -> "StreamingAverage":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        self.count += 1
        compensated_mean_step(self._mean, self._comp, v, float(self.count))
        return self

    @property
    def mean(self):
        return float(self._mean[0]) if self.scalar else self._mean.copy()

    def snapshot(self):
        return self.count, self.mean


def update_simple(avg: StreamingAverage, value) -> StreamingAverage:
    return avg.update(value)


def suffix_start(q: float, k: int) -> int:
    """First index ``floor((1-q) k)`` of the q-suffix window at cycle ``k``."""
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    return int(math.floor(round((1.0 - q) * k, 9)))


@dataclass(frozen=True)
class SuffixAverage:
    q: float
    value: np.ndarray
    snapshot_cycle: int


def suffix_from_snapshots(mean_full, mean_prefix, k: int, ell: int):
    """Mean of the window ``[ell, k-1]`` from the simple averages at ``k`` and ``ell``.

    ``(k * mean_full - ell * mean_prefix) / (k - ell)``.
    """
    if not 0 <= ell < k:
        raise ValueError(f"need 0 <= ell < k, got ell={ell}, k={k}")
    full = np.asarray(mean_full, dtype=float)
    prefix = np.asarray(mean_prefix, dtype=float)
    if ell == 0:
        out = full.copy()  # zero-count prefix: the suffix is the simple average itself
    else:
        out = (k * full - ell * prefix) / (k - ell)
    return float(out) if out.ndim == 0 else out


def suffix_average(q: float, k: int, mean_full, mean_prefix) -> SuffixAverage:
    ell = suffix_start(q, k)
    return SuffixAverage(q=q, value=np.atleast_1d(suffix_from_snapshots(mean_full, mean_prefix, k, ell)), snapshot_cycle=ell)


def suffix_stepsize_average(schedule, q: float, k: int) -> float:
    """Exact ``mean(alpha_j, j = floor((1-q)k) .. k-1)``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ell = suffix_start(q, k)
    j = np.arange(ell, k, dtype=float)
    return float(np.sum(schedule.R / (j + 1.0) ** schedule.s) / (k - ell))
