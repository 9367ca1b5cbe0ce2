"""Reproducible cycle orders for IG, RR and SGD.

Every random draw is a pure function of ``(seed, cycle, counter)``: a
SplitMix64 finalizer is applied to the seed, then the cycle index, then the
draw counter.  Any cycle's order can therefore be regenerated without
replaying the stream, and orders for different cycles are independent.
Indices are 0-based throughout the Python API.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
MAX_ENUMERATION = 8

FIXED, RESHUFFLE, WITH_REPLACEMENT = 0, 1, 2
MODES = {"fixed": FIXED, "reshuffle": RESHUFFLE, "with_replacement": WITH_REPLACEMENT}


@njit(cache=True)
def mix64(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def counter_u64(key, k, j):
    return mix64(mix64(key ^ np.uint64(k)) ^ np.uint64(j))


@njit(cache=True)
def uniform_below(key, k, j, n):
    """Unbiased integer in [0, n) by rejection; returns (value, next counter)."""
    un = np.uint64(n)
    thresh = (np.uint64(0) - un) % un
    while True:
        u = counter_u64(key, k, j)
        j += 1
        if u >= thresh:
            return np.int64(u % un), j


@njit(cache=True)
def fill_order(key, k, mode, fixed, out):
    m = out.shape[0]
    if mode == 0:
        for i in range(m):
            out[i] = fixed[i]
    elif mode == 1:
        # inside-out Fisher-Yates
        j = 0
        for i in range(m):
            r, j = uniform_below(key, k, j, i + 1)
            if r != i:
                out[i] = out[r]
            out[r] = i
    else:
        j = 0
        for i in range(m):
            r, j = uniform_below(key, k, j, m)
            out[i] = r


@njit(cache=True)
def fill_orders(key, k0, mode, fixed, out):
    for t in range(out.shape[0]):
        fill_order(key, k0 + t, mode, fixed, out[t])


def stream_key(seed: int) -> np.uint64:
    return np.uint64(mix64(np.uint64(int(seed) & MASK64)))


@dataclass(frozen=True)
class OrderSpec:
    """Sampling regime for the component order of each cycle."""

    mode: str
    m: int
    seed: int = 0
    sigma: Optional[tuple] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown order mode {self.mode!r}")
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.mode == "fixed":
            sigma = tuple(range(self.m)) if self.sigma is None else tuple(int(i) for i in self.sigma)
            if sorted(sigma) != list(range(self.m)):
                raise ValueError(f"fixed order {sigma} is not a permutation of 0..{self.m - 1}")
            object.__setattr__(self, "sigma", sigma)

    @property
    def code(self) -> int:
        return MODES[self.mode]

    @property
    def key(self) -> np.uint64:
        return stream_key(self.seed)

    def fixed_array(self) -> np.ndarray:
        if self.sigma is None:
            return np.arange(self.m, dtype=np.int64)
        return np.asarray(self.sigma, dtype=np.int64)


def next_cycle_order(spec: OrderSpec, k: int) -> np.ndarray:
    """Component order for cycle ``k`` (0-based indices)."""
    if k < 0:
        raise ValueError("cycle index must be non-negative")
    out = np.empty(spec.m, dtype=np.int64)
    fill_order(spec.key, np.int64(k), spec.code, spec.fixed_array(), out)
    return out


def cycle_orders(spec: OrderSpec, k0: int, count: int) -> np.ndarray:
    """Orders for cycles ``k0 .. k0+count-1`` as a (count, m) array."""
    if k0 < 0 or count < 0:
        raise ValueError("cycle range must be non-negative")
    out = np.empty((count, spec.m), dtype=np.int64)
    fill_orders(spec.key, np.int64(k0), spec.code, spec.fixed_array(), out)
    return out


def enumerate_permutations(m: int) -> list[tuple[int, ...]]:
    """All m! permutations of 0..m-1 in lexicographic order."""
    if m < 1:
        raise ValueError("m must be positive")
    if m > MAX_ENUMERATION:
        raise ValueError(f"refusing to enumerate {m}! permutations (limit m <= {MAX_ENUMERATION})")
    return list(itertools.permutations(range(m)))


def format_order(sigma: Sequence[int]) -> str:
    """1-based display form, e.g. (0, 1) -> '(1,2)'."""
    return "(" + ",".join(str(int(i) + 1) for i in sigma) + ")"


def parse_order(text: str) -> tuple[int, ...]:
    """Inverse of :func:`format_order`; accepts '(2,1)' or '2,1'."""
    body = text.strip().strip("()")
    return tuple(int(tok) - 1 for tok in body.split(",") if tok.strip())
