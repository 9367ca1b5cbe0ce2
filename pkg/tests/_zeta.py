"""Euler-Maclaurin evaluation of the Riemann zeta function (any real s != 1)."""
from fractions import Fraction
from math import factorial

# B_2, B_4, ..., B_12
_BERNOULLI = [Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30), Fraction(5, 66),
              Fraction(-691, 2730)]


def zeta_em(s: float, N: int = 20) -> float:
    head = sum(n ** -s for n in range(1, N))
    tail = N ** (1 - s) / (s - 1) + 0.5 * N ** -s
    rising = s  # s (s+1) ... (s + 2j - 2)
    for j, b in enumerate(_BERNOULLI, start=1):
        tail += float(b) / factorial(2 * j) * rising * N ** (-s - 2 * j + 1)
        rising *= (s + 2 * j - 1) * (s + 2 * j)
    return head + tail
