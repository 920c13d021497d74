"""Boys function F_n(x) = int_0^1 t^(2n) exp(-x t^2) dt."""

import math

import numba as nb
import numpy as np

SERIES_LIMIT = 35.0


@nb.njit(cache=True)
def boys_into(nmax, x, out):
    """Fill ``out[0..nmax]`` with F_n(x).

    Below ``SERIES_LIMIT`` the top order comes from the convergent series and the
    lower orders from downward recursion; above it F_0 is asymptotic and the
    higher orders follow by upward recursion, which is stable at large x.
    """
    if x < SERIES_LIMIT:
        ex = math.exp(-x)
        # F_m(x) = exp(-x) sum_k (2x)^k / ((2m+1)(2m+3)...(2m+2k+1))
        term = 1.0 / (2 * nmax + 1)
        total = term
        k = 1
        while True:
            term *= 2.0 * x / (2 * nmax + 2 * k + 1)
            total += term
            if term < 1e-17 * total:
                break
            k += 1
        out[nmax] = ex * total
        for n in range(nmax, 0, -1):
            out[n - 1] = (2.0 * x * out[n] + ex) / (2 * n - 1)
    else:
        ex = math.exp(-x)
        out[0] = 0.5 * math.sqrt(math.pi / x)
        for n in range(nmax):
            out[n + 1] = ((2 * n + 1) * out[n] - ex) / (2.0 * x)


def boys(n: int, x: float) -> float:
    out = np.empty(n + 1)
    boys_into(n, float(x), out)
    return float(out[n])


def boys_array(nmax: int, x: float) -> np.ndarray:
    out = np.empty(nmax + 1)
    boys_into(nmax, float(x), out)
    return out
