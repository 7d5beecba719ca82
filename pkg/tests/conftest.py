"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own quadrature and
nearest-point code: dense midpoint integration for one-dimensional
expectations, and a brute-force python nearest-point loop.
"""
import math

import numpy as np
import pytest

from quantquad.paths import Grid


def dense_integral(fn, a=0.0, b=1.0, n=2**19):
    """Midpoint-rule integral of a vectorized fn over [a, b]."""
    x = a + (np.arange(n) + 0.5) * (b - a) / n
    return float(np.mean(fn(x)) * (b - a))


def normal_expectation(fn, span=24.0, n=2**20):
    """Midpoint-rule E fn(Z) for Z ~ N(0,1) over [-span/2, span/2]."""
    h = span / n
    x = -span / 2 + (np.arange(n) + 0.5) * h
    w = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(np.sum(fn(x) * w) * h)


def brute_nearest(points, x):
    """Reference nearest-point search: plain loop, first minimum wins."""
    best, best_i = None, -1
    for i, p in enumerate(points):
        d = math.sqrt(float(np.sum((np.asarray(p) - np.asarray(x)) ** 2)))
        if best is None or d < best:
            best, best_i = d, i
    return best_i, best


@pytest.fixture(scope="session")
def grid():
    return Grid.uniform()
