"""Shared fixtures and dense oracles for the test suite."""

import numpy as np
import pytest

from dfop.model import InterpolationSet, build_initial_set, build_w_matrix


def dense_w(points, base):
    """Reference KKT coefficient matrix assembled from scratch."""
    points = np.asarray(points, dtype=float)
    base = np.asarray(base, dtype=float)
    m, n = points.shape
    y = points - base
    size = m + n + 1
    w = np.zeros((size, size))
    w[:m, :m] = 0.5 * (y @ y.T) ** 2
    w[:m, m] = 1.0
    w[m, :m] = 1.0
    w[:m, m + 1:] = y
    w[m + 1:, :m] = y.T
    return w


def dense_solve(points, base, r):
    """Reference coefficient solve: (lambda, c, g) against the dense system."""
    points = np.asarray(points, dtype=float)
    m, n = points.shape
    rhs = np.zeros(m + n + 1)
    rhs[:m] = r
    sol = np.linalg.solve(dense_w(points, base), rhs)
    return sol[:m], float(sol[m]), sol[m + 1:]


def random_set(rng, n, m, radius=1.0):
    """Interpolation set with a random center and well-spread points."""
    x0 = rng.normal(size=n)
    iset = build_initial_set(x0, radius, m)
    # jitter the regular pattern so tests see generic geometry
    jitter = 0.1 * radius * rng.normal(size=iset.points.shape)
    jitter[0] = 0.0
    iset.points = iset.points + jitter
    iset.values = rng.normal(size=m)
    iset.opt_index = int(np.argmin(iset.values))
    return iset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
