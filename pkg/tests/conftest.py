"""Shared builders for the test suite.

Panels built here are deliberately small; anything statistically
demanding lives in test_acceptance.py with frozen seeds.
"""

import numpy as np
import pytest

from latentkrig import LocationSet, SpatioTemporalFrame


def grid_locations(p, metric="euclidean", span=1.0):
    """p sites on a jittered line in the unit square, deterministic."""
    rng = np.random.default_rng(1234 + p)
    coords = np.column_stack([
        np.linspace(-span, span, p),
        rng.uniform(-span, span, p),
    ])
    return LocationSet(ids=tuple(f"g{i:03d}" for i in range(p)),
                       coords=coords, distance_metric=metric)


def noise_frame(n, p, seed=0):
    rng = np.random.default_rng(seed)
    return SpatioTemporalFrame(locations=grid_locations(p),
                               obs=rng.standard_normal((n, p)))


def rank_k_frame(n, p, k, seed=0, noise=0.0):
    """Panel y = x a' (+ optional nugget) with known loadings, returned
    with its ground truth."""
    rng = np.random.default_rng(seed)
    locs = grid_locations(p)
    a = rng.uniform(-1.0, 1.0, size=(p, k))
    x = rng.standard_normal((n, k))
    xi = x @ a.T
    y = xi + noise * rng.standard_normal((n, p)) if noise else xi
    frame = SpatioTemporalFrame(locations=locs, obs=y)
    return frame, a, x, xi


@pytest.fixture
def rng():
    return np.random.default_rng(42)
