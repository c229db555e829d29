"""Shared fixtures.

The heterogeneous logistic instance mirrors the experiment protocol:
synthetic data, a label-ascending contiguous split so each node sees
(almost) one class, and per-node standardization. A 15% label flip
keeps the shards in genuine conflict: without it every shard stays
separable after sorting, the per-node gradients all vanish at the
optimum, and nothing is ever clipped there. The start point is a
seeded gaussian; at the origin the per-shard feature centering makes
most local gradients vanish, which would leave the clipping paths
untested.
"""

import numpy as np
import pytest

from clipshift import Problem, estimate_f_inf, heterogeneous_split, standard_scale
from clipshift.data import Dataset
from clipshift.rng import gaussian_sample

LOGISTIC_SEED = 20240817
LOGISTIC_NODES = 10
LOGISTIC_DIM = 20
LOGISTIC_PER_NODE = 50


def make_logistic_problem() -> Problem:
    rng = np.random.default_rng(LOGISTIC_SEED)
    total = LOGISTIC_NODES * LOGISTIC_PER_NODE
    features = rng.standard_normal((total, LOGISTIC_DIM))
    w = rng.standard_normal(LOGISTIC_DIM)
    margins = features @ w + 0.5 * rng.standard_normal(total)
    labels = np.where(margins > np.median(margins), 1.0, -1.0)
    flipped = rng.choice(total, size=total * 15 // 100, replace=False)
    labels[flipped] = -labels[flipped]
    ds = Dataset(features, labels)
    shards = [standard_scale(s) for s in heterogeneous_split(ds, LOGISTIC_NODES)]
    return Problem("logistic", shards=shards, reg="l2", lam=1e-4)


@pytest.fixture(scope="session")
def logistic_problem():
    return make_logistic_problem()


@pytest.fixture(scope="session")
def logistic_x0(logistic_problem):
    return gaussian_sample(515, logistic_problem.n + 1, 0, logistic_problem.d, 1.0)


@pytest.fixture(scope="session")
def logistic_f_inf(logistic_problem, logistic_x0):
    value, is_estimate = estimate_f_inf(logistic_problem, logistic_x0, iters=100_000)
    assert is_estimate
    return value


@pytest.fixture(scope="session")
def quad_problem():
    return Problem("quad_counterexample")
