import numpy as np
import pytest

from otmanifold import CouplingSpace, independence_point


@pytest.fixture(scope="session")
def synth85():
    """The 8x5 synthetic instance used across the experiment suite."""
    p = np.array([3.0, 3.0, 3.0, 4.0, 2.0, 2.0, 2.0, 1.0])
    q = np.array([4.0, 2.0, 6.0, 4.0, 4.0])
    C = np.array([
        [0, 0, 1.2, 2, 2],
        [2, 4, 4, 4, 0],
        [1, 0, 0, 0, 3],
        [0, 1, 2, 1, 3],
        [1, 1, 0, 1, 2],
        [2, 1, 2, 0.8, 3],
        [4, 0, 0, 1, 1],
        [0, 1, 0, 1, 3],
    ], dtype=float)
    return p, q, C


@pytest.fixture(scope="session")
def synth85_space(synth85):
    p, q, _ = synth85
    return CouplingSpace(p, q)


@pytest.fixture(scope="session")
def synth85_x0(synth85_space):
    return independence_point(synth85_space)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_space(rng, n, m, floor=1e-15):
    """Random coupled marginals with mass normalized to a random scale."""
    p = rng.uniform(0.5, 2.0, n)
    q = rng.uniform(0.5, 2.0, m)
    q *= p.sum() / q.sum()
    return CouplingSpace(p, q, positivity_floor=floor)


def random_point(rng, space):
    """Random interior point via scaling projection of a positive matrix.

    Projected tightly: tangency identities hold only up to the point's own
    marginal feasibility error.
    """
    from otmanifold import sinkhorn_knopp_project, validate_point

    M = rng.uniform(0.2, 1.8, space.shape)
    res = sinkhorn_knopp_project(space, M, eps=1e-13)
    return validate_point(space, res.plan)


def double_centered(rng, shape):
    """Independent tangent construction (zero row/col sums by centering)."""
    W = rng.standard_normal(shape)
    return W - W.mean(axis=1, keepdims=True) - W.mean(axis=0, keepdims=True) \
        + W.mean()
