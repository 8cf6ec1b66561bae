import numpy as np
import pytest

from gammalab import (MarkovTriple, build_complete, build_cycle,
                      build_hypercube, build_ou_chain, build_two_point)


def scaled(tol, *quantities):
    """Tolerance relative to the magnitude of the quantities involved.

    Identities that are exact in real arithmetic accumulate roundoff
    proportional to the scale of the operands (rates on fine chains reach
    h^-4), so residual checks are anchored at max(1, |values|).
    """
    peak = 1.0
    for q in quantities:
        peak = max(peak, float(np.max(np.abs(q))))
    return tol * peak


def random_reversible_triple(rng, n, extra_edges=3):
    """Connected reversible triple with a non-uniform measure.

    Symmetric conductances on a random connected graph divided by a random
    measure give detailed balance by construction.
    """
    m = rng.uniform(0.2, 1.0, n)
    m = m / m.sum()
    W = np.zeros((n, n))
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):
        W[a, b] = W[b, a] = rng.uniform(0.5, 2.0)
    for _ in range(extra_edges):
        a, b = rng.integers(0, n, 2)
        if a != b:
            w = rng.uniform(0.5, 2.0)
            W[a, b] = W[b, a] = w
    L = W / m[:, None]
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return MarkovTriple(m, L)


@pytest.fixture(scope="session")
def two_point():
    return build_two_point(1.0)


@pytest.fixture(scope="session")
def ou200():
    return build_ou_chain(200, 6.0)


@pytest.fixture(scope="session")
def model_spaces():
    """The algebraic-core battery: exact identities hold on each of these."""
    return {
        "two_point": build_two_point(1.0),
        "cycle5": build_cycle(5),
        "complete4": build_complete(4),
        "hypercube3": build_hypercube(3),
        "ou200": build_ou_chain(200, 6.0),
    }
