import itertools
from pathlib import Path

import numpy as np
import pytest

from polydec import DecoupledModel, build_sample_plan, polymap_from_terms

DATA = Path(__file__).parent / "data"

EXAMPLE1_TERMS = [
    (0, (3, 0), -3), (0, (2, 1), -9), (0, (1, 2), -27), (0, (0, 3), -15),
    (0, (2, 0), -8), (0, (1, 1), -8), (0, (0, 2), -20), (0, (1, 0), 3), (0, (0, 1), 9),
    (1, (3, 0), -7), (1, (2, 1), -6), (1, (1, 2), 6), (1, (0, 3), 7),
    (1, (2, 0), 10), (1, (1, 1), 16), (1, (0, 2), 10), (1, (0, 1), -3),
]
EXAMPLE1_W = [[0, 1, -2], [-1, 0, 1]]
EXAMPLE1_V = [[2, -1, 1], [1, 1, 2]]
# g1 = t^3 - 2t^2 - t, g2 = t^3 - 4t^2 + t, g3 = t^3 + 2t^2 - 2t
EXAMPLE1_C = [[-1, -2, 1], [1, -4, 1], [-2, 2, 1]]
EXAMPLE_POINTS = [[0, 0], [1, 0], [0, 1]]


@pytest.fixture
def ex1_f():
    return polymap_from_terms(2, 2, 3, EXAMPLE1_TERMS)


@pytest.fixture
def ex1_model():
    return DecoupledModel(EXAMPLE1_W, EXAMPLE1_V, EXAMPLE1_C)


@pytest.fixture
def ex1_plan():
    return build_sample_plan(EXAMPLE_POINTS, 2, 3)


def random_polymap(rng, m, n, d, density=0.7):
    from polydec.polymap import monomials

    terms = [
        (i, alpha, rng.standard_normal())
        for i in range(n)
        for alpha in monomials(m, d)
        if rng.random() < density
    ]
    return polymap_from_terms(m, n, d, terms)


def random_model(rng, m, n, r, d):
    return DecoupledModel(
        rng.standard_normal((n, r)),
        rng.standard_normal((m, r)),
        rng.standard_normal((r, d)),
    )


def brute_force_eval(f, u):
    """Term-by-term evaluation with Python loops."""
    out = [0.0] * f.n
    for (i, alpha), c in f.terms.items():
        term = c
        for uj, a in zip(u, alpha):
            for _ in range(a):
                term *= uj
        out[i] += term
    return np.array(out)


def loop_mode_product(T, M, n):
    """Mode-n product with explicit index loops."""
    shape = list(T.shape)
    shape[n] = M.shape[0]
    out = np.zeros(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        acc = 0.0
        for i in range(T.shape[n]):
            src = list(idx)
            src[n] = i
            acc += T[tuple(src)] * M[idx[n], i]
        out[idx] = acc
    return out
