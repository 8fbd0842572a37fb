import math

import numpy as np
import pytest

from irrsio.kernels import EllipticKernel, MatrixField
from irrsio.variational import (
    NodeProblem,
    extended_inequality_scan,
    functional_F,
    minimize_F,
    pointwise_inequality_test,
    project_simplex,
    prox_max_simplex,
    t_field,
    variation_derivative_check,
)
from irrsio.verify import minimizer_checks, two_node_oracle, two_node_problem


@pytest.fixture
def small(rng):
    kern = EllipticKernel(MatrixField(2))
    nodes = rng.uniform(0, 1, (12, 2))
    q = rng.uniform(0.05, 0.15, 12)
    k = np.zeros((12, 12, 2))
    for i in range(12):
        for j in range(12):
            if i != j:
                k[i, j] = kern.pairs(nodes[i:i + 1], nodes[j:j + 1])[0]
    return kern, NodeProblem.from_table(q, k, nodes), k


def test_F_at_one_by_loops(small):
    _, prob, k = small
    lam = 0.3
    q = prob.weights
    smooth = 0.0
    for i in range(len(q)):
        v = sum(k[i, j] * q[j] for j in range(len(q)) if j != i)
        smooth += float(v @ v) * q[i]
    F = functional_F(np.ones(len(q)), prob, lam=lam)
    assert F == pytest.approx(lam * prob.mass + smooth, rel=1e-12)
    assert functional_F(np.zeros(len(q)), prob, lam=lam) == 0.0
    with pytest.raises(ValueError):
        functional_F(-np.ones(len(q)), prob, lam=lam)


def test_single_node():
    prob = NodeProblem.from_table([0.4], np.zeros((1, 1, 2)))
    rep = minimize_F(prob, lam=0.1)
    assert rep.b[0] == pytest.approx(1.0) and rep.F_final == pytest.approx(0.1 * 0.4)
    # with one node T nu vanishes, so the pointwise quantity is -6 lam
    assert pointwise_inequality_test(rep, prob) == pytest.approx(-0.6)


def test_large_lambda_gives_flat_minimizer(small):
    _, prob, _ = small
    rep = minimize_F(prob, lam=1e6, budget=400)
    assert rep.sup_b == pytest.approx(1.0, abs=1e-6)
    assert rep.constraint_residual < 1e-12
    assert rep.F_final <= rep.F_init


def test_minimizer_beats_feasible_points(small, rng):
    _, prob, _ = small
    lam = 1e-2
    rep = minimize_F(prob, lam=lam, budget=1000)
    for _ in range(50):
        g = project_simplex(rng.uniform(0, 3, len(prob)), prob.weights, prob.mass)
        assert functional_F(g, prob, lam=lam) >= rep.F_final - 1e-12


def test_two_node_against_brute_force():
    prob = two_node_problem()
    for lam in (1e-3, 5e-2, 1.0):
        rep = minimize_F(prob, lam=lam, budget=4000)
        g, _ = two_node_oracle(prob, lam)
        assert np.max(np.abs(rep.b - g)) <= 1e-4
    assert all(c.passed for c in minimizer_checks())


def test_projection_is_obtuse(rng):
    q = rng.uniform(0.5, 2, 9)
    x = rng.normal(size=9)
    p = project_simplex(x, q, 3.0)
    assert np.all(p >= 0) and math.isclose(p @ q, 3.0, rel_tol=1e-12)
    for _ in range(30):
        y = project_simplex(rng.uniform(0, 2, 9), q, 3.0)
        assert (x - p) @ (y - p) <= 1e-10


def test_prox_beats_feasible_points(rng):
    q = rng.uniform(0.5, 2, 7)
    x = rng.normal(size=7)
    kappa = 0.4
    p = prox_max_simplex(x, q, 2.0, kappa)

    def obj(y):
        return 0.5 * np.sum((y - x) ** 2) + kappa * np.max(y)

    assert math.isclose(p @ q, 2.0, rel_tol=1e-12)
    for _ in range(200):
        y = project_simplex(p + 0.1 * rng.normal(size=7), q, 2.0)
        assert obj(y) >= obj(p) - 1e-12


def test_extended_scan_empty_and_probe(small):
    kern, prob, _ = small
    rep = minimize_F(prob, lam=0.1, budget=200)
    zero = type(rep)(**{**rep.__dict__, "b": np.zeros(len(prob))})
    assert extended_inequality_scan(zero, prob, kern, 0.1, [[5.0, 5.0]], 1.0, 1.0) == (0.0, 0.0)
    top, ratio = extended_inequality_scan(rep, prob, kern, 0.1, [[50.0, 50.0]], 1.0, 1.0)
    assert abs(top) < 1e-4 and ratio == pytest.approx(top / 1.1)


def test_whole_support_variation(small):
    kern, prob, _ = small
    b = np.ones(len(prob))
    # a ball holding every node leaves b_t = b, so only the max term grows
    d, g0 = variation_derivative_check(b, prob, kern, 0.2, (np.full(2, 0.5), 10.0))
    assert d == pytest.approx(0.2 * prob.mass, rel=1e-8)
    v = t_field(prob, b)
    assert g0 == pytest.approx(0.2 * prob.mass + np.sum(v * v, axis=1) @ prob.weights, rel=1e-12)
    with pytest.raises(ValueError):
        variation_derivative_check(b, prob, kern, 0.2, (np.full(2, 9.0), 0.1))
