import math
from types import SimpleNamespace

import numpy as np
import pytest

from irrsio.kernels import EllipticKernel, MatrixField
from irrsio.measure import AtomicMeasure
from irrsio.vectorfield import (
    INNER,
    OUTER,
    BumpField,
    bump,
    contradiction_report,
    g_field,
    psi_field,
    reproducing_check,
    select_HD1,
)


def cube(center, r, members=(0,), cid=0):
    return SimpleNamespace(center=np.asarray(center, dtype=float), r=r, side_length=1.0,
                           members=np.array(members), id=cid)


def test_bump_values():
    b = bump(cube([0.0, 0.0], 0.01))
    assert b([[0.0, 0.0]])[0] == 1.0
    assert b([[INNER * 0.01, 0.0]])[0] == 1.0
    assert b([[3 * 28 * 0.01, 0.0]])[0] == 0.0
    mid = (INNER + OUTER) / 2 * 0.01
    assert b([[mid, 0.0]])[0] == pytest.approx(0.5, abs=1e-15)
    assert np.all(b.grad([[0.0, 0.0], [1.0, 0.0]]) == 0)


def test_bump_gradient_matches_difference(rng):
    b = BumpField(np.zeros(3), 1.0, 2.0, 1.0)
    x = np.array([1.3, 0.4, 0.2])
    h = 1e-6
    num = [(b(x + h * e)[0] - b(x - h * e)[0]) / (2 * h) for e in np.eye(3)]
    assert np.allclose(num, b.grad(x)[0], atol=1e-8)
    assert np.max(np.linalg.norm(b.grad(rng.uniform(-2, 2, (2000, 3))), axis=1)) <= b.gradient_bound


def test_g_is_gradient_for_identity():
    f = MatrixField(2)
    R = cube([0.0, 0.0], 0.01)
    g = g_field(f, R)
    assert np.array_equal(g.values, g.bump.grad(g.points))
    assert np.all(np.linalg.norm(g.points, axis=1) > INNER * 0.01)


def test_reproducing_near_and_far():
    f = MatrixField(2)
    kern = EllipticKernel(f)
    R = cube([0.0, 0.0], 0.01)
    g = g_field(f, R)
    assert reproducing_check(kern, g, [[0.0, 0.0]]) < 5e-2
    assert reproducing_check(kern, g, [[5.0, 5.0]]) < 1e-3
    empty = type(g)(g.bump, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), g.pitch)
    assert reproducing_check(kern, empty, [[0.0, 0.0]]) == 1.0
    with pytest.raises(ValueError):
        reproducing_check(kern, g, g.points[:1])


def test_select_HD1_disjoint_and_overlap():
    mu = AtomicMeasure(np.array([[0.0, 0.0], [10.0, 0.0]]), [0.5, 0.5])
    a, b = cube([0.0, 0.0], 0.01, (0,), 1), cube([10.0, 0.0], 0.01, (1,), 2)
    nodes, masses = mu.positions, mu.weights
    sel = select_HD1([a, b], nodes, masses, mu)
    assert [r.id for r in sel.hd1] == [1, 2] and sel.captured_mass == 1.0
    # move the second cube next to the first: the 3B balls now meet
    c = cube([1.0, 0.0], 0.01, (1,), 2)
    nodes2 = np.array([[0.0, 0.0], [1.0, 0.0]])
    sel = select_HD1([a, c], nodes2, np.array([0.6, 0.4]), mu)
    assert [r.id for r in sel.hd1] == [1] and sel.captured_mass == 0.6
    # a cube with too little nu nearby is not in HD_0
    sel = select_HD1([a], nodes, np.array([0.1, 0.9]), mu)
    assert sel.hd0 == [] and sel.captured_mass == 0.0


def test_psi_empty_and_contradiction_without_nu():
    f = MatrixField(2)
    assert psi_field(f, []).l1 == 0.0
    mu = AtomicMeasure(np.zeros((1, 2)), [1.0])
    Q = cube([0.0, 0.0], 0.01)
    rep = contradiction_report(Q, [Q], mu, np.zeros((1, 2)), np.zeros(1), EllipticKernel(f),
                               f, 0.1, 1.0)
    assert rep.hd1_count == 0 and rep.lhs == 0.0 and rep.contradiction_ratio == 0.0
    assert rep.rhs == pytest.approx(1.1 ** 0.25)
