import math

import numpy as np
import pytest

from irrsio.filtration import (
    DensityCache,
    StoppingParams,
    ball_quadrature,
    build_filtration,
    decompose_columns,
    decompose_energy,
    default_stopping_params,
    fully_resolving,
    generation_disjoint,
    inner_region,
    martingale_difference,
    resolving_stopping_params,
    select_finite_family,
    smoothed_measure,
)
from irrsio.lattice import build_lattice, classify_doubling
from irrsio.measure import AtomicMeasure, RatioSchedule, make_cantor_measure


def resolved(mu):
    lat = build_lattice(mu, 1e4, 4.0, depth=40)
    classify_doubling(lat, mu)
    return build_filtration(lat, mu, resolving_stopping_params(lat, mu), 64)


@pytest.fixture(scope="module")
def four():
    mu = make_cantor_measure(RatioSchedule((0.25,)), 1)
    return mu, resolved(mu)


def test_params_validation():
    with pytest.raises(ValueError):
        StoppingParams(1.0, 2.0)
    with pytest.raises(ValueError):
        StoppingParams(1.0, 0.5, A=1.0)
    with pytest.raises(ValueError):
        StoppingParams(1.0, 0.5, kappa0=1.0)


def test_single_atom_is_a_leaf():
    mu = AtomicMeasure(np.zeros((1, 2)), [1.0])
    lat = build_lattice(mu, 2.0, 8.0, depth=3)
    classify_doubling(lat, mu)
    filt = build_filtration(lat, mu, StoppingParams(0.5, 0.1), 5)
    assert len(filt.generations) == 1 and not filt.root.sigma1
    dec = decompose_energy(np.array([3.0]), filt, mu)
    assert dec.mean_term == 9.0 and dec.defect == 0.0


def test_zero_generations(four):
    mu, filt = four
    lat = filt.lattice
    f0 = build_filtration(lat, mu, filt.params, 0)
    assert len(f0.generations) == 1 and not f0.root.expanded
    with pytest.raises(ValueError):
        build_filtration(lat, mu, filt.params, -1)


def test_four_atoms_resolve(four):
    mu, filt = four
    assert fully_resolving(filt)
    assert all(generation_disjoint(filt, len(mu)))
    assert [len(g) for g in filt.generations][-1] == 4


def test_constant_has_zero_differences(four):
    mu, filt = four
    f = np.full(len(mu), 2.5)
    for node in filt.nodes:
        assert np.allclose(martingale_difference(f, node, mu), 0, atol=1e-15)
    dec = decompose_energy(f, filt, mu)
    assert dec.mean_term == pytest.approx(6.25) and abs(dec.defect) < 1e-14


def test_indicator_difference_by_hand(four):
    mu, filt = four
    f = np.array([1.0, 0, 0, 0])
    node = next(n for n in filt.nodes if n.sigma1 and len(n.cube.members) == 4)
    d = martingale_difference(f, node, mu)
    # the children are the four singletons, so Delta f = f - <f>_Q
    assert np.allclose(d, f - 0.25, atol=1e-15)
    dec = decompose_energy(f, filt, mu)
    assert dec.total == pytest.approx(0.25, rel=1e-14)


def test_pythagoras_random(four, rng):
    mu = make_cantor_measure(RatioSchedule((0.25,) * 3), 3)
    filt = resolved(mu)
    assert fully_resolving(filt)
    cols = decompose_columns(rng.standard_normal((len(mu), 6)), filt, mu)
    assert np.max(cols.relative_defect) < 1e-12
    one = decompose_energy(rng.standard_normal(len(mu)), filt, mu)
    assert abs(one.defect) / one.norm2 < 1e-12


def test_truncated_filtration_has_positive_defect(rng):
    mu = make_cantor_measure(RatioSchedule((0.25,) * 3), 3)
    full = resolved(mu)
    short = build_filtration(full.lattice, mu, full.params, 1)
    f = rng.standard_normal(len(mu))
    assert decompose_energy(f, short, mu).defect > 1e-6


def test_finite_family_and_smoothing(four):
    mu, filt = four
    node = next(n for n in filt.nodes if n.sigma1)
    fam, short = select_finite_family(node, mu, 0.01)
    assert len(fam) == len(node.sigma1) and not short
    fam, _ = select_finite_family(node, mu, 0.9)
    assert len(fam) == 1
    leaf = next(n for n in filt.nodes if not n.sigma1)
    with pytest.raises(ValueError):
        select_finite_family(leaf, mu, 0.01)
    s = node.sigma1[0]
    assert np.array_equal(inner_region(s, mu, 0.0), s.members)
    sm = smoothed_measure(node, mu, StoppingParams(1.0, 0.5, kappa0=0.0))
    assert math.isclose(sm.total_mass, mu.weights[node.cube.members].sum(), rel_tol=1e-14)
    assert math.isclose(math.fsum(sm.weights), sm.total_mass, rel_tol=1e-13)
    dist = np.linalg.norm(sm.nodes - sm.centers[sm.cell_of_node], axis=1)
    assert np.all(dist <= sm.radii[sm.cell_of_node] * (1 + 1e-12))


@pytest.mark.parametrize("dim", [2, 3])
def test_ball_quadrature_moments(dim):
    pts, w = ball_quadrature(dim, 64 if dim == 2 else 216)
    assert math.isclose(w.sum(), 1.0, rel_tol=1e-14)
    assert np.allclose(w @ pts, 0, atol=1e-14)
    # E|x|^2 over the uniform unit ball is d / (d + 2)
    assert w @ np.sum(pts**2, axis=1) == pytest.approx(dim / (dim + 2), rel=1e-12)
    with pytest.raises(ValueError):
        ball_quadrature(dim, 4)


def test_ball_theta_shortcut_matches_count():
    mu = make_cantor_measure(RatioSchedule((0.25,) * 2), 2)
    lat = build_lattice(mu, 2.0, 8.0, depth=5)
    cache = DensityCache(lat, mu)
    q = lat.cubes[lat.levels[-1][0]]
    big = 1e6
    assert cache.ball_theta(q, big) == pytest.approx(1.0 / (2 * big * q.r) ** mu.n, rel=1e-14)


def test_default_params_order():
    from irrsio.measure import two_plateau_schedule
    sched = two_plateau_schedule()
    mu = make_cantor_measure(sched, 5)
    lat = build_lattice(mu, 2.0, 8.0, depth=30)
    classify_doubling(lat, mu)
    p = default_stopping_params(lat, mu, sched, 5)
    assert 0 < p.delta <= p.tau / 100
