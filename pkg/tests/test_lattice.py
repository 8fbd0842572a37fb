import io

import numpy as np
import pytest

from irrsio.lattice import (
    build_lattice,
    chain_decay_check,
    check_lattice,
    classify_doubling,
    collar_exponent,
    doubling_cover,
    dump_lattice,
    small_boundary_report,
)
from irrsio.measure import AtomicMeasure, RatioSchedule, make_cantor_measure


def one_atom():
    return AtomicMeasure(np.zeros((1, 2)), [1.0])


def two_atoms():
    return AtomicMeasure(np.array([[0.0, 0.0], [1.0, 0.0]]), [1.0, 10.0])


def test_single_atom_lattice():
    mu = one_atom()
    lat = build_lattice(mu, 2.0, 8.0, depth=3)
    for ids in lat.levels:
        assert len(ids) == 1
        assert list(lat.cubes[ids[0]].members) == [0]
    classify_doubling(lat, mu)
    assert all(q.doubling for q in lat.cubes)
    cover, uncovered = doubling_cover(lat, lat.root)
    assert cover == [lat.root] and len(uncovered) == 0


def test_separated_atoms_become_singletons():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    mu = AtomicMeasure(pts, [0.25] * 4)
    lat = build_lattice(mu, 2.0, 8.0, depth=4)
    fine = [ids for ids in lat.levels if 10 * lat.cubes[ids[0]].r < 1]
    assert fine and all(len(ids) == 4 for ids in fine)


def test_cantor_partition_and_disjointness():
    mu = make_cantor_measure(RatioSchedule((0.25,) * 4), 4)
    lat = build_lattice(mu, 2.0, 8.0, depth=5)
    assert all(check_lattice(lat, mu).values())


@pytest.mark.parametrize("A0", [4.0, 8.0, 16.0])
def test_invariants_all_A0(A0):
    mu = make_cantor_measure(RatioSchedule((0.25, 1 / 12) * 2), 4, dim=3)
    assert all(check_lattice(build_lattice(mu, 2.0, A0, depth=30), mu).values())


def test_two_atom_doubling():
    mu = two_atoms()
    lat = build_lattice(mu, 2.0, 8.0, depth=4)
    classify_doubling(lat, mu)
    small = [q for q in lat.cubes if list(q.members) == [0] and 100 * q.r > 1 > q.r]
    assert small and all(not q.doubling for q in small)
    cover, uncovered = doubling_cover(lat, small[0])
    assert len(uncovered) == 0
    assert all(c.level > small[0].level and list(c.members) == [0] for c in cover)


def test_doubling_flags_match_direct_counts():
    # on an AD-regular 1-dimensional set mu(100B)/mu(B) is about 100, so C0=8
    # leaves the intermediate levels non-doubling
    mu = make_cantor_measure(RatioSchedule((0.25,) * 5), 5)
    lat = build_lattice(mu, 8.0, 8.0, depth=30)
    classify_doubling(lat, mu)
    for q in lat.cubes:
        big = mu.mass_in_ball(q.center, 100 * q.r)
        small = mu.mass_in_ball(q.center, q.r)
        assert q.doubling == (big <= 8.0 * small)
    finest = lat.levels[-1]
    assert all(lat.cubes[i].doubling for i in finest)


def test_small_boundary_isolated_and_root():
    mu = AtomicMeasure(np.array([[0.0, 0.0], [5.0, 0.0]]), [0.5, 0.5])
    lat = build_lattice(mu, 2.0, 8.0, depth=3)
    q = next(q for q in lat.cubes if len(q.members) == 1 and q.r * 10 < 5)
    rows = small_boundary_report(lat, mu, q, 3)
    assert all(m == 0 for l, m, _ in rows if lat.A0 ** (-(q.level + l)) < 1)
    cmu = make_cantor_measure(RatioSchedule((0.25,) * 3), 3)
    clat = build_lattice(cmu, 2.0, 8.0, depth=3)
    # the root has no outside, so only the interior collar can carry mass
    rows = small_boundary_report(clat, cmu, clat.root, 2)
    assert all(m >= 0 for _, m, _ in rows)


def test_collar_decay_on_cantor():
    mu = make_cantor_measure(RatioSchedule((0.25,) * 5), 5)
    lat = build_lattice(mu, 2.0, 4.0, depth=30)
    inner = [q for q in lat.cubes if 4 < len(q.members) < len(mu)]
    _, masses = collar_exponent(lat, mu, inner[len(inner) // 2])
    assert masses[0] <= masses[-1]


def test_chain_decay_trivial_cases():
    mu = one_atom()
    lat = build_lattice(mu, 2.0, 8.0, depth=3)
    classify_doubling(lat, mu)
    q = lat.root
    res = chain_decay_check(lat, mu, q, q)
    assert res["levels_between"] == -1 and res["mass_ratio"] == 1.0


def test_chain_decay_two_atoms_by_hand():
    mu = two_atoms()
    lat = build_lattice(mu, 2.0, 8.0, depth=4)
    classify_doubling(lat, mu)
    r = lat.cubes[lat.levels[-1][0]]
    q = lat.cubes[r.parent]
    res = chain_decay_check(lat, mu, q, r)
    mq = sum(w for p, w in zip(mu.positions, mu.weights) if np.linalg.norm(p - q.center) < 100 * q.r)
    mr = sum(w for p, w in zip(mu.positions, mu.weights) if np.linalg.norm(p - r.center) < 100 * r.r)
    assert res["mass_ratio"] == pytest.approx(mr / mq, rel=1e-15)


def test_dump_format():
    mu = make_cantor_measure(RatioSchedule((0.25,) * 2), 2)
    lat = build_lattice(mu, 2.0, 8.0, depth=3)
    classify_doubling(lat, mu)
    buf = io.StringIO()
    dump_lattice(lat, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("# id level parent")
    assert len(lines) == len(lat.cubes) + 1
    assert len(lines[1].split()) == 3 + 2 + 3
