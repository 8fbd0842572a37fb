import math

import numpy as np
import pytest

from irrsio.measure import (
    AtomicMeasure,
    Ball,
    RatioSchedule,
    cell_densities,
    density,
    density_profile,
    growth_constant,
    make_cantor_measure,
    make_graph_measure,
    plateau_blocks,
    read_measure,
    two_plateau_schedule,
    write_measure,
)


def test_cantor_generation_one():
    mu = make_cantor_measure(RatioSchedule((0.25,)), 1)
    expected = {(0.125, 0.125), (0.875, 0.125), (0.125, 0.875), (0.875, 0.875)}
    assert {tuple(p) for p in mu.positions} == expected
    assert np.all(mu.weights == 0.25)


def test_cantor_mass_and_count():
    mu = make_cantor_measure(RatioSchedule((0.25, 0.25)), 2)
    assert len(mu) == 16
    assert mu.total_mass == 1.0


def test_cantor_3d_lies_in_plane():
    mu = make_cantor_measure(RatioSchedule((0.25,) * 3), 3, dim=3)
    assert mu.dim == 3 and np.all(mu.positions[:, 2] == 0)


def test_alternating_density_oscillates():
    sched = RatioSchedule((0.25, 1 / 12, 0.25, 1 / 12))
    mu = make_cantor_measure(sched, 4)
    x = mu.positions[0]
    # radii just below each generation cell side, so each ball holds one cell
    sides = np.cumprod([1.0] + list(sched.ratios))
    dens = [density(mu, Ball(x, s * 0.99)) for s in sides[1:]]
    jumps = [b / a for a, b in zip(dens, dens[1:])]
    # the density triples across every 1/12 generation and holds across 1/4 ones
    assert jumps[0] == pytest.approx(3.0, rel=1e-12)
    assert max(jumps) >= 3
    assert list(cell_densities(sched, 4)) == pytest.approx([1, 1, 3, 3, 9])


def test_ratio_validation():
    with pytest.raises(ValueError):
        RatioSchedule((0.5,))
    with pytest.raises(ValueError):
        make_cantor_measure(RatioSchedule((0.25,)), 2)


def test_graph_two_atoms():
    mu = make_graph_measure(2)
    assert np.allclose(mu.positions, [[0, 0], [1, 0]]) and np.all(mu.weights == 0.5)


def test_graph_density_flat():
    mu = make_graph_measure(100)
    for x in mu.positions:
        for r in np.geomspace(5 / 100, 0.25, 6):
            th = density(mu, Ball(x, r))
            # interior density of the unit segment is 1, endpoint density 1/2;
            # the open ball holds at most 2 floor(99 r) + 1 atoms
            assert 0.25 <= th <= (2 * math.floor(99 * r) + 1) / 100 / (2 * r) * (1 + 1e-12)


def test_graph_lipschitz_normalized():
    mu = make_graph_measure(300, 0.5)
    assert math.isclose(mu.total_mass, 1.0, rel_tol=1e-12)
    gaps = np.sort(np.linalg.norm(np.diff(mu.positions, axis=0), axis=1))
    # every chord equals the arc step except the one across the tent's kink
    assert np.ptp(gaps[1:]) / gaps[-1] < 1e-6


def test_density_examples():
    one = AtomicMeasure(np.zeros((1, 2)), [1.0])
    assert density(one, Ball([0, 0], 1.0)) == 0.5
    one3 = AtomicMeasure(np.zeros((1, 3)), [1.0])
    assert density(one3, Ball([0, 0, 0], 1.0)) == 0.25
    mu = make_cantor_measure(RatioSchedule((0.25,)), 1)
    assert math.isclose(density(mu, Ball([0.125, 0.125], 0.01)), 12.5)


def test_density_profile_single_atom():
    one = AtomicMeasure(np.zeros((1, 2)), [1.0])
    prof = density_profile(one, [0, 0], 0.1, 1.0)
    assert all(math.isclose(d, 1 / (2 * r)) for r, d in prof)
    assert all(a[1] > b[1] for a, b in zip(prof, prof[1:]))


def test_density_profile_ad_regular_vs_alternating():
    mu = make_cantor_measure(RatioSchedule((0.25,) * 5), 5)
    d = [v for _, v in density_profile(mu, mu.positions[0], 4 ** -4, 0.5)]
    assert max(d) / min(d) < 8
    alt = make_cantor_measure(RatioSchedule((0.25, 1 / 12) * 3), 6)
    lo = 0.25 * 12 ** -2 / 4 ** 2
    d = [v for _, v in density_profile(alt, alt.positions[0], lo, 0.5)]
    assert min(d) / max(d) <= 1 / 3


def test_growth_constant():
    seg = make_graph_measure(512)
    assert 1 <= growth_constant(seg) <= 4
    one = AtomicMeasure(np.zeros((1, 2)), [1.0])
    assert growth_constant(one, 8, radii=[1.0, 2.0]) == 1.0
    c = make_cantor_measure(RatioSchedule((0.25,) * 5), 5)
    a, b = growth_constant(c, 256), growth_constant(c, 512)
    assert math.isfinite(a) and abs(b - a) / a <= 0.1


def test_plateau_blocks():
    sched = two_plateau_schedule()
    assert sched.ratios[:4] == (0.25, 0.25, 1 / 12, 1 / 12)
    blocks = plateau_blocks(sched, 6)
    assert [b[0] for b in blocks] == [False, True]
    dens = cell_densities(sched, 6)
    assert dens[0] == 1.0 and dens[2] == 1.0


def test_measure_file_round_trip(tmp_path):
    mu = make_cantor_measure(RatioSchedule((0.25,) * 2), 2)
    path = tmp_path / "m.txt"
    write_measure(mu, path, header="test")
    back = read_measure(path)
    assert np.array_equal(back.positions, mu.positions)
    assert np.array_equal(back.weights, mu.weights)


def test_measure_file_errors_name_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# header\n0 0 0.5\n1 0 -0.5\n")
    with pytest.raises(ValueError, match=":3:"):
        read_measure(path)
    path.write_text("0 0 0.5\n1 0 0 0.5\n")
    with pytest.raises(ValueError, match=":2:"):
        read_measure(path)


def test_atomic_measure_validation():
    with pytest.raises(ValueError):
        AtomicMeasure(np.zeros((2, 2)), [1.0, 0.0])
    with pytest.raises(ValueError):
        AtomicMeasure(np.zeros((0, 2)), [])
