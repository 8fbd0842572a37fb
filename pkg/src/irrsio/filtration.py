"""Stopping-time filtrations built from high- and low-density cubes.

``HD(Q)`` holds the maximal doubling strict descendants of ``Q`` with
``Theta(R) = mu(R) / l(R)**n > tau``.  For each such ``R``, ``LD(R)`` holds the
maximal doubling strict descendants ``P`` whose inflated ball ``A B_P`` (radius
``28 A r_P``) has density at most ``delta``.  ``Sigma_1(Q)`` is the union of
the ``LD`` families and the filtration iterates ``Q -> Sigma_1(Q)``.

``Delta_Q f = sum_S <f>_S chi_S - <f>_Q chi_Q`` over ``S`` in ``Sigma_1(Q)``,
so atoms of ``Q`` outside every ``S`` carry ``-<f>_Q``.  A node whose
``Sigma_1`` is empty is a leaf and its difference is zero.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._summation import row_sum


@dataclass(frozen=True)
class StoppingParams:
    tau: float
    delta: float
    A: float = 20.0
    eps0: float = 0.01
    kappa0: float = 0.05

    def __post_init__(self):
        if not self.tau > 0 or not self.delta > 0:
            raise ValueError("tau and delta must be positive")
        if not self.delta < self.tau:
            raise ValueError("delta must be below tau")
        if not self.A >= 2:
            raise ValueError("A must be >= 2")
        if not 0 < self.eps0 < 1 or not 0 <= self.kappa0 < 1:
            raise ValueError("eps0 must lie in (0, 1) and kappa0 in [0, 1)")


@dataclass
class FiltrationNode:
    cube: object
    generation: int
    hd: list = field(default_factory=list)
    sigma1: list = field(default_factory=list)
    sigma1_prime: list = field(default_factory=list)
    unstopped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    expanded: bool = False

    @property
    def remainder(self):
        """Atoms of ``Q`` outside every cube of ``Sigma_1(Q)``."""
        if not self.sigma1:
            return self.cube.members
        covered = np.concatenate([s.members for s in self.sigma1])
        return np.setdiff1d(self.cube.members, covered)


@dataclass
class Filtration:
    lattice: object
    params: StoppingParams
    generations: list

    @property
    def nodes(self):
        return [n for gen in self.generations for n in gen]

    @property
    def root(self):
        return self.generations[0][0]


class DensityCache:
    """Cube masses, cube densities and inflated-ball densities, computed once."""

    def __init__(self, lat, mu):
        self.lat = lat
        self.mu = mu
        self.mass = np.array([math.fsum(mu.weights[q.members]) for q in lat.cubes])
        self.theta = np.array(
            [m / q.side_length**mu.n for m, q in zip(self.mass, lat.cubes)]
        )
        self._tree = cKDTree(mu.positions)
        self._ball = {}
        lo, hi = mu.positions.min(axis=0), mu.positions.max(axis=0)
        self._hull_center = (lo + hi) / 2
        self._hull_radius = float(np.linalg.norm(hi - lo)) / 2

    def ball_theta(self, q, factor):
        """``Theta(B(x_Q, factor r_Q)) = mu(B) / (2 factor r_Q)**n`` (open ball)."""
        key = (q.id, factor)
        if key not in self._ball:
            rad = factor * q.r
            if rad > np.linalg.norm(q.center - self._hull_center) + self._hull_radius:
                # the open ball holds every atom
                self._ball[key] = self.mu.total_mass / (2.0 * rad) ** self.mu.n
                return self._ball[key]
            idx = np.asarray(self._tree.query_ball_point(q.center, rad), dtype=int)
            d2 = np.sum((self.mu.positions[idx] - q.center) ** 2, axis=1)
            mass = math.fsum(self.mu.weights[np.sort(idx[d2 < rad * rad])])
            self._ball[key] = mass / (2.0 * rad) ** self.mu.n
        return self._ball[key]


def cube_generation(q, mu, sides):
    """Finest Cantor generation whose cell side exceeds the extent of ``Q``'s atoms."""
    pts = mu.positions[q.members]
    extent = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
    return int(np.max(np.nonzero(sides > extent)[0]))


def default_stopping_params(lat, mu, schedule=None, generations=None, A=20.0,
                            eps0=0.01, kappa0=0.05):
    """``tau`` and ``delta`` from the density plateaus of a Cantor schedule.

    ``tau`` is half the median ``Theta`` of the doubling cubes lying in the
    coarsest high-plateau block that has any, and
    ``delta = min(tau / 100, low / 2)`` with ``low`` the median ``Theta`` of
    doubling cubes on the low plateau.  Without a schedule, or when no block
    holds a doubling cube, every doubling cube counts as high.
    """
    from .measure import cantor_cell_sides, plateau_blocks

    cache = DensityCache(lat, mu)
    dbl = [q for q in lat.cubes if q.doubling]
    if not dbl:
        raise ValueError("no doubling cubes; call classify_doubling first")
    high, low = [], []
    if schedule is not None:
        generations = len(schedule.ratios) if generations is None else generations
        sides = cantor_cell_sides(schedule, generations)
        gen_of = {q.id: cube_generation(q, mu, sides) for q in dbl}
        for is_high, first, last in plateau_blocks(schedule, generations):
            th = [cache.theta[q.id] for q in dbl if first <= gen_of[q.id] <= last]
            if is_high and th and not high:
                high = th
            elif not is_high:
                low.extend(th)
    if not high:
        high = [cache.theta[q.id] for q in dbl]
    tau = 0.5 * float(np.median(high))
    delta = tau / 100.0
    if low:
        delta = min(delta, 0.5 * float(np.median(low)))
    return StoppingParams(tau, delta, A, eps0, kappa0)


def resolving_stopping_params(lat, mu, A=1e12):
    """Thresholds under which every doubling cube is high and every ball low.

    With ``A`` this large each inflated ball holds all of ``mu``, so ``LD``
    fires at the first doubling level.  On a lattice where every cube is
    doubling the filtration then descends to single atoms.
    """
    cache = DensityCache(lat, mu)
    r_min = min(q.r for q in lat.cubes)
    delta = 2.0 * mu.total_mass / (56.0 * A * r_min) ** mu.n
    tau = 0.5 * float(np.min(cache.theta))
    if not delta < tau:
        raise ValueError("A too small to separate the thresholds")
    return StoppingParams(tau, delta, A)


def _maximal_below(lat, q, hit):
    """Maximal strict descendants satisfying ``hit``, plus leaves never hit."""
    found, missed = [], []
    stack = [lat.cubes[c] for c in reversed(q.children)]
    while stack:
        c = stack.pop()
        if hit(c):
            found.append(c)
        elif c.children:
            stack.extend(lat.cubes[i] for i in reversed(c.children))
        else:
            missed.append(c)
    return sorted(found, key=lambda c: c.id), missed


def high_density(lat, q, params, cache):
    return _maximal_below(
        lat, q, lambda c: bool(c.doubling) and cache.theta[c.id] > params.tau
    )


def low_density(lat, r, params, cache):
    factor = 28.0 * params.A
    return _maximal_below(
        lat, r, lambda c: bool(c.doubling) and cache.ball_theta(c, factor) <= params.delta
    )


def stopping_children(lat, mu, q, params, cache=None):
    """Return ``(HD(Q), Sigma_1(Q), unstopped_atoms)``."""
    if lat.root.doubling is None:
        raise ValueError("doubling flags not computed; call classify_doubling first")
    cache = DensityCache(lat, mu) if cache is None else cache
    hd, _ = high_density(lat, q, params, cache)
    sigma1 = []
    for r in hd:
        sigma1.extend(low_density(lat, r, params, cache)[0])
    sigma1.sort(key=lambda c: c.id)
    covered = np.concatenate([s.members for s in sigma1]) if sigma1 else np.zeros(0, int)
    return hd, sigma1, np.setdiff1d(q.members, covered)


def build_filtration(lat, mu, params, max_generations, cache=None):
    """Breadth-first ``Sigma_0 = {root}, Sigma_{k+1} = U Sigma_1(Q)``."""
    if max_generations < 0:
        raise ValueError("max_generations must be >= 0")
    cache = DensityCache(lat, mu) if cache is None else cache
    gens = [[FiltrationNode(lat.root, 0)]]
    for g in range(max_generations):
        nxt = []
        for node in gens[-1]:
            node.hd, node.sigma1, node.unstopped = stopping_children(
                lat, mu, node.cube, params, cache
            )
            node.expanded = True
            nxt.extend(FiltrationNode(s, g + 1) for s in node.sigma1)
        if not nxt:
            break
        nxt.sort(key=lambda n: n.cube.id)
        _check_disjoint(nxt, len(mu))
        gens.append(nxt)
    return Filtration(lat, params, gens)


def _check_disjoint(nodes, n_atoms):
    seen = np.zeros(n_atoms, dtype=int)
    for node in nodes:
        seen[node.cube.members] += 1
    if np.any(seen > 1):
        raise AssertionError("cubes of one generation overlap")


def generation_disjoint(filt, n_atoms):
    """Exact per-generation disjointness of the filtration's cubes."""
    out = []
    for gen in filt.generations:
        seen = np.zeros(n_atoms, dtype=int)
        for node in gen:
            seen[node.cube.members] += 1
        out.append(bool(np.all(seen <= 1)))
    return out


def _as_2d(f):
    f = np.asarray(f, dtype=float)
    return f[:, None] if f.ndim == 1 else f


def weighted_mean(f, w, idx):
    """``<f>_P`` over the atoms ``idx`` (rows of a 2-D ``f``)."""
    ww = w[idx]
    return row_sum((f[idx] * ww[:, None]).T) / math.fsum(ww)


def martingale_difference(f, node, mu):
    """``Delta_Q f`` as a per-atom array (zero outside ``Q`` and at leaves)."""
    f = np.asarray(f, dtype=float)
    f2 = _as_2d(f)
    w = mu.weights
    out = np.zeros_like(f2)
    if not node.sigma1:
        return out.reshape(f.shape)
    out[node.cube.members] = -weighted_mean(f2, w, node.cube.members)
    for s in node.sigma1:
        out[s.members] += weighted_mean(f2, w, s.members)
    return out.reshape(f.shape)


def weighted_norm2(f, w, idx=None):
    f2 = _as_2d(f)
    if idx is not None:
        f2, w = f2[idx], w[idx]
    return float(row_sum((f2 * f2 * w[:, None]).T.reshape(1, -1))[0])


@dataclass
class EnergyDecomposition:
    mean_term: float
    node_energies: dict
    total: float
    defect: float
    norm2: float


def _local_difference(f2, w, node, slot):
    """``Delta_Q f`` on the atoms of ``Q`` only, in member order."""
    idx = node.cube.members
    slot[idx] = np.arange(len(idx))
    d = np.empty((len(idx), f2.shape[1]))
    d[:] = -weighted_mean(f2, w, idx)
    for s in node.sigma1:
        d[slot[s.members]] += weighted_mean(f2, w, s.members)
    return d


def _local_energy(f2, w, node, slot):
    if not node.sigma1:
        return 0.0
    return weighted_norm2(_local_difference(f2, w, node, slot), w[node.cube.members])


def decompose_energy(f, filt, mu):
    """Mean term, ``||Delta_Q f||^2`` per expanded node, total and defect.

    ``defect = ||f||^2 - total``; it vanishes when the filtration is fully
    resolving (see :func:`fully_resolving`).
    """
    f2 = _as_2d(f)
    w = mu.weights
    root = filt.root.cube
    mean = weighted_mean(f2, w, root.members)
    mean_term = float(np.dot(mean, mean)) * math.fsum(w[root.members])
    energies = {}
    slot = np.empty(len(w), dtype=int)
    for node in filt.nodes:
        if node.expanded:
            energies[node.cube.id] = _local_energy(f2, w, node, slot)
    total = math.fsum([mean_term] + list(energies.values()))
    norm2 = weighted_norm2(f2, w)
    return EnergyDecomposition(mean_term, energies, total, norm2 - total, norm2)


@dataclass
class ColumnDecomposition:
    mean_term: np.ndarray
    total: np.ndarray
    norm2: np.ndarray

    @property
    def defect(self):
        return self.norm2 - self.total

    @property
    def relative_defect(self):
        return np.abs(self.defect) / self.norm2


def decompose_columns(f, filt, mu):
    """:func:`decompose_energy` for each column of ``f`` as its own scalar function."""
    f2 = _as_2d(f)
    w = mu.weights
    root = filt.root.cube.members
    mean_term = weighted_mean(f2, w, root) ** 2 * math.fsum(w[root])
    parts = [mean_term]
    slot = np.empty(len(w), dtype=int)
    for node in filt.nodes:
        if node.expanded and node.sigma1:
            d = _local_difference(f2, w, node, slot)
            parts.append(row_sum((d * d * w[node.cube.members][:, None]).T))
    total = row_sum(np.array(parts).T)
    norm2 = row_sum((f2 * f2 * w[:, None]).T)
    return ColumnDecomposition(mean_term, total, norm2)


def fully_resolving(filt):
    """Every split node is covered by its ``Sigma_1`` and every leaf is a single atom."""
    for node in filt.nodes:
        if node.sigma1:
            if len(node.remainder):
                return False
        elif len(node.cube.members) != 1:
            return False
    return True


def delta_energy_of_T(node, mu, kern, eps=None, t_values=None):
    """``||Delta_Q (T mu)||^2`` summed over components, and its ratio to ``mu(Q)``.

    ``t_values`` may carry precomputed ``T mu`` at every atom.
    """
    from .operators import apply_T, default_eps

    if t_values is None:
        eps = default_eps(mu) if eps is None else eps
        t_values = np.zeros((len(mu), mu.dim))
        t_values[node.cube.members] = apply_T(mu, kern, mu.positions[node.cube.members], eps).values
    d = martingale_difference(t_values, node, mu)
    energy = weighted_norm2(d, mu.weights, node.cube.members)
    return energy, energy / math.fsum(mu.weights[node.cube.members])


def select_finite_family(node, mu, eps0):
    """Largest-mass cubes of ``Sigma_1(Q)`` until their mass exceeds ``(1 - eps0) mu(Q)``.

    Returns ``(family, shortfall)``; ``shortfall`` is set when even the whole
    family misses the bound.
    """
    if not node.sigma1:
        raise ValueError("Sigma_1(Q) is empty")
    target = (1.0 - eps0) * math.fsum(mu.weights[node.cube.members])
    ranked = sorted(node.sigma1, key=lambda s: (-math.fsum(mu.weights[s.members]), s.id))
    chosen, acc = [], []
    for s in ranked:
        chosen.append(s)
        acc.append(math.fsum(mu.weights[s.members]))
        if math.fsum(acc) > target:
            return sorted(chosen, key=lambda s: s.id), False
    return sorted(chosen, key=lambda s: s.id), True


def inner_region(s, mu, kappa0):
    """Atoms of ``S`` at distance ``>= kappa0 l(S)`` from every atom outside ``S``."""
    inside = np.zeros(len(mu), dtype=bool)
    inside[s.members] = True
    if kappa0 == 0 or inside.all():
        return s.members.copy()
    dist, _ = cKDTree(mu.positions[~inside]).query(mu.positions[s.members], k=1)
    return s.members[dist >= kappa0 * s.side_length]


@dataclass
class SmoothedMeasure:
    cubes: list
    centers: np.ndarray
    radii: np.ndarray
    masses: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    cell_of_node: np.ndarray

    @property
    def total_mass(self):
        return math.fsum(self.masses)

    def __len__(self):
        return len(self.weights)


def ball_quadrature(dim, count):
    """Unit-ball product rule: Gauss radial times uniform angular, weights sum to 1."""
    if count < 8:
        raise ValueError("at least 8 quadrature nodes per cell are required")
    if dim == 2:
        n_r = max(2, int(round(math.sqrt(count))))
        n_t = max(4, count // n_r)
        x, wr = np.polynomial.legendre.leggauss(n_r)
        r = (x + 1) / 2
        wr = wr / 2 * r  # area element r dr
        th = 2 * np.pi * (np.arange(n_t) + 0.5) / n_t
        pts = np.array([[ri * math.cos(t), ri * math.sin(t)] for ri in r for t in th])
        w = np.repeat(wr, n_t) * (2 * np.pi / n_t)
    elif dim == 3:
        m = max(2, int(round(count ** (1 / 3))))
        x, wr = np.polynomial.legendre.leggauss(m)
        r = (x + 1) / 2
        wr = wr / 2 * r**2
        c, wc = np.polynomial.legendre.leggauss(m)
        phi = 2 * np.pi * (np.arange(m) + 0.5) / m
        pts, w = [], []
        for ri, wri in zip(r, wr):
            for ci, wci in zip(c, wc):
                si = math.sqrt(1 - ci * ci)
                for p in phi:
                    pts.append([ri * si * math.cos(p), ri * si * math.sin(p), ri * ci])
                    w.append(wri * wci * 2 * np.pi / m)
        pts, w = np.array(pts), np.array(w)
    else:
        raise ValueError("dim must be 2 or 3")
    return pts, w / math.fsum(w)


def smoothed_measure(node, mu, params, quad_per_cell=None, family=None):
    """Spread ``mu(I_kappa0(S))`` uniformly over ``B(x_S, r_S / 4)`` for ``S`` in ``Sigma_1'(Q)``."""
    if quad_per_cell is None:
        quad_per_cell = 64 if mu.dim == 2 else 216
    if family is None:
        family, _ = select_finite_family(node, mu, params.eps0)
    ref_pts, ref_w = ball_quadrature(mu.dim, quad_per_cell)
    cubes, centers, radii, masses, nodes, weights, owner = [], [], [], [], [], [], []
    for s in family:
        inner = inner_region(s, mu, params.kappa0)
        m = math.fsum(mu.weights[inner])
        if m == 0:
            continue
        j = len(cubes)
        cubes.append(s)
        centers.append(s.center)
        radii.append(s.r / 4)
        masses.append(m)
        nodes.append(s.center + (s.r / 4) * ref_pts)
        weights.append(m * ref_w)
        owner.append(np.full(len(ref_w), j))
    if not cubes:
        raise ValueError("every selected cube has an empty inner region")
    return SmoothedMeasure(
        cubes=cubes,
        centers=np.array(centers),
        radii=np.array(radii),
        masses=np.array(masses),
        nodes=np.vstack(nodes),
        weights=np.concatenate(weights),
        cell_of_node=np.concatenate(owner),
    )
