"""Hierarchical cube lattices on the support of an atomic measure.

Level ``k`` uses radius ``r_k = A0**-k``.  Centers at each level form a
maximal ``10 r_k``-separated set of atoms, picked greedily with the previous
level's centers first and then by ascending atom index.  Atoms go to their
nearest center (ties to the lowest atom index), and nesting is enforced from
the finest level upward: a cube's parent is the coarse Voronoi cell holding
its center, and a coarse cube's members are the union of its children.

For ``A0 >= 4`` this gives, at every level, disjoint ``5B(Q)``, the inclusion
``supp mu & B(Q) <= Q <= B(x_Q, 28 r_Q)``, and nested partitions.  The small
boundary and chain decay estimates are not guaranteed and are only reported.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

DEFAULT_C0 = 2.0
DEFAULT_A0 = 8.0


@dataclass
class DMCube:
    id: int
    level: int
    center_index: int
    center: np.ndarray
    r: float
    side_length: float
    members: np.ndarray
    parent: object = None
    children: list = field(default_factory=list)
    doubling: object = None

    @property
    def mass_key(self):
        return self.id

    def ball(self, factor=1.0):
        return self.center, factor * self.r


@dataclass
class DMLattice:
    C0: float
    A0: float
    k_min: int
    k_max: int
    cubes: list
    levels: list
    labels: np.ndarray
    truncated: bool = False

    @property
    def root(self):
        return self.cubes[self.levels[0][0]]

    def level_index(self, k):
        return k - self.k_min

    def cube(self, cid):
        return self.cubes[cid]

    def cubes_at(self, k):
        return [self.cubes[c] for c in self.levels[k - self.k_min]]

    def cube_of(self, atom, k):
        """The level-``k`` cube containing atom index ``atom``."""
        return self.cubes[self.labels[k - self.k_min, atom]]

    def descendants(self, q, strict=True):
        """All descendants of ``q`` in breadth-first (coarse to fine) order."""
        out = [] if strict else [q]
        frontier = [q]
        while frontier:
            nxt = [self.cubes[c] for p in frontier for c in p.children]
            out.extend(nxt)
            frontier = nxt
        return out

    def ancestors(self, q):
        out = []
        while q.parent is not None:
            q = self.cubes[q.parent]
            out.append(q)
        return out

    def is_descendant(self, r, q):
        """True when ``r`` lies below ``q`` (or is ``q``)."""
        while r.level > q.level:
            r = self.cubes[r.parent]
        return r.id == q.id


def radius_at(A0, k):
    return float(A0) ** (-k)


def side_length(C0, A0, k):
    return 56.0 * C0 * radius_at(A0, k)


def _select_centers(pos, seeds, sep):
    """Greedy maximal ``sep``-separated subset: seeds first, then index order."""
    tree = cKDTree(pos)
    covered = np.zeros(len(pos), dtype=bool)
    centers = []
    seed_set = set(int(s) for s in seeds)
    order = [int(s) for s in seeds] + [i for i in range(len(pos)) if i not in seed_set]
    for i in order:
        if covered[i]:
            continue
        centers.append(i)
        # atoms within distance <= sep are excluded, so centers are > sep apart
        covered[tree.query_ball_point(pos[i], sep)] = True
    return np.array(centers, dtype=int)


def _nearest_center(pos, centers):
    """Index (into ``centers``) of the nearest center; ties to the lowest atom index."""
    k = min(4, len(centers))
    tree = cKDTree(pos[centers])
    dist, idx = tree.query(pos, k=k)
    if k == 1:
        return np.asarray(idx, dtype=int)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    out = idx[:, 0].copy()
    tie = dist[:, 1] == dist[:, 0]
    for i in np.flatnonzero(tie):
        cand = idx[i][dist[i] == dist[i, 0]]
        out[i] = cand[np.argmin(centers[cand])]
    return out


def auto_root_level(mu, A0):
    """Finest level at which a single ``10 r``-net point covers the support."""
    diam = mu.diameter()
    if diam == 0:
        return 0
    k = math.floor(math.log(10.0 / diam, A0))
    while 10.0 * radius_at(A0, k) <= diam:
        k -= 1
    while 10.0 * radius_at(A0, k + 1) > diam:
        k += 1
    return k


def build_lattice(mu, C0=DEFAULT_C0, A0=DEFAULT_A0, depth=6, root_level=None):
    """Build ``depth + 1`` levels below (and including) the root.

    ``root_level`` may be set coarser than the automatic choice; the extra
    levels then consist of a single cube holding every atom.  Refinement stops
    early, with ``truncated`` set, at the first level where ``100 r_k`` drops
    below the minimum atom separation: every cube there is a doubling
    singleton and finer levels would repeat it.
    """
    if not C0 > 1:
        raise ValueError("C0 must exceed 1")
    if A0 < 4:
        raise ValueError("A0 must be >= 4 for the nesting containment bound")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if C0 > 1 and A0 > 5000 * C0:
        warnings.warn("A0 > 5000 C0: consecutive scales differ enormously", stacklevel=2)
    pos = mu.positions
    n_atoms = len(mu)
    auto = auto_root_level(mu, A0)
    k_min = auto if root_level is None else int(root_level)
    if k_min > auto:
        raise ValueError(f"root_level {k_min} is finer than the single-cube level {auto}")

    centers_per_level = []
    voronoi = []
    seeds = [int(np.argmin(np.sum((pos - pos.mean(axis=0)) ** 2, axis=1)))]
    sep = mu.min_separation()
    truncated = False
    for k in range(k_min, k_min + depth + 1):
        if k <= auto:
            centers = np.array(seeds[:1], dtype=int)
            lab = np.zeros(n_atoms, dtype=int)
        else:
            centers = _select_centers(pos, seeds, 10.0 * radius_at(A0, k))
            lab = _nearest_center(pos, centers)
        centers_per_level.append(centers)
        voronoi.append(lab)
        seeds = list(centers)
        # below this scale every cube is an isolated, hence doubling, singleton
        if 100.0 * radius_at(A0, k) < sep and k < k_min + depth:
            truncated = True
            break

    n_levels = len(centers_per_level)
    labels = np.empty((n_levels, n_atoms), dtype=int)
    labels[-1] = voronoi[-1]
    parents = [None] * n_levels
    for L in range(n_levels - 2, -1, -1):
        fine_centers = centers_per_level[L + 1]
        parent_of_fine = voronoi[L][fine_centers]
        parents[L + 1] = parent_of_fine
        labels[L] = parent_of_fine[labels[L + 1]]

    cubes = []
    levels = []
    offset = 0
    for L in range(n_levels):
        k = k_min + L
        ids = []
        order = np.argsort(labels[L], kind="stable")
        bounds = np.searchsorted(labels[L][order], np.arange(len(centers_per_level[L]) + 1))
        for j, c in enumerate(centers_per_level[L]):
            cid = offset + j
            members = np.sort(order[bounds[j] : bounds[j + 1]])
            parent = None if L == 0 else levels[L - 1][parents[L][j]]
            cubes.append(
                DMCube(
                    id=cid,
                    level=k,
                    center_index=int(c),
                    center=pos[c].copy(),
                    r=radius_at(A0, k),
                    side_length=side_length(C0, A0, k),
                    members=members,
                    parent=parent,
                )
            )
            if parent is not None:
                cubes[parent].children.append(cid)
            ids.append(cid)
        levels.append(ids)
        labels[L] = np.asarray(ids)[labels[L]]
        offset += len(ids)

    return DMLattice(
        C0=float(C0),
        A0=float(A0),
        k_min=k_min,
        k_max=k_min + n_levels - 1,
        cubes=cubes,
        levels=levels,
        labels=labels,
        truncated=truncated,
    )


def cube_mass(mu, q):
    return math.fsum(mu.weights[q.members])


def cube_density(mu, q):
    """``mu(Q) / l(Q)**n``."""
    return cube_mass(mu, q) / q.side_length**mu.n


def ball_density(mu, center, radius):
    """``mu(B) / diam(B)**n`` for the open ball."""
    return mu.mass_in_ball(center, radius) / (2.0 * radius) ** mu.n


def _open_ball_lists(tree, pos, centers, radius):
    """Atom indices strictly inside ``B(c, radius)`` for each center."""
    out = []
    for c, idx in zip(centers, tree.query_ball_point(centers, radius)):
        idx = np.asarray(idx, dtype=int)
        d2 = np.sum((pos[idx] - c) ** 2, axis=1)
        out.append(np.sort(idx[d2 < radius * radius]))
    return out


def classify_doubling(lat, mu):
    """Flag ``Q`` as doubling when ``mu(100 B(Q)) <= C0 mu(B(Q))``."""
    tree = cKDTree(mu.positions)
    w = mu.weights
    for ids in lat.levels:
        qs = [lat.cubes[c] for c in ids]
        centers = np.array([q.center for q in qs])
        r = qs[0].r
        big = _open_ball_lists(tree, mu.positions, centers, 100.0 * r)
        small = _open_ball_lists(tree, mu.positions, centers, r)
        for q, b, s_ in zip(qs, big, small):
            q.doubling = math.fsum(w[b]) <= lat.C0 * math.fsum(w[s_])
    return [q.doubling for q in lat.cubes]


def _dist_to_set(points, target):
    if len(target) == 0:
        return np.full(len(points), np.inf)
    if len(points) == 0:
        return np.zeros(0)
    return cKDTree(target).query(points, k=1)[0]


def small_boundary_report(lat, mu, q, l_max, theta=None):
    """Collar masses ``mu(N_l(Q))`` next to the reference ``theta**-l mu(90 B(Q))``.

    Report only: the greedy lattice does not promise the decay rate.
    """
    theta = math.sqrt(lat.A0) if theta is None else float(theta)
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    inside = np.zeros(len(mu), dtype=bool)
    inside[q.members] = True
    pin, pout = mu.positions[inside], mu.positions[~inside]
    d_out = _dist_to_set(pout, pin)  # for N_ext
    d_in = _dist_to_set(pin, pout)  # for N_int
    w_in, w_out = mu.weights[inside], mu.weights[~inside]
    ref = mu.mass_in_ball(q.center, 90.0 * q.r)
    rows = []
    for l in range(l_max + 1):
        h = lat.A0 ** (-(q.level + l))
        mass = math.fsum(w_out[d_out < h]) + math.fsum(w_in[d_in < h])
        rows.append((l, mass, theta ** (-l) * ref))
    return rows


def collar_exponent(lat, mu, q, lambdas=None):
    """Least-squares exponent ``p`` in ``collar(lam) ~ lam**p mu(3.5 B_Q)``.

    Collars are the two sets in the thin-boundary estimate at width
    ``lam * l(Q)``.  Returns ``(p, masses)``; ``p`` is ``nan`` when fewer than
    two collars carry mass.
    """
    lambdas = np.geomspace(1e-4, 1.0, 13) if lambdas is None else np.asarray(lambdas)
    inside = np.zeros(len(mu), dtype=bool)
    inside[q.members] = True
    d_in = _dist_to_set(mu.positions[inside], mu.positions[~inside])
    d_out = _dist_to_set(mu.positions[~inside], mu.positions[inside])
    far = np.linalg.norm(mu.positions[~inside] - q.center, axis=1) < 3.5 * 28 * q.r
    w_in, w_out = mu.weights[inside], mu.weights[~inside]
    masses = np.array(
        [
            math.fsum(w_in[d_in <= lam * q.side_length])
            + math.fsum(w_out[(d_out <= lam * q.side_length) & far])
            for lam in lambdas
        ]
    )
    ok = masses > 0
    if ok.sum() < 2:
        return math.nan, masses
    slope = np.polyfit(np.log(lambdas[ok]), np.log(masses[ok]), 1)[0]
    return float(slope), masses


def doubling_cover(lat, q):
    """Maximal doubling descendants of ``q`` (``q`` itself if doubling).

    Returns ``(cubes, uncovered)`` where ``uncovered`` holds the atom indices
    whose chain below ``q`` never meets a doubling cube.
    """
    if q.doubling is None:
        raise ValueError("doubling flags not computed; call classify_doubling first")
    cover = []
    uncovered = []
    stack = [q]
    while stack:
        c = stack.pop()
        if c.doubling:
            cover.append(c)
        elif c.children:
            stack.extend(lat.cubes[i] for i in reversed(c.children))
        else:
            uncovered.extend(c.members.tolist())
    cover.sort(key=lambda c: c.id)
    return cover, np.array(sorted(uncovered), dtype=int)


def chain_decay_check(lat, mu, q, r):
    """Mass and density decay from ``100 B(Q)`` to ``100 B(R)`` along a non-doubling chain."""
    if not lat.is_descendant(r, q):
        raise ValueError("R must lie inside Q")
    mid = []
    s = r
    while s.level > q.level + 1:
        s = lat.cubes[s.parent]
        mid.append(s)
    if any(s.doubling for s in mid):
        raise ValueError("an intermediate cube is doubling")
    jump = r.level - q.level - 1
    d = mu.dim
    mq = mu.mass_in_ball(q.center, 100 * q.r)
    mr = mu.mass_in_ball(r.center, 100 * r.r)
    dens_q = mq / (200 * q.r) ** mu.n
    dens_r = mr / (200 * r.r) ** mu.n
    return {
        "levels_between": jump,
        "mass_ratio": mr / mq,
        "mass_reference": lat.A0 ** (-10 * d * jump),
        "density_ratio": dens_r / dens_q,
        "density_reference": (lat.C0 * lat.A0) ** d * lat.A0 ** (-9 * d * jump),
    }


def dump_lattice(lat, fh):
    """Write one cube per line: ``id level parent center... r doubling n_members``."""
    fh.write("# id level parent center... r doubling n_members\n")
    for q in lat.cubes:
        parent = -1 if q.parent is None else q.parent
        center = " ".join(repr(float(c)) for c in q.center)
        dbl = "-" if q.doubling is None else int(bool(q.doubling))
        fh.write(f"{q.id} {q.level} {parent} {center} {q.r!r} {dbl} {len(q.members)}\n")


def check_lattice(lat, mu):
    """Exact checks of the guaranteed lattice properties; returns a dict of booleans."""
    pos = mu.positions
    n = len(mu)
    tree_all = cKDTree(pos)
    out = {"partition": True, "nesting": True, "five_ball_disjoint": True,
           "ball_containment": True, "outer_containment": True, "half_ball_nested": True}
    for L, ids in enumerate(lat.levels):
        qs = [lat.cubes[c] for c in ids]
        seen = np.zeros(n, dtype=int)
        for q in qs:
            seen[q.members] += 1
        if not np.all(seen == 1):
            out["partition"] = False
        cen = np.array([q.center for q in qs])
        r = qs[0].r
        if len(qs) > 1:
            pairs = cKDTree(cen).query_pairs(10.0 * r, output_type="ndarray")
            if len(pairs):
                gap = np.linalg.norm(cen[pairs[:, 0]] - cen[pairs[:, 1]], axis=1)
                if not np.all(gap > 10.0 * r):
                    out["five_ball_disjoint"] = False
        inner = _open_ball_lists(tree_all, pos, cen, r)
        for q, idx in zip(qs, inner):
            if not np.all(lat.labels[L, idx] == q.id):
                out["ball_containment"] = False
            if np.any(np.sum((pos[q.members] - q.center) ** 2, axis=1) >= (28 * q.r) ** 2):
                out["outer_containment"] = False
            if q.parent is not None:
                parent = lat.cubes[q.parent]
                if parent.level != q.level - 1 or not np.all(
                    lat.labels[L - 1, q.members] == parent.id
                ):
                    out["nesting"] = False
    # half balls of different cubes meet only along a nested pair
    level_cen = [np.array([lat.cubes[c].center for c in ids]) for ids in lat.levels]
    level_trees = [cKDTree(c) for c in level_cen]
    for Lc, ids_c in enumerate(lat.levels):
        rc = lat.cubes[ids_c[0]].r
        for Lf in range(Lc, len(lat.levels)):
            ids_f = lat.levels[Lf]
            rf = lat.cubes[ids_f[0]].r
            reach = (rc + rf) / 2
            hits = level_trees[Lc].query_ball_tree(level_trees[Lf], reach)
            for i, js in enumerate(hits):
                q = lat.cubes[ids_c[i]]
                for j in js:
                    p = lat.cubes[ids_f[j]]
                    if p.id == q.id or np.linalg.norm(p.center - q.center) >= reach:
                        continue
                    if lat.labels[Lc, p.center_index] != q.id:
                        out["half_ball_nested"] = False
    return out
