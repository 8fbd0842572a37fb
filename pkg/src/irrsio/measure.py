"""Finite atomic measures in the plane and in space.

An :class:`AtomicMeasure` stores positions as an ``(N, d)`` array and weights
as an ``(N,)`` array; both are read-only after construction.  The density
exponent is ``n = d - 1`` throughout.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MAX_CANTOR_GENERATIONS = 12


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class RatioSchedule:
    """Per-generation contraction ratios of a corner Cantor construction."""

    ratios: tuple
    corners: int = 4

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.ratios)
        object.__setattr__(self, "ratios", ratios)
        for r in ratios:
            if not 0.0 < r < 0.5:
                raise ValueError(f"ratio {r} outside (0, 1/2): sibling cells would overlap")
        if self.corners != 4:
            raise ValueError("only the four-corner construction is supported")

    @classmethod
    def blocks(cls, pattern, generations):
        """Repeat ``pattern`` (a list of ratios) until ``generations`` entries."""
        pattern = list(pattern)
        return cls(tuple(pattern[i % len(pattern)] for i in range(generations)))


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    positions: np.ndarray
    weights: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float, copy=True)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise ValueError(f"positions must have shape (N, 2) or (N, 3), got {pos.shape}")
        if pos.shape[0] != w.shape[0]:
            raise ValueError("positions and weights differ in length")
        if pos.shape[0] == 0:
            raise ValueError("measure has no atoms")
        if not np.all(np.isfinite(pos)):
            raise ValueError("atom positions must be finite")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be positive and finite")
        pos.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_mass", math.fsum(w))

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def n(self):
        return self.dim - 1

    def __len__(self):
        return self.positions.shape[0]

    def restrict(self, index):
        """Sub-measure on the atoms selected by ``index`` (indices or mask)."""
        index = np.asarray(index)
        return AtomicMeasure(self.positions[index], self.weights[index])

    def reweight(self, factors):
        factors = np.asarray(factors, dtype=float)
        keep = factors > 0
        return AtomicMeasure(self.positions[keep], self.weights[keep] * factors[keep])

    def mass_in_ball(self, center, radius):
        """Mass of the open ball ``B(center, radius)``."""
        d2 = np.sum((self.positions - np.asarray(center, dtype=float)) ** 2, axis=1)
        return math.fsum(self.weights[d2 < radius * radius])

    def min_separation(self):
        """Smallest distance between two distinct atoms (``inf`` for one atom)."""
        if len(self) < 2:
            return math.inf
        from scipy.spatial import cKDTree

        dist, _ = cKDTree(self.positions).query(self.positions, k=2)
        return float(dist[:, 1].min())

    def diameter(self):
        from scipy.spatial.distance import pdist

        if len(self) < 2:
            return 0.0
        if len(self) > 4096:
            from scipy.spatial import ConvexHull

            pts = self.positions
            if self.dim == 3 and np.ptp(pts[:, 2]) == 0:
                pts = pts[:, :2]
            try:
                pts = pts[ConvexHull(pts).vertices]
            except Exception:
                pass
            return float(pdist(pts).max())
        return float(pdist(self.positions).max())


def _cantor_corners(ratios, generations):
    """Lower-left corners and side of the generation cells, as exact fractions."""
    corners = [(Fraction(0), Fraction(0))]
    side = Fraction(1)
    for g in range(generations):
        child = side * Fraction(ratios[g]).limit_denominator(10**9)
        shift = side - child
        corners = [
            (x + dx, y + dy)
            for (x, y) in corners
            for dx, dy in ((0, 0), (shift, 0), (0, shift), (shift, shift))
        ]
        side = child
    return corners, side


def cantor_cell_sides(schedule, generations):
    sides = [1.0]
    for g in range(generations):
        sides.append(sides[-1] * schedule.ratios[g])
    return np.array(sides)


def two_plateau_schedule(generations=6, low=0.25, high=1.0 / 12.0, block=2):
    """Blocks of ``low`` followed by blocks of ``high``, ``block`` generations each."""
    return RatioSchedule.blocks([low] * block + [high] * block, generations)


def cell_densities(schedule, generations):
    """``4**-g / s_g`` for the generation-``g`` cells, ``g = 0..generations``."""
    sides = cantor_cell_sides(schedule, generations)
    return 0.25 ** np.arange(generations + 1) / sides


def plateau_blocks(schedule, generations):
    """Maximal runs of generations on the high and low density plateaus.

    A generation is high when its cell density exceeds the geometric mean
    of the extreme cell densities.  Returns ``[(is_high, first, last), ...]``
    ordered from coarse to fine.
    """
    th = cell_densities(schedule, generations)
    cut = math.sqrt(th.max() * th.min())
    flags = [bool(t > cut * (1 + 1e-12)) for t in th]
    out = []
    for g, f in enumerate(flags):
        if out and out[-1][0] == f:
            out[-1] = (f, out[-1][1], g)
        else:
            out.append((f, g, g))
    return out


def make_cantor_measure(schedule, generations, dim=2):
    """Four-corner Cantor measure on the unit square, one atom per cell.

    Atoms sit at the centers of the generation-``generations`` cells and carry
    weight ``4**-generations``.  For ``dim=3`` the square lies in ``z = 0``.
    """
    if generations < 1:
        raise ValueError("generations must be >= 1")
    if generations > MAX_CANTOR_GENERATIONS:
        raise ValueError(
            f"{generations} generations would create 4**{generations} atoms; "
            f"limit is {MAX_CANTOR_GENERATIONS}"
        )
    if len(schedule.ratios) < generations:
        raise ValueError("schedule has fewer ratios than generations")
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if generations <= 7:
        corners, side = _cantor_corners(schedule.ratios, generations)
        half = side / 2
        pos = np.array([[float(x + half), float(y + half)] for x, y in corners])
    else:
        low = np.zeros((1, 2))
        side = 1.0
        for g in range(generations):
            child = side * schedule.ratios[g]
            shift = side - child
            offs = np.array([[0, 0], [shift, 0], [0, shift], [shift, shift]])
            low = (low[:, None, :] + offs[None, :, :]).reshape(-1, 2)
            side = child
        pos = low + side / 2
    if dim == 3:
        pos = np.column_stack([pos, np.zeros(len(pos))])
    w = np.full(len(pos), 0.25**generations)
    return AtomicMeasure(pos, w)


def _graph_profile(t, slope):
    # a tent with Lipschitz constant ``slope``, peak at t = 1/2
    return slope * np.minimum(t, 1.0 - t) if slope else np.zeros_like(t)


def make_graph_measure(num_atoms, lipschitz_slope=0.0, dim=2):
    """Equal-weight atoms spaced uniformly in arc length along a Lipschitz graph.

    The graph is ``t -> (t, s * min(t, 1 - t))`` over ``[0, 1]``; for
    ``s = 0`` this is the unit segment.  Total mass is one.
    """
    if num_atoms < 2:
        raise ValueError("num_atoms must be >= 2")
    if lipschitz_slope < 0:
        raise ValueError("lipschitz_slope must be >= 0")
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if lipschitz_slope == 0:
        t = np.linspace(0.0, 1.0, num_atoms)
    else:
        # the tent has two straight pieces, so arc length is linear on each
        fine = np.linspace(0.0, 1.0, 200001)
        y = _graph_profile(fine, lipschitz_slope)
        arc = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(fine), np.diff(y)))])
        t = np.interp(np.linspace(0.0, arc[-1], num_atoms), arc, fine)
    pos = np.column_stack([t, _graph_profile(t, lipschitz_slope)])
    if dim == 3:
        pos = np.column_stack([pos, np.zeros(len(pos))])
    return AtomicMeasure(pos, np.full(num_atoms, 1.0 / num_atoms))


def density(mu, ball):
    """``mu(B) / (2 r)**n`` with the open-ball convention."""
    return mu.mass_in_ball(ball.center, ball.radius) / (2.0 * ball.radius) ** mu.n


def density_profile(mu, x, r_min, r_max, per_decade=8):
    """Densities ``mu(B(x, r)) / (2r)**n`` on a geometric grid of radii."""
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    if per_decade < 1:
        raise ValueError("per_decade must be >= 1")
    count = max(2, int(math.ceil(per_decade * math.log10(r_max / r_min))) + 1)
    radii = np.geomspace(r_min, r_max, count)
    x = np.asarray(x, dtype=float)
    dist2 = np.sum((mu.positions - x) ** 2, axis=1)
    order = np.argsort(dist2, kind="stable")
    d2 = dist2[order]
    cum = np.concatenate([[0.0], np.cumsum(mu.weights[order])])
    counts = np.searchsorted(d2, radii**2, side="left")
    return [(float(r), float(cum[c] / (2 * r) ** mu.n)) for r, c in zip(radii, counts)]


def growth_constant(mu, sample_count=256, seed=0, radii=None):
    """Empirical polynomial-growth constant ``max mu(B(x, r)) / r**n``.

    Centers are atoms drawn with a seeded generator; radii are log-uniform
    between the minimum atom separation and the diameter unless given.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.integers(0, len(mu), size=sample_count)
    if radii is None:
        lo = mu.min_separation()
        hi = max(mu.diameter(), 1e-12) * 2
        lo = hi / 1e3 if not math.isfinite(lo) else lo
        rs = np.exp(rng.uniform(math.log(lo), math.log(hi), size=sample_count))
    else:
        radii = np.asarray(radii, dtype=float)
        rs = radii[rng.integers(0, len(radii), size=sample_count)]
    best = 0.0
    for c, r in zip(centers, rs):
        best = max(best, mu.mass_in_ball(mu.positions[c], r) / r**mu.n)
    return best


def read_measure(path):
    """Read ``x y [z] weight`` lines; ``#`` starts a comment."""
    rows = []
    dim = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from None
            if dim is None:
                dim = len(vals) - 1
            elif len(vals) - 1 != dim:
                raise ValueError(f"{path}:{lineno}: dimension {len(vals) - 1} != {dim}")
            if not vals[-1] > 0:
                raise ValueError(f"{path}:{lineno}: weight must be positive, got {parts[-1]}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no atoms")
    arr = np.array(rows)
    return AtomicMeasure(arr[:, :-1], arr[:, -1])


def write_measure(mu, path, header=None):
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for p, w in zip(mu.positions, mu.weights):
            fh.write(" ".join(repr(float(c)) for c in p) + f" {float(w)!r}\n")
