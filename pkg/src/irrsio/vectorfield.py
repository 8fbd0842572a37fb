"""Bump fields ``phi_R``, ``g_R = A^T grad phi_R``, ``Psi_Q`` and the final chain.

``phi_R`` is radial about ``x_R``: equal to 1 on ``1.5 B_R``, 0 outside
``2 B_R`` (``B_R = 28 B(R)``), with a quintic smoothstep across the annulus.
``g_R`` is sampled at the cell midpoints of a regular grid so that the cube
center is never a grid point.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .operators import kernel_sum

INNER = 1.5 * 28
OUTER = 2.0 * 28
PITCH_DIVISOR = 8
SMOOTHSTEP_SLOPE = 1.875  # max of |S'| for S(t) = 10t^3 - 15t^4 + 6t^5


@dataclass(frozen=True)
class BumpField:
    center: np.ndarray
    r_inner: float
    r_outer: float
    ell: float

    @property
    def width(self):
        return self.r_outer - self.r_inner

    @property
    def gradient_bound(self):
        return SMOOTHSTEP_SLOPE / self.width

    @property
    def gradient_bound_scaled(self):
        """``||grad phi||_inf l(R)``."""
        return self.gradient_bound * self.ell

    def _t(self, x):
        d = np.linalg.norm(np.atleast_2d(x) - self.center, axis=1)
        return d, np.clip((d - self.r_inner) / self.width, 0.0, 1.0)

    def __call__(self, x):
        _, t = self._t(x)
        return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)

    def grad(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d, t = self._t(x)
        ds = -30.0 * t * t * (1.0 - t) ** 2 / self.width
        out = np.zeros_like(x)
        live = (d > self.r_inner) & (d < self.r_outer)
        out[live] = (ds[live] / d[live])[:, None] * (x[live] - self.center)
        return out


def bump(R):
    return BumpField(np.asarray(R.center, dtype=float), INNER * R.r, OUTER * R.r, R.side_length)


@dataclass
class GField:
    bump: BumpField
    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    pitch: float

    @property
    def l1(self):
        return math.fsum(np.linalg.norm(self.values, axis=1) * self.weights)

    @property
    def sup(self):
        return float(np.max(np.linalg.norm(self.values, axis=1))) if len(self.values) else 0.0


def annulus_grid(b, refine=1):
    """Cell midpoints of a grid over the box around ``2B_R`` that fall in the open annulus."""
    pitch = b.width / (PITCH_DIVISOR * refine)
    m = int(math.ceil(b.r_outer / pitch))
    axis = (np.arange(-m, m) + 0.5) * pitch
    dim = len(b.center)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    rad = np.linalg.norm(mesh, axis=1)
    keep = (rad > b.r_inner) & (rad < b.r_outer)
    return b.center + mesh[keep], pitch


def g_field(field, R, refine=1, b=None):
    """``g_R(y) = A(y)^T grad phi_R(y)`` with midpoint weights ``pitch**d``."""
    b = bump(R) if b is None else b
    pts, pitch = annulus_grid(b, refine)
    grad = b.grad(pts)
    a = field(pts)
    vals = np.einsum("mji,mj->mi", a, grad)
    w = np.full(len(pts), pitch ** len(b.center))
    return GField(b, pts, vals, w, pitch)


def reproducing_check(kern, g, probes):
    """``max |T*[g dL](x) - phi(x)|`` over probes kept at least half a pitch off the grid."""
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    from scipy.spatial import cKDTree

    if len(g.points):
        dist, _ = cKDTree(g.points).query(probes)
        if np.any(dist < 0.5 * g.pitch * (1 - 1e-9)):
            raise ValueError("probe closer than half a pitch to a grid node")
    if len(g.points) == 0:
        return float(np.max(np.abs(g.bump(probes))))
    vals = kernel_sum(kern, probes, g.points, g.values * g.weights[:, None], 0.0, adjoint=True)
    return float(np.max(np.abs(vals - g.bump(probes))))


def nu_in_ball(nodes, masses, center, radius):
    d = np.linalg.norm(nodes - np.asarray(center), axis=1)
    return math.fsum(masses[d < radius])


@dataclass
class HDSelection:
    hd0: list
    hd1: list
    captured_mass: float
    growth: list = field(default_factory=list)


def select_HD1(hd, nodes, masses, mu):
    """``HD_0`` by ``nu(1.5 B_R) >= mu(R)/4``; ``HD_1`` by greedy Vitali on ``3 B_R``.

    ``growth`` lists ``nu(9 B_R) / nu(1.5 B_R)`` for each ``R`` in ``HD_0``.
    """
    nodes = np.atleast_2d(nodes)
    masses = np.asarray(masses, dtype=float)
    scored = []
    for r in hd:
        inner = nu_in_ball(nodes, masses, r.center, INNER * r.r)
        if inner >= 0.25 * math.fsum(mu.weights[r.members]):
            scored.append((inner, r))
    hd0 = [r for _, r in scored]
    growth = [nu_in_ball(nodes, masses, r.center, 9 * 28 * r.r) / s if s > 0 else math.inf
              for s, r in scored]
    kept = []
    for s, r in sorted(scored, key=lambda p: (-p[0], p[1].id)):
        if all(np.linalg.norm(r.center - k.center) >= 3 * 28 * (r.r + k.r) for _, k in kept):
            kept.append((s, r))
    kept.sort(key=lambda p: p[1].id)
    return HDSelection(hd0, [r for _, r in kept], math.fsum(s for s, _ in kept), growth)


@dataclass
class PsiField:
    summands: list
    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @property
    def l1(self):
        return math.fsum(np.linalg.norm(self.values, axis=1) * self.weights)


def psi_field(field, hd1, refine=1):
    """``Psi_Q = sum g_R`` over ``HD_1``; the ``3 B_R`` are disjoint so the supports are too."""
    parts = [g_field(field, r, refine) for r in hd1]
    if not parts:
        dim = field.dim
        return PsiField([], np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0))
    return PsiField(
        parts,
        np.vstack([p.points for p in parts]),
        np.vstack([p.values for p in parts]),
        np.concatenate([p.weights for p in parts]),
    )


def _min_gap(a, b):
    from scipy.spatial import cKDTree

    if len(a) == 0 or len(b) == 0:
        return math.inf
    return float(np.min(cKDTree(b).query(a)[0]))


def psi_energy_check(psi, nodes, masses, kern, mu_q):
    """``int |T(|Psi_Q| dL)|^2 dnu`` and its ratio to ``mu(Q)``."""
    if len(psi.points) == 0:
        return 0.0, 0.0
    dens = np.linalg.norm(psi.values, axis=1) * psi.weights
    live = masses > 0
    t = kernel_sum(kern, nodes[live], psi.points, dens, _eps_between(nodes[live], psi.points))
    val = math.fsum(np.sum(t * t, axis=1) * masses[live])
    return val, val / mu_q


def _eps_between(a, b):
    # grid nodes never coincide with nu nodes; the cutoff only guards exact hits
    gap = _min_gap(a, b)
    return 0.0 if gap > 0 else 1e-300


@dataclass
class ContradictionReport:
    nu_mass: float
    hd_count: int
    hd0_count: int
    hd1_count: int
    captured_mass: float
    pairing: float
    psi_l1: float
    weighted_energy: float
    term_I: float
    term_II: float
    II_bound: float
    psi_energy: float
    lhs: float
    rhs: float
    contradiction_ratio: float
    mu_Q: float
    ell_Q: float
    lam: float
    alpha: float

    def summary(self):
        keys = ["nu_mass", "hd1_count", "captured_mass", "term_I", "term_II",
                "lhs", "rhs", "contradiction_ratio"]
        return {k: getattr(self, k) for k in keys}


def contradiction_report(Q, hd, mu, nodes, masses, kern, field, lam, alpha, refine=1):
    """Evaluate every link of the final chain for ``nu = sum masses_k delta_{nodes_k}``.

    ``lhs`` is the captured mass ``sum nu(1.5 B_R)`` over ``HD_1`` and ``rhs``
    is ``(lam + l(Q)**alpha)**(1/4) mu(Q)``; their quotient is the
    contradiction ratio.
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    masses = np.asarray(masses, dtype=float)
    mu_q = math.fsum(mu.weights[Q.members])
    ell = Q.side_length
    sel = select_HD1(hd, nodes, masses, mu)
    psi = psi_field(field, sel.hd1, refine)
    live = masses > 0
    src, wts = nodes[live], masses[live]
    if len(psi.points) and len(src):
        eps = _eps_between(psi.points, src)
        t_nu = kernel_sum(kern, psi.points, src, wts, eps)
        t_at_nodes = kernel_sum(kern, src, src, wts, 0.0, exclude_self=True)
        omega = t_at_nodes * wts[:, None]
        t_star = kernel_sum(kern, psi.points, src, omega, eps, adjoint=True)
        abs_psi = np.linalg.norm(psi.values, axis=1)
        pairing = math.fsum(np.sum(t_nu * psi.values, axis=1) * psi.weights)
        weighted = math.fsum(np.sum(t_nu * t_nu, axis=1) * abs_psi * psi.weights)
        term_ii = abs(math.fsum(t_star * abs_psi * psi.weights))
    else:
        pairing = weighted = term_ii = 0.0
    psi_l1 = psi.l1
    energy, _ = psi_energy_check(psi, nodes, masses, kern, mu_q)
    rhs = (lam + ell**alpha) ** 0.25 * mu_q
    return ContradictionReport(
        nu_mass=math.fsum(masses), hd_count=len(hd), hd0_count=len(sel.hd0),
        hd1_count=len(sel.hd1), captured_mass=sel.captured_mass, pairing=pairing,
        psi_l1=psi_l1, weighted_energy=weighted, term_I=(lam + ell**alpha) * psi_l1,
        term_II=term_ii, II_bound=math.sqrt(lam) * mu_q, psi_energy=energy,
        lhs=sel.captured_mass, rhs=rhs, contradiction_ratio=sel.captured_mass / rhs,
        mu_Q=mu_q, ell_Q=ell, lam=lam, alpha=alpha,
    )
