"""Discrete minimization of ``F(g) = lam ||g||_inf ||sigma|| + int |T(g sigma)|^2 g dsigma``.

``g`` lives on the quadrature nodes of a smoothed measure and is constrained to
``g >= 0`` and ``sum_m g_m q_m = ||sigma||``.  ``T(g sigma)`` at a node skips
the node itself.  The dense kernel table ``K[k, m] = K(x_k, x_m)`` is built once
and reused for ``T``, its adjoint, and the derivative.  Products run on a
single BLAS thread so results do not depend on the machine's thread pool.
"""

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ._summation import map_target_chunks

MAX_TIE = 1e-9
NODE_HIT = 1e-300  # truncation radius that drops exact coincidences only


@dataclass
class NodeProblem:
    """Nodes, quadrature weights and the kernel table ``(d, M, M)`` with a zero diagonal."""

    nodes: np.ndarray
    weights: np.ndarray
    table: np.ndarray

    @property
    def mass(self):
        return math.fsum(self.weights)

    def __len__(self):
        return len(self.weights)

    @classmethod
    def from_sigma(cls, sigma, kern):
        nodes = np.asarray(sigma.nodes, dtype=float)
        return cls(nodes, np.asarray(sigma.weights, dtype=float), kernel_table(kern, nodes))

    @classmethod
    def from_table(cls, weights, table, nodes=None):
        weights = np.asarray(weights, dtype=float)
        table = np.array(table, dtype=float)
        if nodes is None:
            nodes = np.zeros((len(weights), table.shape[-1]))
        idx = np.arange(len(weights))
        table[idx, idx] = 0.0
        table = np.ascontiguousarray(np.moveaxis(table, -1, 0))
        return cls(np.asarray(nodes, dtype=float), weights, table)


def kernel_table(kern, nodes):
    """``K(x_k, x_m)`` for all node pairs, diagonal zeroed; shape ``(d, M, M)``."""

    def block(start, stop):
        with np.errstate(divide="ignore", invalid="ignore"):
            k = kern.block(nodes[start:stop], nodes)
        rows = np.arange(start, stop)
        k[rows - start, rows] = 0.0
        return k

    return np.ascontiguousarray(np.moveaxis(map_target_chunks(block, len(nodes), chunk=64), -1, 0))


def _single_blas(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with threadpool_limits(1):
            return fn(*args, **kwargs)

    return wrapper


def _as_problem(sigma, kern):
    return sigma if isinstance(sigma, NodeProblem) else NodeProblem.from_sigma(sigma, kern)


def t_field(problem, g):
    """``T(g sigma)`` at every node, shape ``(M, d)``."""
    w = g * problem.weights
    return np.stack([k @ w for k in problem.table], axis=1)


def t_adjoint_field(problem, vectors):
    """``T* omega`` at every node for ``omega = sum_m vectors_m delta_{x_m}``."""
    out = problem.table[0].T @ vectors[:, 0]
    for i in range(1, len(problem.table)):
        out = out + problem.table[i].T @ vectors[:, i]
    return out


@_single_blas
def functional_F(g, sigma, kern=None, lam=1.0):
    problem = _as_problem(sigma, kern)
    g = np.asarray(g, dtype=float)
    if g.shape != (len(problem),):
        raise ValueError("g must have one value per node")
    if np.any(g < 0):
        raise ValueError("g must be nonnegative")
    return _F(problem, g, lam)


def _F(problem, g, lam, v=None):
    v = t_field(problem, g) if v is None else v
    smooth = math.fsum(np.sum(v * v, axis=1) * g * problem.weights)
    return lam * float(np.max(g)) * problem.mass + smooth


def smooth_gradient(problem, g, v=None):
    """Gradient of ``int |T(g sigma)|^2 g dsigma`` with respect to the node values."""
    q = problem.weights
    v = t_field(problem, g) if v is None else v
    omega = v * (g * q)[:, None]
    return q * (np.sum(v * v, axis=1) + 2.0 * t_adjoint_field(problem, omega))


def _cap_level(z, kappa):
    """The ``s`` with ``sum (z - s)_+ = kappa`` for ``kappa > 0``."""
    zs = np.sort(z)[::-1]
    cs = np.cumsum(zs)
    k = np.arange(1, len(zs) + 1)
    s = (cs - kappa) / k
    nxt = np.append(zs[1:], -np.inf)
    ok = np.nonzero(s >= nxt)[0]
    return float(s[ok[0]])


def prox_max_simplex(x, q, mass, kappa=0.0):
    """``argmin 1/2 |y - x|^2 + kappa max(y)`` over ``{y >= 0, sum q y = mass}``.

    The minimizer is ``clip(x - theta q, 0, s)``; ``s`` follows from
    ``sum (x - theta q - s)_+ = kappa`` and ``theta`` from the mass by bisection.
    ``kappa = 0`` is the plain projection.
    """
    def clipped(theta):
        z = x - theta * q
        if kappa <= 0:
            return np.maximum(z, 0.0)
        return np.clip(z, 0.0, max(_cap_level(z, kappa), 0.0))

    lo = float(np.min((x - mass / math.fsum(q)) / q))
    hi = float(np.max(x / q))
    while float(np.dot(q, clipped(lo))) < mass:
        lo -= max(1.0, abs(lo))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.dot(q, clipped(mid))) > mass:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4e-16 * max(1.0, abs(mid)):
            break
    y = clipped(lo)
    tot = float(np.dot(q, y))
    return y * (mass / tot) if tot > 0 else np.full_like(x, mass / math.fsum(q))


def project_simplex(x, q, mass):
    """Euclidean projection onto ``{y >= 0, sum q y = mass}``."""
    return prox_max_simplex(x, q, mass, 0.0)


@dataclass
class MinimizerReport:
    b: np.ndarray
    lam: float
    F_init: float
    F_final: float
    sup_b: float
    iterations: int
    converged: bool
    hypothesis_holds: bool
    constraint_residual: float
    trace: list = field(default_factory=list)
    pointwise_defect: float = math.nan


@_single_blas
def minimize_F(sigma, kern=None, lam=1e-2, budget=4000, restarts=12, c0=None, polish=400):
    """Projected subgradient descent with steps ``c / sqrt(t)`` and best-iterate restarts.

    The ``||g||_inf`` term contributes its subgradient split evenly over the
    nodes within ``1e-9`` of the maximum.  Each restart begins at the best
    iterate so far with ``c`` halved.  ``polish`` proximal-gradient steps with
    backtracking then refine the best iterate, using the exact prox of the
    max term on the constraint set.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    problem = _as_problem(sigma, kern)
    m = len(problem)
    if m == 0:
        raise ValueError("sigma has no nodes")
    q, mass = problem.weights, problem.mass
    g = np.full(m, mass / math.fsum(q))
    f0 = _F(problem, g, lam)
    best, f_best = g.copy(), f0
    trace = [f0]
    hyp = f0 - lam * mass <= lam * mass
    if m == 1:
        return MinimizerReport(g, lam, f0, f0, float(g[0]), 0, True, hyp, 0.0, trace)
    c = float(np.linalg.norm(g)) / 2 if c0 is None else float(c0)
    per = max(1, budget // restarts)
    its = 0
    stationary = False
    for _ in range(restarts):
        g = best.copy()
        v = t_field(problem, g)
        for t in range(1, per + 1):
            its += 1
            grad = smooth_gradient(problem, g, v)
            top = g >= np.max(g) - MAX_TIE
            grad[top] += lam * mass / np.count_nonzero(top)
            # only the component tangent to the mass constraint moves g
            grad = grad - q * (np.dot(grad, q) / np.dot(q, q))
            nrm = float(np.linalg.norm(grad))
            if nrm == 0:
                stationary = True
                break
            g = project_simplex(g - (c / math.sqrt(t)) * grad / nrm, q, mass)
            v = t_field(problem, g)
            f = _F(problem, g, lam, v)
            if f < f_best:
                best, f_best = g.copy(), f
        trace.append(f_best)
        c /= 2
    if polish and not stationary:
        best, f_best, used = _polish(problem, best, lam, polish)
        its += used
        trace.append(f_best)
        # the polish loop stops early only on a non-decreasing step
        stationary = used < polish
    converged = stationary
    resid = abs(math.fsum(best * q) - mass)
    return MinimizerReport(
        b=best, lam=lam, F_init=f0, F_final=f_best, sup_b=float(np.max(best)), iterations=its,
        converged=converged, hypothesis_holds=bool(hyp), constraint_residual=resid, trace=trace,
    )


def _polish(problem, g, lam, steps):
    q, mass = problem.weights, problem.mass
    kappa = lam * mass
    v = t_field(problem, g)
    smooth = math.fsum(np.sum(v * v, axis=1) * g * q)
    f = smooth + kappa * float(np.max(g))
    step = None
    used = 0
    for _ in range(steps):
        used += 1
        grad = smooth_gradient(problem, g, v)
        if step is None:
            step = float(np.linalg.norm(g)) / max(float(np.linalg.norm(grad)), 1e-300)
        while True:
            y = prox_max_simplex(g - step * grad, q, mass, step * kappa)
            vy = t_field(problem, y)
            sy = math.fsum(np.sum(vy * vy, axis=1) * y * q)
            d = y - g
            if sy <= smooth + float(np.dot(grad, d)) + float(np.dot(d, d)) / (2 * step) or step < 1e-300:
                break
            step /= 2
        fy = sy + kappa * float(np.max(y))
        if fy > f or float(np.linalg.norm(d)) <= 1e-13 * float(np.linalg.norm(g)):
            break
        g, v, smooth, f = y, vy, sy, fy
        step *= 1.5
    return g, f, used


def pointwise_values(problem, b):
    """``|T nu|^2 + 2 T*([T nu] nu)`` at every node for ``nu = b sigma``."""
    v = t_field(problem, b)
    omega = v * (b * problem.weights)[:, None]
    return np.sum(v * v, axis=1) + 2.0 * t_adjoint_field(problem, omega)


@_single_blas
def pointwise_inequality_test(report, sigma, kern=None, lam=None):
    """Largest ``|T nu|^2 + 2 T*([T nu] nu) - 6 lam`` over nodes with ``b > 1e-6``."""
    problem = _as_problem(sigma, kern)
    lam = report.lam if lam is None else lam
    vals = pointwise_values(problem, report.b) - 6.0 * lam
    live = report.b > 1e-6
    return float(np.max(vals[live]))


@_single_blas
def extended_inequality_scan(report, sigma, kern, lam, probes, ell_q, alpha):
    """Max of ``|T nu|^2 + 4 T*([T nu] nu)`` over probes and its ratio to ``lam + l(Q)**alpha``.

    A probe sitting exactly on a node skips that node.
    """
    from .operators import kernel_sum

    problem = _as_problem(sigma, kern)
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    wts = report.b * problem.weights
    live = wts > 0
    if not np.any(live):
        return 0.0, 0.0
    src = problem.nodes[live]
    omega = (t_field(problem, report.b) * wts[:, None])[live]
    tv = kernel_sum(kern, probes, src, wts[live], NODE_HIT)
    ta = kernel_sum(kern, probes, src, omega, NODE_HIT, adjoint=True)
    top = float(np.max(np.sum(tv * tv, axis=1) + 4.0 * ta))
    return top, top / (lam + ell_q**alpha)


def G_of_t(problem, b, lam, in_ball, t):
    """``lam ||b||_inf (1 + t nu(B)/||nu||) ||nu|| + int |T nu_t|^2 dnu_t``."""
    q = problem.weights
    nu_b = math.fsum(b[in_ball] * q[in_ball])
    nu = math.fsum(b * q)
    bt = b * (1.0 - t * in_ball) + t * b * nu_b / nu
    v = t_field(problem, bt)
    smooth = math.fsum(np.sum(v * v, axis=1) * bt * q)
    return lam * float(np.max(b)) * (1.0 + t * nu_b / nu) * nu + smooth


@_single_blas
def variation_derivative_check(b, sigma, kern, lam, ball, ts=(0.0, 1e-4, 2e-4)):
    """Forward-difference ``G'(0+)`` for the variation ``b_t`` on ``ball = (center, radius)``.

    Uses the second-order one-sided stencil on ``t = 0, h, 2h``.  Returns
    ``(derivative, G(0))``.
    """
    problem = _as_problem(sigma, kern)
    center, radius = ball
    in_ball = np.linalg.norm(problem.nodes - np.asarray(center), axis=1) < radius
    b = np.asarray(b, dtype=float)
    if not np.any(in_ball & (b > 0)):
        raise ValueError("ball misses the support of nu")
    g0, g1, g2 = (G_of_t(problem, b, lam, in_ball, t) for t in ts)
    h = ts[1] - ts[0]
    return (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * h), g0
