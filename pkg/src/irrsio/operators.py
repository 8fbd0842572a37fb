"""Dense truncated evaluation of ``T``, its adjoint, operator norms and an L*-harmonicity probe.

``T_eps mu(x) = sum_{|x - y_j| > eps} K(x, y_j) w_j`` and
``T* omega(x) = sum_{|x - y_j| > eps} K(y_j, x) . omega_j``.  Each target row is
reduced over sources in ascending index order with :func:`row_sum`, and
targets are split into fixed blocks that may run on several threads.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._summation import map_target_chunks, row_sum


@dataclass(frozen=True)
class VectorMeasure:
    positions: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if pos.shape != vec.shape:
            raise ValueError("positions and vectors must have the same shape")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self):
        return self.positions.shape[1]

    def __len__(self):
        return len(self.positions)


@dataclass
class FieldSample:
    points: np.ndarray
    values: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ValueError("points and values differ in length")


def default_eps(mu):
    """Half the minimum atom separation: on atom targets only the diagonal is dropped."""
    sep = mu.min_separation()
    return 0.0 if math.isinf(sep) else sep / 2


def _chunk_for(n_src, dim):
    # block size depends only on the source count, never on the thread count
    return int(max(1, min(128, (1 << 21) // max(1, n_src * dim))))


def _targets(targets, positions):
    if isinstance(targets, str):
        if targets != "atoms":
            raise ValueError("targets must be points or 'atoms'")
        return positions
    return np.atleast_2d(np.asarray(targets, dtype=float))


def _check_coincident(tgt, src, eps, exclude_self):
    if eps > 0 or exclude_self:
        return
    from scipy.spatial import cKDTree

    hits = cKDTree(src).query_ball_point(tgt, 0.0)
    for i, js in enumerate(hits):
        if js:
            raise ValueError(
                f"target {i} coincides with source atom {js[0]}; use eps > 0"
            )


def kernel_sum(kern, tgt, src, weights, eps, exclude_self=False, adjoint=False):
    """Dense truncated sums for every target row.

    ``weights`` has shape ``(n_src,)`` for ``T`` (result ``(n_tgt, d)``) or
    ``(n_src, d)`` for the adjoint (result ``(n_tgt,)``).  ``exclude_self``
    drops the pair ``i == j`` when targets are the sources themselves.
    """
    tgt = np.atleast_2d(tgt)
    src = np.atleast_2d(src)
    _check_coincident(tgt, src, eps, exclude_self)
    d = src.shape[1]
    eps2 = eps * eps

    def block(start, stop):
        x = tgt[start:stop]
        with np.errstate(divide="ignore", invalid="ignore"):
            if adjoint:
                k = kern.block(src, x).transpose(1, 0, 2)  # K(y_j, x_i)
            else:
                k = kern.block(x, src)
        z = x[:, None, :] - src[None, :, :]
        keep = np.sum(z * z, axis=-1) > eps2
        if exclude_self:
            rows = np.arange(start, stop)
            keep[rows - start, rows] = False
        if adjoint:
            terms = sum(k[..., i] * weights[None, :, i] for i in range(d))
            terms = np.where(keep, terms, 0.0)
            return row_sum(terms)
        terms = np.where(keep[..., None], k * weights[None, :, None], 0.0)
        return row_sum(terms.transpose(0, 2, 1))

    out = map_target_chunks(block, len(tgt), chunk=_chunk_for(len(src), d))
    if out is None:
        return np.zeros((0,) if adjoint else (0, d))
    return out


def apply_T(mu, kern, targets, eps=0.0, exclude_self=False):
    tgt = _targets(targets, mu.positions)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    vals = kernel_sum(kern, tgt, mu.positions, mu.weights, eps, exclude_self)
    return FieldSample(tgt, vals, "T")


def apply_T_density(mu, kern, f, targets, eps=0.0, exclude_self=False):
    f = np.asarray(f, dtype=float)
    if f.shape != (len(mu),):
        raise ValueError("f must have one value per atom")
    tgt = _targets(targets, mu.positions)
    vals = kernel_sum(kern, tgt, mu.positions, mu.weights * f, eps, exclude_self)
    return FieldSample(tgt, vals, "T_density")


def apply_T_adjoint(omega, kern, targets, eps=0.0, exclude_self=False):
    tgt = _targets(targets, omega.positions)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    vals = kernel_sum(kern, tgt, omega.positions, omega.vectors, eps, exclude_self, adjoint=True)
    return FieldSample(tgt, vals, "T_adjoint")


class ConvergenceError(RuntimeError):
    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


def dense_matrix(mu, kern, eps=None):
    """The ``(d N) x N`` matrix ``[K(x_i, y_j) sqrt(w_i w_j)]`` with ``|x_i - y_j| <= eps`` dropped."""
    eps = default_eps(mu) if eps is None else eps
    pos = mu.positions
    sw = np.sqrt(mu.weights)
    d = mu.dim

    def block(start, stop):
        x = pos[start:stop]
        with np.errstate(divide="ignore", invalid="ignore"):
            k = kern.block(x, pos)
        z = x[:, None, :] - pos[None, :, :]
        keep = np.sum(z * z, axis=-1) > eps * eps
        k = np.where(keep[..., None], k, 0.0) * (sw[start:stop, None, None] * sw[None, :, None])
        return k.transpose(0, 2, 1)

    m = map_target_chunks(block, len(mu), chunk=_chunk_for(len(mu), d))
    return m.reshape(len(mu) * d, len(mu))


def operator_norm_estimate(mu, kern, eps=None, tol=1e-6, max_iter=10_000):
    """Largest singular value of :func:`dense_matrix` by power iteration on ``M^T M``."""
    from threadpoolctl import threadpool_limits

    if len(mu) < 2:
        raise ValueError("need at least two atoms")
    eps = default_eps(mu) if eps is None else eps
    if eps <= 0 or eps >= mu.min_separation():
        raise ValueError("eps must be positive and below the minimum atom separation")
    m = dense_matrix(mu, kern, eps)
    with threadpool_limits(1):
        g = m.T @ m
        v = np.full(len(mu), 1.0 / math.sqrt(len(mu)))
        prev = None
        gap = math.inf
        for _ in range(max_iter):
            w = g @ v
            lam = float(v @ w)
            nrm = float(np.linalg.norm(w))
            if nrm == 0:
                return 0.0
            v = w / nrm
            est = math.sqrt(max(lam, 0.0))
            if prev is not None:
                gap = abs(est - prev) / est
                if gap <= tol:
                    return est
            prev = est
    raise ConvergenceError(f"power iteration did not converge; last relative gap {gap:.3g}", gap)


def dense_norm_oracle(mu, kern, eps=None):
    """Largest singular value by a dense SVD (small N only)."""
    return float(np.linalg.svd(dense_matrix(mu, kern, eps), compute_uv=False)[0])


def harmonicity_check(omega, kern, probe, h):
    """``|-div(A grad u)(probe)| dist**d`` for ``u = T* omega`` by nested central differences."""
    probe = np.asarray(probe, dtype=float)
    d = len(probe)
    if len(omega) == 0:
        return 0.0
    dist = float(np.min(np.linalg.norm(omega.positions - probe, axis=1)))
    if dist <= 10 * h:
        raise ValueError(f"probe at distance {dist:.3g} is within 10h of the support")
    eye = np.eye(d)

    def u(pts):
        return apply_T_adjoint(omega, kern, pts).values

    def grad(pts):
        cols = [(u(pts + h * e) - u(pts - h * e)) / (2 * h) for e in eye]
        return np.stack(cols, axis=-1)

    div = 0.0
    for i, e in enumerate(eye):
        pts = np.array([probe + h * e, probe - h * e])
        flux = np.einsum("mij,mj->mi", kern.field(pts), grad(pts))
        div += (flux[0, i] - flux[1, i]) / (2 * h)
    return abs(div) * dist**d
