"""Fundamental solutions of constant elliptic operators and frozen-coefficient kernels.

For a symmetric positive definite ``E`` and ``q = <E^-1 z, z>``:

* ``d = 3``: ``Theta(z; E) = q**-1/2 / (4 pi sqrt(det E))``
* ``d = 2``: ``Theta(z; E) = -log(q) / (4 pi sqrt(det E))``

Both solve ``-div(E grad Theta) = delta_0``, and in either dimension
``grad Theta(z; E) = -E^-1 z / (omega_d sqrt(det E) q**(d/2))`` with
``omega_d`` the area of the unit sphere.  The normalization is confirmed by
:func:`weak_form_check`.

A variable field ``A(x)`` enters only through the frozen kernel
``K(x, y) = grad Theta(x - y; A(x))`` (matrix frozen at the first argument);
``mode="target"`` freezes at ``A(y)`` instead.
"""

import math
from dataclasses import dataclass

import numpy as np

SPHERE_AREA = {2: 2.0 * math.pi, 3: 4.0 * math.pi}


class ConstantMatrix:
    """Symmetric positive definite matrix with ellipticity bound ``Lambda``."""

    def __init__(self, entries, Lambda=None):
        e = np.array(entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1] or e.shape[0] not in (2, 3):
            raise ValueError("matrix must be 2x2 or 3x3")
        if np.max(np.abs(e - e.T)) > 1e-12 * max(1.0, np.max(np.abs(e))):
            e = (e + e.T) / 2
        e = (e + e.T) / 2
        eig = np.linalg.eigvalsh(e)
        if eig[0] <= 0:
            raise ValueError("matrix is not positive definite")
        ell = max(eig[-1], 1.0 / eig[0])
        if Lambda is not None and ell > Lambda * (1 + 1e-12):
            raise ValueError(f"eigenvalues {eig} fall outside [1/{Lambda}, {Lambda}]")
        self.entries = e
        self.Lambda = float(Lambda) if Lambda is not None else float(ell)
        self.inverse = np.linalg.inv(e)
        self.inverse = (self.inverse + self.inverse.T) / 2
        self.det = float(np.linalg.det(e))

    @property
    def dim(self):
        return self.entries.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def random_spd(cls, dim, Lambda, seed=0):
        """Random rotation of a diagonal with log-uniform eigenvalues in ``[1/Lambda, Lambda]``."""
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        ev = np.exp(rng.uniform(-math.log(Lambda), math.log(Lambda), dim))
        ev[0], ev[-1] = Lambda, 1.0 / Lambda
        return cls(q @ np.diag(ev) @ q.T, Lambda)


def _check_point(x):
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise ValueError("the fundamental solution is singular at 0")
    return x


def fundamental_solution_const(E, x):
    x = _check_point(x)
    d = E.dim
    q = float(x @ E.inverse @ x)
    if d == 3:
        return 1.0 / (4.0 * math.pi * math.sqrt(E.det) * math.sqrt(q))
    return -math.log(q) / (4.0 * math.pi * math.sqrt(E.det))


def grad1_fundamental_const(E, x):
    x = _check_point(x)
    return _grad(x[None, :], E.inverse[None], E.det)[0]


def _grad(z, inv, det):
    """``grad Theta`` for stacked ``z`` (..., d) and matching inverses (..., d, d).

    Products are written out per component so no BLAS call is involved and
    results do not depend on library threading.
    """
    d = z.shape[-1]
    ez = np.stack([sum(inv[..., i, j] * z[..., j] for j in range(d)) for i in range(d)], axis=-1)
    q = sum(ez[..., i] * z[..., i] for i in range(d))
    scale = -1.0 / (SPHERE_AREA[d] * np.sqrt(det) * q ** (d / 2))
    return ez * scale[..., None]


class MatrixField:
    """``A(x) = I + epsilon s(x) M`` or a constant matrix.

    ``s(x) = mean_i sign(sin(omega x_i)) |sin(omega x_i)|**alpha`` is Holder
    with exponent ``alpha`` at the zeros of ``sin``; ``M`` is symmetric with
    spectral norm one, so eigenvalues of ``A(x)`` lie in ``[1 - epsilon, 1 + epsilon]``.
    """

    def __init__(self, dim, constant=None, alpha=1.0, epsilon=0.0, omega=2 * math.pi,
                 Lambda=None, kind="identity"):
        self.dim = dim
        self.kind = kind
        self.alpha = float(alpha)
        self.epsilon = float(epsilon)
        self.omega = float(omega)
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.epsilon <= 0.3:
            raise ValueError("epsilon must lie in [0, 0.3]")
        self.constant = constant
        if constant is None and self.epsilon == 0:
            self.constant = ConstantMatrix.identity(dim)
        m = np.ones((dim, dim)) * 0.5 + np.diag(np.arange(dim, dtype=float) * 0.25)
        self.M = m / np.linalg.norm(m, 2)
        bound = 1.0 / (1.0 - self.epsilon) if self.constant is None else self.constant.Lambda
        self.Lambda = float(Lambda) if Lambda is not None else max(bound, 1.0)
        if self.constant is None and self.Lambda * (1 - self.epsilon) < 1 - 1e-12:
            raise ValueError("Lambda too small for epsilon")

    @property
    def is_constant(self):
        return self.constant is not None

    @classmethod
    def from_spec(cls, spec, dim):
        kind = spec.get("type", "identity")
        Lambda = spec.get("Lambda")
        if kind == "identity":
            return cls(dim, ConstantMatrix.identity(dim), kind=kind)
        if kind == "diag":
            entries = spec.get("entries")
            if entries is None:
                entries = [Lambda if Lambda is not None else 2.0] + [1.0] * (dim - 1)
            if len(entries) != dim:
                raise ValueError(f"diag field needs {dim} entries")
            return cls(dim, ConstantMatrix(np.diag(entries), Lambda), kind=kind)
        if kind == "sin_perturbation":
            return cls(dim, None, alpha=spec.get("alpha", 1.0), epsilon=spec.get("epsilon", 0.2),
                       omega=spec.get("omega", 2 * math.pi), Lambda=Lambda, kind=kind)
        raise ValueError(f"unknown matrix field type {kind!r}")

    def profile(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = np.sin(self.omega * x)
        return np.mean(np.sign(s) * np.abs(s) ** self.alpha, axis=1)

    def __call__(self, x):
        """Matrices at the rows of ``x``, shape ``(m, d, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_constant:
            return np.broadcast_to(self.constant.entries, (len(x), self.dim, self.dim)).copy()
        return np.eye(self.dim)[None] + self.epsilon * self.profile(x)[:, None, None] * self.M[None]

    def inverse_and_det(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_constant:
            m = len(x)
            inv = np.broadcast_to(self.constant.inverse, (m, self.dim, self.dim))
            return inv, np.full(m, self.constant.det)
        # A = I + c M with M symmetric: invert through the eigenbasis of M
        c = self.epsilon * self.profile(x)
        ev, vec = np.linalg.eigh(self.M)
        lam = 1.0 + c[:, None] * ev[None, :]
        inv = np.einsum("ik,mk,jk->mij", vec, 1.0 / lam, vec)
        return inv, np.prod(lam, axis=1)

    def holder_constant(self, count=2000, seed=0, box=1.0):
        """Largest sampled ``max_ij |a_ij(x) - a_ij(y)| / |x - y|**alpha``."""
        if self.is_constant:
            return 0.0
        rng = np.random.default_rng(seed)
        x = rng.uniform(-box, box, (count, self.dim))
        y = x + rng.standard_normal((count, self.dim)) * np.exp(rng.uniform(-8, 0, (count, 1)))
        diff = np.max(np.abs(self(x) - self(y)), axis=(1, 2))
        return float(np.max(diff / np.linalg.norm(x - y, axis=1) ** self.alpha))

    def spec(self):
        out = {"type": self.kind, "Lambda": self.Lambda}
        if self.kind == "sin_perturbation":
            out.update(alpha=self.alpha, epsilon=self.epsilon, omega=self.omega)
        if self.kind == "diag":
            out["entries"] = [float(v) for v in np.diag(self.constant.entries)]
        return out


@dataclass
class EllipticKernel:
    field: MatrixField
    mode: str = "source"

    def __post_init__(self):
        if isinstance(self.field, ConstantMatrix):
            self.field = MatrixField(self.field.dim, self.field, kind="constant")
        if self.mode not in ("source", "target"):
            raise ValueError("mode must be 'source' or 'target'")

    @property
    def dim(self):
        return self.field.dim

    def block(self, x, y):
        """``K(x_i, y_j)`` for all pairs, shape ``(len(x), len(y), d)``; no singularity check."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        z = x[:, None, :] - y[None, :, :]
        if self.field.is_constant:
            inv = self.field.constant.inverse
            return _grad(z, inv[None, None], np.array(self.field.constant.det))
        if self.mode == "source":
            inv, det = self.field.inverse_and_det(x)
            return _grad(z, inv[:, None], det[:, None])
        inv, det = self.field.inverse_and_det(y)
        return _grad(z, inv[None, :], det[None, :])

    def pairs(self, x, y):
        """``K(x_i, y_i)`` row by row."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        z = x - y
        if self.field.is_constant:
            return _grad(z, self.field.constant.inverse[None], np.array(self.field.constant.det))
        inv, det = self.field.inverse_and_det(x if self.mode == "source" else y)
        return _grad(z, inv, det)


def frozen_kernel(kern, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        raise ValueError("kernel is singular at x = y")
    return kern.pairs(x[None], y[None])[0]


# weak form -----------------------------------------------------------------


def mollifier(s, radius=1.0):
    """``psi(|x|^2)`` for the standard bump ``exp(1 - 1 / (1 - |x|^2 / R^2))``; ``psi(0) = 1``."""
    t = np.asarray(s, dtype=float) / radius**2
    out = np.zeros_like(t)
    m = t < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - t[m]))
    return out


def mollifier_derivative(s, radius=1.0):
    t = np.asarray(s, dtype=float) / radius**2
    out = np.zeros_like(t)
    m = t < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - t[m])) * (-1.0 / (1.0 - t[m]) ** 2) / radius**2
    return out


def _cutoff(t):
    """Smooth step: 1 for ``t <= 1/2``, 0 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    u = np.clip(2.0 * t - 1.0, 0.0, 1.0)
    a = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    b = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
    return a / (a + b)


def _sphere_rule(dim, count):
    if dim == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(count, 2 * np.pi / count)
    c, wc = np.polynomial.legendre.leggauss(count)
    phi = 2 * np.pi * (np.arange(2 * count) + 0.5) / (2 * count)
    s = np.sqrt(1 - c**2)
    u = np.array([[si * math.cos(p), si * math.sin(p), ci] for ci, si in zip(c, s) for p in phi])
    w = np.array([wi * np.pi / count for wi in wc for _ in phi])
    return u, w


def weak_form_check(E, bump_radius=1.0, cells=128, cutoff_radius=None, bump_scale=1.0):
    """``|int E grad Theta . grad phi dx - phi(0)|`` for a radial bump ``phi``.

    Outside ``B(0, h)`` the integral uses midpoint quadrature on ``cells`` cells
    per axis over ``[-R, R]^d``; the smooth cutoff near the origin is handled
    by its exact polar form (radial Gauss times a spherical rule).
    ``bump_scale = 0`` gives the zero bump.
    """
    d = E.dim
    R = float(bump_radius)
    h = R / 2 if cutoff_radius is None else float(cutoff_radius)
    pitch = 2 * R / cells
    if h < 4 * pitch or cells < 8:
        raise ValueError(
            f"grid too coarse: pitch {pitch:.3g} must be at most a quarter of the cutoff radius {h:.3g}"
        )
    phi0 = bump_scale * 1.0
    c = SPHERE_AREA[d] * math.sqrt(E.det)
    inv = E.inverse

    # outer part: (1 - chi(|x|/h)) E grad Theta . grad phi = -(1-chi) 2 psi'(|x|^2) |x|^2 / (c q^(d/2))
    ax = -R + pitch * (np.arange(cells) + 0.5)
    vol = pitch**d
    partial = []
    for xs in ax:
        if d == 2:
            pts = np.stack([np.full(cells, xs), ax], axis=-1)
        else:
            yy, zz = np.meshgrid(ax, ax, indexing="ij")
            pts = np.stack([np.full_like(yy, xs), yy, zz], axis=-1).reshape(-1, 3)
        r2 = np.sum(pts**2, axis=-1)
        q = np.einsum("...i,ij,...j->...", pts, inv, pts)
        val = -(1.0 - _cutoff(np.sqrt(r2) / h)) * 2.0 * mollifier_derivative(r2, R) * r2
        val = val / (c * q ** (d / 2))
        partial.append(math.fsum(val.ravel()))
    outer = math.fsum(partial) * vol * bump_scale

    # inner part: separable radial times angular integral
    x, wx = np.polynomial.legendre.leggauss(64)
    rr = (x + 1) / 2 * h
    wr = wx * h / 2
    radial = math.fsum(_cutoff(rr / h) * mollifier_derivative(rr**2, R) * rr * wr)
    u, wu = _sphere_rule(d, 64)
    angular = math.fsum(wu * np.einsum("ki,ij,kj->k", u, inv, u) ** (-d / 2))
    inner = -2.0 * radial * angular / c * bump_scale
    return abs(outer + inner - phi0)


# Calderon-Zygmund diagnostics ------------------------------------------------


def _pair_sample(dim, count, r_min, r_max, seed, base=None):
    rng = np.random.default_rng(seed)
    if base is None:
        x = rng.uniform(-0.5, 0.5, (count, dim))
    else:
        x = np.broadcast_to(np.asarray(base, dtype=float), (count, dim)).copy()
    u = rng.standard_normal((count, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    dist = np.exp(rng.uniform(math.log(r_min), math.log(r_max), count))
    return x, x + dist[:, None] * u, dist


def cz_estimate_check(kern, count=400, r_min=1e-3, r_max=1e-1, seed=0, far=(1.0, 10.0)):
    """Fitted decay slope of ``|K|``, a smoothness quotient, and a far-field constant."""
    if count < 10:
        raise ValueError("at least 10 sample pairs are required")
    if not r_max >= 100 * r_min:
        raise ValueError("sample distances must span at least two decades")
    d = kern.dim
    n = d - 1
    x, y, dist = _pair_sample(d, count, r_min, r_max, seed)
    mag = np.linalg.norm(kern.pairs(x, y), axis=1)
    slope, intercept = np.polyfit(np.log(dist), np.log(mag), 1)

    gamma = min(kern.field.alpha, 0.5) if not kern.field.is_constant else 0.5
    rng = np.random.default_rng(seed + 1)
    v = rng.standard_normal((count, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    step = dist * rng.uniform(0.01, 0.5, count)
    y2 = y + step[:, None] * v
    ok = 2 * step <= dist
    diff = np.linalg.norm(kern.pairs(x, y) - kern.pairs(x, y2), axis=1)
    smooth = diff * dist ** (n + gamma) / step**gamma

    xf, yf, df = _pair_sample(d, count, far[0], far[1], seed + 2)
    magf = np.linalg.norm(kern.pairs(xf, yf), axis=1)
    far_const = float(np.max(magf * df ** ((n - 1) / 2)))
    return {
        "slope": float(slope),
        "constant": float(math.exp(intercept)),
        "gamma": gamma,
        "smoothness": float(np.max(smooth[ok])),
        "far_constant": far_const,
    }


def symmetrization_check(kern, count=40, r_min=1e-3, r_max=1e-1, directions=32, seed=0, base=None):
    """Slope of ``|K(x, y) + K(y, x)|`` against ``|x - y|`` near a zero of the field profile.

    For each of ``count`` log-spaced distances the magnitude is averaged over
    ``directions`` random unit vectors before fitting.
    """
    if kern.field.is_constant:
        raise ValueError("constant fields give an identically zero sum")
    d = kern.dim
    base = np.zeros(d) if base is None else np.asarray(base, dtype=float)
    rng = np.random.default_rng(seed)
    dist = np.geomspace(r_min, r_max, count)
    means = []
    for r in dist:
        u = rng.standard_normal((directions, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        x = np.broadcast_to(base, (directions, d))
        y = x + r * u
        s = kern.pairs(x, y) + kern.pairs(y, x)
        means.append(np.mean(np.linalg.norm(s, axis=1)))
    slope, intercept = np.polyfit(np.log(dist), np.log(means), 1)
    return {"slope": float(slope), "constant": float(math.exp(intercept))}
