"""Invariant suite behind ``irrsio verify``.

Each check returns a :class:`Check`.  ``hard`` checks fail the run; report-only
checks record a value and never do.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .filtration import build_filtration, decompose_columns, fully_resolving, resolving_stopping_params
from .kernels import ConstantMatrix, EllipticKernel, MatrixField, cz_estimate_check, weak_form_check
from .lattice import build_lattice, check_lattice, classify_doubling
from .operators import kernel_sum
from .variational import NodeProblem, functional_F, minimize_F


@dataclass
class Check:
    name: str
    hard: bool
    passed: bool
    value: object = None
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "hard": self.hard, "passed": self.passed,
                "value": self.value, "detail": self.detail}


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def hard_failures(self):
        return [c for c in self.checks if c.hard and not c.passed]

    @property
    def ok(self):
        return not self.hard_failures

    def to_dict(self):
        return {"ok": self.ok, "hard_failures": [c.name for c in self.hard_failures],
                "checks": [c.to_dict() for c in self.checks]}


def lattice_checks(inst):
    res = check_lattice(inst.lat, inst.mu)
    out = [Check(f"lattice.{k}", True, bool(v)) for k, v in res.items()]
    dbl = sum(bool(q.doubling) for q in inst.lat.cubes) / len(inst.lat.cubes)
    out.append(Check("lattice.doubling_fraction", False, True, dbl))
    return out


def kernel_checks(dim):
    out = []
    eye = ConstantMatrix.identity(dim)
    res = weak_form_check(eye)
    out.append(Check("kernel.weak_form_identity", True, res < 1e-2, res))
    cz = cz_estimate_check(EllipticKernel(MatrixField(dim, eye)))
    n = dim - 1
    out.append(Check("kernel.cz_slope_identity", True, abs(cz["slope"] + n) < 1e-3, cz["slope"]))
    return out


def adjoint_identity_check(dim, seed, trials=20):
    """``<e, T nu(x)> = -T*(nu e)(x)`` for a constant field, worst relative gap."""
    rng = np.random.default_rng(seed)
    kern = EllipticKernel(MatrixField(dim, ConstantMatrix.random_spd(dim, 4.0, seed)))
    worst = 0.0
    for _ in range(trials):
        src = rng.uniform(-1, 1, (8, dim))
        w = rng.uniform(0.1, 1.0, 8)
        x = rng.uniform(-1, 1, (1, dim))
        e = rng.standard_normal(dim)
        lhs = float(kernel_sum(kern, x, src, w, 0.0)[0] @ e)
        rhs = -float(kernel_sum(kern, x, src, w[:, None] * e[None, :], 0.0, adjoint=True)[0])
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return Check("operators.adjoint_identity", True, worst <= 1e-12, worst)


def pythagoras_check(mu, seed, samples=5, C0=1e4, A0=4.0):
    """Energy identity on a fully resolving filtration of ``mu``."""
    lat = build_lattice(mu, C0, A0, depth=40)
    classify_doubling(lat, mu)
    params = resolving_stopping_params(lat, mu)
    filt = build_filtration(lat, mu, params, 64)
    resolving = fully_resolving(filt)
    rng = np.random.default_rng(seed)
    worst = float(np.max(decompose_columns(rng.standard_normal((len(mu), samples)), filt, mu)
                         .relative_defect))
    return [Check("filtration.fully_resolving", True, resolving),
            Check("filtration.pythagoras", True, resolving and worst <= 1e-10, worst)]


def two_node_problem(dim=2):
    """Two nodes at unit distance with unequal weights, ``A = I``."""
    nodes = np.zeros((2, dim))
    nodes[1, 0] = 1.0
    kern = EllipticKernel(MatrixField(dim))
    table = np.zeros((2, 2, dim))
    table[0, 1] = kern.pairs(nodes[:1], nodes[1:])[0]
    table[1, 0] = kern.pairs(nodes[1:], nodes[:1])[0]
    return NodeProblem.from_table([0.3, 0.7], table, nodes)


def two_node_F(problem, g):
    """``F`` at each row of ``g`` (shape ``(m, 2)``), written out for two nodes."""
    q, k = problem.weights, problem.table
    v0 = k[:, 0, 1][None, :] * (g[:, 1] * q[1])[:, None]
    v1 = k[:, 1, 0][None, :] * (g[:, 0] * q[0])[:, None]
    smooth = g[:, 0] * q[0] * np.sum(v0 * v0, axis=1) + g[:, 1] * q[1] * np.sum(v1 * v1, axis=1)
    return smooth


def two_node_oracle(problem, lam, step=1e-4, fine=1e-8):
    """Brute-force minimizer of ``F`` on the segment ``q1 g1 + q2 g2 = M``, ``g >= 0``.

    A grid of pitch ``step`` over the whole segment, then a grid of pitch
    ``fine`` over the two cells around the coarse winner.
    """
    q = problem.weights
    mass = problem.mass
    top = mass / q[0]

    def scan(lo, hi, h):
        a = np.clip(np.arange(lo, hi + h / 2, h), 0.0, top)
        g = np.column_stack([a, np.maximum((mass - q[0] * a) / q[1], 0.0)])
        f = two_node_F(problem, g) + lam * mass * np.max(g, axis=1)
        i = int(np.argmin(f))
        return g[i], float(f[i])

    g, _ = scan(0.0, top, step)
    return scan(max(g[0] - step, 0.0), min(g[0] + step, top), fine)


def minimizer_checks(lam=0.05):
    problem = two_node_problem()
    rep = minimize_F(problem, lam=lam, budget=4000)
    oracle, f_star = two_node_oracle(problem, lam)
    gap = float(np.max(np.abs(rep.b - oracle)))
    formula = abs(two_node_F(problem, rep.b[None, :])[0] + lam * problem.mass * rep.sup_b
                  - rep.F_final)
    return [
        Check("variational.two_node_formula", True, formula <= 1e-12 * max(rep.F_final, 1e-300),
              formula),
        Check("variational.two_node_oracle", True, gap <= 1e-4, gap),
        Check("variational.descent", True, rep.F_final <= rep.F_init + 1e-9,
              rep.F_final - rep.F_init),
    ]


def reproducing_checks(dim=2, r=0.01):
    from .vectorfield import BumpField, INNER, OUTER, g_field, reproducing_check

    class _Cube:
        center = np.zeros(dim)
        side_length = 1.0

    cube = _Cube()
    cube.r = r
    kern = EllipticKernel(MatrixField(dim))
    probe = np.zeros((2, dim))
    probe[1, 0] = 49 * r
    res = []
    for refine in (1, 2):
        g = g_field(kern.field, cube, refine)
        res.append(reproducing_check(kern, g, probe))
    b = BumpField(cube.center, INNER * r, OUTER * r, 1.0)
    return [Check("vectorfield.reproducing", True, res[0] < 5e-2, res[0]),
            Check("vectorfield.reproducing_refined_ratio", False, True,
                  res[1] / res[0] if res[0] else 0.0),
            Check("vectorfield.bump_gradient_scaled", False, True, b.gradient_bound_scaled)]


def run_suite(inst, seed=0):
    rep = VerifyReport()
    rep.checks += lattice_checks(inst)
    rep.checks += kernel_checks(inst.mu.dim)
    rep.checks.append(adjoint_identity_check(inst.mu.dim, seed))
    rep.checks += pythagoras_check(inst.mu, seed)
    rep.checks += reproducing_checks(inst.mu.dim)
    rep.checks += minimizer_checks()
    if inst.filt is not None:
        gens = len(inst.filt.generations)
        rep.checks.append(Check("filtration.generations", False, True, gens))
    return rep
