"""Instance assembly shared by the CLI commands, the demos and the acceptance run."""

import math
import time
from dataclasses import dataclass

import numpy as np

from .filtration import (
    DensityCache,
    StoppingParams,
    build_filtration,
    decompose_energy,
    default_stopping_params,
    delta_energy_of_T,
    smoothed_measure,
)
from .kernels import EllipticKernel, MatrixField
from .lattice import build_lattice, classify_doubling
from .measure import RatioSchedule, make_cantor_measure, make_graph_measure, read_measure
from .operators import apply_T, default_eps, operator_norm_estimate
from .variational import (
    NodeProblem,
    minimize_F,
    pointwise_inequality_test,
    variation_derivative_check,
)
from .vectorfield import contradiction_report


def schedule_of(spec):
    """The ratio schedule of a Cantor-type measure spec, else ``None``."""
    if spec.kind == "cantor":
        ratios = spec.ratios if spec.ratios is not None else [0.25] * spec.generations
        return RatioSchedule(tuple(ratios[: spec.generations]))
    if spec.kind == "two_plateau":
        pattern = [spec.low] * spec.block + [spec.high] * spec.block
        return RatioSchedule.blocks(pattern, spec.generations)
    return None


def make_measure(spec):
    if spec.kind in ("cantor", "two_plateau"):
        return make_cantor_measure(schedule_of(spec), spec.generations, spec.dim)
    if spec.kind == "graph":
        return make_graph_measure(spec.num_atoms, spec.slope, spec.dim)
    return read_measure(spec.path)


def sized(spec, n):
    """``spec`` with its size parameter set to ``n`` (generations or atom count)."""
    from dataclasses import replace

    if spec.kind in ("cantor", "two_plateau"):
        return replace(spec, generations=int(n))
    if spec.kind == "graph":
        return replace(spec, num_atoms=int(n))
    raise ValueError("a measure read from a file has no size parameter")


def make_field(spec, dim):
    d = {k: v for k, v in vars(spec).items() if v is not None}
    return MatrixField.from_spec(d, dim)


@dataclass
class Instance:
    config: object
    mu: object
    schedule: object
    field: MatrixField
    kern: EllipticKernel
    lat: object = None
    cache: object = None
    params: StoppingParams = None
    filt: object = None

    @property
    def eps(self):
        e = self.config.operator.eps
        return default_eps(self.mu) if e is None else e


def stopping_params(config, lat, mu, schedule):
    s = config.stopping
    if s.tau is not None and s.delta is not None:
        return StoppingParams(s.tau, s.delta, s.A, s.eps0, s.kappa0)
    gens = config.measure.generations if schedule is not None else None
    base = default_stopping_params(lat, mu, schedule, gens, s.A, s.eps0, s.kappa0)
    tau = base.tau if s.tau is None else s.tau
    delta = min(base.delta, tau / 100.0) if s.delta is None else s.delta
    return StoppingParams(tau, delta, s.A, s.eps0, s.kappa0)


def build_instance(config, lattice=True, filtration=True, mu=None):
    mu = make_measure(config.measure) if mu is None else mu
    schedule = schedule_of(config.measure)
    field = make_field(config.field, mu.dim)
    inst = Instance(config, mu, schedule, field, EllipticKernel(field))
    if not lattice:
        return inst
    lc = config.lattice
    inst.lat = build_lattice(mu, lc.C0, lc.A0, depth=lc.depth)
    classify_doubling(inst.lat, mu)
    inst.cache = DensityCache(inst.lat, mu)
    if filtration:
        inst.params = stopping_params(config, inst.lat, mu, schedule)
        inst.filt = build_filtration(inst.lat, mu, inst.params,
                                     config.stopping.max_generations, inst.cache)
    return inst


def t_at_atoms(inst):
    return apply_T(inst.mu, inst.kern, "atoms", inst.eps).values


def node_rows(inst, t_values=None):
    """One dict per filtration node for the ``decompose`` table."""
    t_values = t_at_atoms(inst) if t_values is None else t_values
    rows = []
    for node in inst.filt.nodes:
        q = node.cube
        mass = math.fsum(inst.mu.weights[q.members])
        energy, ratio = (delta_energy_of_T(node, inst.mu, inst.kern, t_values=t_values)
                         if node.expanded else (math.nan, math.nan))
        rows.append(dict(
            generation=node.generation, cube_id=q.id, mass=mass,
            theta=float(inst.cache.theta[q.id]),
            hd_count=len(node.hd) if node.expanded else 0,
            sigma1_count=len(node.sigma1) if node.expanded else 0,
            delta_energy=energy, ratio=ratio,
        ))
    return rows


def sweep_row(config, n):
    """``(total_energy, max_node_ratio, op_norm, seconds)`` for size ``n``."""
    start = time.perf_counter()
    cfg = config.with_measure(**vars(sized(config.measure, n)))
    inst = build_instance(cfg)
    t_values = t_at_atoms(inst)
    dec = decompose_energy(t_values, inst.filt, inst.mu)
    ratios = [r["ratio"] for r in node_rows(inst, t_values) if not math.isnan(r["ratio"])]
    norm = operator_norm_estimate(inst.mu, inst.kern, inst.eps)
    return dec.total, max(ratios) if ratios else math.nan, norm, time.perf_counter() - start


def deepest_split_node(filt):
    """The smallest node with a nonempty ``Sigma_1``, ties broken by cube id."""
    split = [n for n in filt.nodes if n.sigma1]
    if not split:
        raise ValueError(
            "the filtration produced no Sigma_1 family; raise stopping.A or lower stopping.delta"
        )
    return min(split, key=lambda n: (n.cube.side_length, n.cube.id))


@dataclass
class VariationalSetup:
    node: object
    sigma: object
    problem: NodeProblem


MAX_SIGMA_NODES = 4096  # the dense (d, M, M) kernel table must fit in memory


def variational_setup(inst):
    node = deepest_split_node(inst.filt)
    sigma = smoothed_measure(node, inst.mu, inst.params, inst.config.variational.quad_per_cell)
    if len(sigma) > MAX_SIGMA_NODES:
        raise ValueError(
            f"sigma has {len(sigma)} nodes (limit {MAX_SIGMA_NODES}); "
            "lower variational.quad_per_cell or deepen the filtration"
        )
    return VariationalSetup(node, sigma, NodeProblem.from_sigma(sigma, inst.kern))


def g_prime_quotients(setup, kern, b, lam, seed, count=20):
    """``G'(0+) / G(0)`` over random balls centred on nodes where ``b > 1e-6``."""
    rng = np.random.default_rng(seed)
    live = np.nonzero(b > 1e-6)[0]
    sig = setup.sigma
    out = []
    for _ in range(count):
        k = live[rng.integers(len(live))]
        radius = rng.uniform(0.2, 3.0) * 4.0 * sig.radii[sig.cell_of_node[k]]
        d, g0 = variation_derivative_check(b, setup.problem, kern, lam, (sig.nodes[k], radius))
        out.append(d / g0)
    return out


def variational_report(inst, lam, budget=None, seed=0, setup=None, balls=20):
    setup = variational_setup(inst) if setup is None else setup
    budget = inst.config.variational.budget if budget is None else budget
    rep = minimize_F(setup.problem, lam=lam, budget=budget)
    rep.pointwise_defect = pointwise_inequality_test(rep, setup.problem)
    quot = g_prime_quotients(setup, inst.kern, rep.b, lam, seed, balls)
    return rep, {
        "F_init": rep.F_init,
        "F_final": rep.F_final,
        "sup_b": rep.sup_b,
        "pointwise_defect": rep.pointwise_defect,
        "iterations": rep.iterations,
        "lambda": lam,
        "hypothesis_holds": rep.hypothesis_holds,
        "converged": rep.converged,
        "min_G_quotient": min(quot),
        "cube_id": setup.node.cube.id,
        "side_length": setup.node.cube.side_length,
        "sigma_nodes": len(setup.sigma),
        "sigma_mass": setup.sigma.total_mass,
    }


def contradiction(inst, lam, budget=None, setup=None, refine=None):
    setup = variational_setup(inst) if setup is None else setup
    budget = inst.config.variational.budget if budget is None else budget
    refine = inst.config.variational.refine if refine is None else refine
    rep = minimize_F(setup.problem, lam=lam, budget=budget)
    masses = rep.b * setup.problem.weights
    node = setup.node
    return contradiction_report(node.cube, node.hd, inst.mu, setup.sigma.nodes, masses,
                                inst.kern, inst.field, lam, inst.field.alpha, refine)
