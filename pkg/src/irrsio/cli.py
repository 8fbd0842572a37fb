"""Command-line entry point: ``irrsio <command> [options]``."""

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import _summation
from .config import PRESETS, ConfigError, ExperimentConfig, preset

SWEEP_HEADER = ["N", "total_energy", "max_node_ratio", "op_norm", "seconds"]
DECOMPOSE_HEADER = ["generation", "cube_id", "mass", "theta", "hd_count", "sigma1_count",
                    "delta_energy", "ratio"]


def _num(x):
    return repr(float(x))


def _clean(obj):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _config(args):
    if args.config and args.preset:
        raise ConfigError("--config and --preset are mutually exclusive")
    cfg = ExperimentConfig.load(args.config) if args.config else preset(args.preset or "two_plateau")
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.validate()
    return cfg


def _out(args, cfg):
    return args.out if args.out is not None else cfg.out


def cmd_generate(args, cfg):
    from .experiment import make_measure
    from .measure import write_measure

    mu = make_measure(cfg.measure)
    path = _out(args, cfg)
    if path in (None, "-"):
        raise ConfigError("generate needs --out FILE")
    write_measure(mu, path, header=f"irrsio measure kind={cfg.measure.kind} atoms={len(mu)}")
    return 0


def cmd_build_lattice(args, cfg):
    from .experiment import build_instance
    from .lattice import check_lattice, dump_lattice

    inst = build_instance(cfg, filtration=False)
    if args.dump:
        buf = io.StringIO()
        dump_lattice(inst.lat, buf)
        _emit(buf.getvalue(), _out(args, cfg))
        return 0
    lat = inst.lat
    summary = {
        "atoms": len(inst.mu),
        "levels": [{"level": lat.cubes[ids[0]].level, "cubes": len(ids),
                    "r": lat.cubes[ids[0]].r,
                    "doubling": sum(bool(lat.cubes[i].doubling) for i in ids)}
                   for ids in lat.levels],
        "invariants": check_lattice(lat, inst.mu),
    }
    _emit(_json(summary), _out(args, cfg))
    return 0


def _field_arg(text):
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return {"type": text}


def cmd_apply(args, cfg):
    from dataclasses import replace

    from .config import FieldSpec
    from .experiment import build_instance
    from .measure import read_measure
    from .operators import apply_T

    mu = read_measure(args.measure) if args.measure else None
    if args.field:
        spec = _field_arg(args.field)
        bad = set(spec) - set(vars(FieldSpec()))
        if bad:
            raise ConfigError(f"unknown field keys: {sorted(bad)}")
        cfg = replace(cfg, field=FieldSpec(**spec))
        cfg.validate()
    inst = build_instance(cfg, lattice=False, mu=mu)
    eps = inst.eps if args.eps is None else args.eps
    if args.targets in (None, "atoms"):
        targets = "atoms"
    else:
        targets = np.atleast_2d(np.loadtxt(args.targets, comments="#", ndmin=2))[:, : inst.mu.dim]
    sample = apply_T(inst.mu, inst.kern, targets, eps)
    lines = [" ".join(_num(v) for v in np.concatenate([p, t]))
             for p, t in zip(sample.points, sample.values)]
    _emit("".join(line + "\n" for line in lines), _out(args, cfg))
    return 0


def cmd_decompose(args, cfg):
    from .experiment import build_instance, node_rows

    inst = build_instance(cfg)
    rows = [[r["generation"], r["cube_id"], _num(r["mass"]), _num(r["theta"]), r["hd_count"],
             r["sigma1_count"], _num(r["delta_energy"]), _num(r["ratio"])]
            for r in node_rows(inst)]
    _emit(_csv(DECOMPOSE_HEADER, rows), _out(args, cfg))
    return 0


def cmd_sweep(args, cfg):
    from .experiment import sweep_row

    ns = cfg.sweep.N if args.N is None else [int(v) for v in args.N.split(",") if v.strip()]
    if list(ns) != sorted(ns):
        raise ConfigError("N list must be ascending")
    rows = []
    for n in ns:
        try:
            total, ratio, norm, secs = sweep_row(cfg, n)
            rows.append([n, _num(total), _num(ratio), _num(norm), f"{secs:.3f}"])
        except Exception as exc:  # per-row failures are recorded and the sweep continues
            print(f"sweep: N={n} failed: {exc}", file=sys.stderr)
            rows.append([n, "nan", "nan", "nan", "nan"])
    _emit(_csv(SWEEP_HEADER, rows), _out(args, cfg))
    return 0


def _lambdas(args, cfg):
    return [args.lam] if args.lam is not None else list(cfg.variational.lambdas)


def cmd_variational(args, cfg):
    from .experiment import build_instance, variational_report, variational_setup

    inst = build_instance(cfg)
    setup = variational_setup(inst)
    runs = [variational_report(inst, lam, args.budget, cfg.seed, setup)[1]
            for lam in _lambdas(args, cfg)]
    _emit(_json(runs[0] if args.lam is not None else {"runs": runs}), _out(args, cfg))
    return 0


def cmd_contradiction(args, cfg):
    from .experiment import build_instance, contradiction, variational_setup

    inst = build_instance(cfg)
    setup = variational_setup(inst)
    runs = [contradiction(inst, lam, args.budget, setup).summary() | {"lambda": lam}
            for lam in _lambdas(args, cfg)]
    _emit(_json(runs[0] if args.lam is not None else {"runs": runs}), _out(args, cfg))
    return 0


def cmd_verify(args, cfg):
    from .experiment import build_instance
    from .verify import run_suite

    rep = run_suite(build_instance(cfg), cfg.seed)
    _emit(_json(rep.to_dict()), _out(args, cfg))
    for c in rep.hard_failures:
        print(f"verify: hard failure {c.name} (value {c.value})", file=sys.stderr)
    return 0 if rep.ok else 1


COMMANDS = {
    "generate": cmd_generate,
    "build-lattice": cmd_build_lattice,
    "apply": cmd_apply,
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "variational": cmd_variational,
    "contradiction": cmd_contradiction,
    "verify": cmd_verify,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--preset", choices=PRESETS, help="named built-in config")
    common.add_argument("--out", help="output path ('-' for stdout)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int,
                        help=f"worker threads (fallback: ${_summation.THREADS_ENV}, then 1)")
    p = argparse.ArgumentParser(prog="irrsio", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the config measure to a file")
    s = sub.add_parser("build-lattice", parents=[common], help="build the cube lattice")
    s.add_argument("--dump", action="store_true", help="one cube per line instead of a summary")
    s = sub.add_parser("apply", parents=[common], help="evaluate T mu at targets")
    s.add_argument("--measure", help="measure file (x y [z] weight)")
    s.add_argument("--field", help="matrix-field spec: JSON text, JSON file or a type name")
    s.add_argument("--eps", type=float, help="truncation radius (default: half min separation)")
    s.add_argument("--targets", default="atoms", help="target file or 'atoms'")
    sub.add_parser("decompose", parents=[common], help="per-node energy table of T mu")
    s = sub.add_parser("sweep", parents=[common], help="energy and norm growth over sizes")
    s.add_argument("--N", help="comma-separated ascending sizes (overrides sweep.N)")
    for name in ("variational", "contradiction"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--lambda", dest="lam", type=float, help="single lambda (default: config list)")
        s.add_argument("--budget", type=int, help="subgradient iterations")
    sub.add_parser("verify", parents=[common], help="run the invariant suite")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None:
            _summation.set_threads(args.threads)
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"irrsio {args.command}: error: {exc}", file=sys.stderr)
        return 2
    finally:
        _summation.set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
