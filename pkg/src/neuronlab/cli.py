"""Command-line driver: ``neuronlab <command> [options]``.

Options may also come from a JSON file given with ``--config``; keys are the
option names with dashes replaced by underscores, and explicit flags win over
the file.  Every command writes ``manifest.json`` next to its outputs.

Exit codes: 0 success, 1 acceptance failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .activations import parse_activation
from .errors import NeuronLabError
from .hermite import expand, gauss_hermite, default_rule
from .landscape import check_pop_condition, scan_1d

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
LANDSCAPE_DEFAULT = "relu,silu,gelu,sigmoid,tanh,plateau,sine:1,sine:2,sine:4"
# options allowed to be zero or negative
_SIGNED = {"a0", "beta0", "lo", "seed", "only"}


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def workers_from_env() -> int:
    raw = os.environ.get("NDL_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"NDL_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("NDL_THREADS must be >= 1")
    return min(n, os.cpu_count() or 1)


# --------------------------------------------------------------------------
# Outputs and manifest
# --------------------------------------------------------------------------

def git_blob_hash(data: bytes) -> str:
    """Content hash as computed by ``git hash-object``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _slug(activation_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", activation_id)


class Run:
    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {self.out}: {exc}") from None
        self.files = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def write_json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")

    def manifest(self):
        config = {k: v for k, v in vars(self.args).items() if k not in ("func", "config")}
        entry = {
            "command": self.args.command,
            "version": __version__,
            "config": config,
            "seed": getattr(self.args, "seed", None),
            "outputs": {f: git_blob_hash((self.out / f).read_bytes()) for f in sorted(set(self.files))},
        }
        (self.out / "manifest.json").write_text(json.dumps(entry, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_landscape(args, run):
    summary = {}
    rule = gauss_hermite(args.order) if args.order else None
    for act in args.activations.split(","):
        spec = parse_activation(act)
        land = scan_1d(spec, args.lo, args.hi, args.steps, rule)
        land.to_csv(run.path(f"landscape_{_slug(spec.id)}.csv"))
        bad = land.interior_minima(0.0, 1.0, exclude_global=1e-10)
        summary[spec.id] = {
            "bad_minima": [{"beta": b, "r": r} for b, r in bad],
            "flat_at_origin": land.flat_at_origin(),
            "pop_condition_C": check_pop_condition(spec, rule).C,
        }
    run.write_json("landscape_summary.json", summary)
    for k, v in summary.items():
        print(f"{k}: {len(v['bad_minima'])} bad minima in (0,1), flat at 0: {v['flat_at_origin']}")
    return EXIT_OK


def cmd_expand(args, run):
    spec = parse_activation(args.activation)
    rule = gauss_hermite(args.order) if args.order else default_rule(spec)
    exp = expand(spec, args.K, rule)
    exp.to_csv(run.path(f"hermite_{_slug(spec.id)}.csv"))
    cf = exp.correlation()
    info = {"activation": spec.id, "K": args.K, "order": rule.order, "l2_total": exp.l2_total,
            "residual": exp.residual, "q_sigma_1": cf.q_sigma(1.0), "q_sigma_half": cf.q_sigma(0.5),
            "f_prime_1": float(cf.f_prime(1.0)), "first_nonzero": cf.first_nonzero()}
    run.write_json(f"hermite_{_slug(spec.id)}.json", info)
    print(json.dumps(info))
    return EXIT_OK


def cmd_flow(args, run):
    from .dynamics import (FlowConfig, flow_1d, flow_population_full, flow_sphere_full,
                           flow_sphere_reduced)
    from .experiments import gaussian_init, sphere_init, teacher

    spec = parse_activation(args.activation)
    cfg = FlowConfig(h=args.h, T=args.T, record_every=args.record_every)
    if args.kind == "1d":
        traj = flow_1d(spec, args.beta0, cfg)
    elif args.kind == "sphere":
        traj = flow_sphere_reduced(expand(spec, args.K).correlation(), args.a0, cfg)
    elif args.kind == "sphere-full":
        traj = flow_sphere_full(expand(spec, args.K).correlation(), sphere_init(args.d, args.seed),
                                teacher(args.d), cfg)
    else:
        w0 = gaussian_init(args.d, args.eta, args.seed) if args.eta else np.zeros(args.d)
        traj = flow_population_full(spec, w0, teacher(args.d), cfg)
    traj.to_csv(run.path(f"flow_{args.kind}_{_slug(spec.id)}.csv"))
    print(f"{args.kind} flow: {traj.terminal_reason} at t={traj.times[-1]:g}, risk {traj.risks[-1]:.3e}")
    return EXIT_OK


def cmd_empirical(args, run):
    from .dynamics import FlowConfig
    from .empirical import (EmpiricalContext, GaussianDataset, empirical_flow_sphere,
                            empirical_flow_zero_init, sup_gap)
    from .experiments import sphere_init, teacher

    spec = parse_activation(args.activation)
    data = GaussianDataset.generate(args.n, args.d, args.seed)
    ctx = EmpiricalContext(data, spec, teacher(args.d), args.Q)
    if args.save_data:
        data.save(run.path("dataset.ndl"))
    if args.mode == "supgap":
        gap = sup_gap(ctx, args.probes, args.seed)
        info = {"n": args.n, "d": args.d, "Q": args.Q, "risk_gap": gap.risk_gap, "grad_gap": gap.grad_gap}
        run.write_json("supgap.json", info)
        print(json.dumps(info))
        return EXIT_OK
    cfg = FlowConfig(h=args.h, T=args.T, record_every=args.record_every)
    if args.mode == "zero":
        traj = empirical_flow_zero_init(ctx, cfg)
    else:
        traj = empirical_flow_sphere(ctx, sphere_init(args.d, args.seed + 1), cfg)
    traj.to_csv(run.path(f"empirical_{args.mode}.csv"))
    print(f"empirical {args.mode}: distance {traj.extras['distance'][-1]:.3e} "
          f"(best {traj.extras['best_distance']:.3e})")
    return EXIT_OK


def cmd_study(args, run):
    from .experiments import run_probability_study

    rep = run_probability_study(args.scenario, args.activation, d=args.d, trials=args.trials,
                                seed=args.seed, delta=args.delta, eta=args.eta, workers=run.workers)
    path = run.path(f"study_{args.scenario}.json")
    path.write_text(rep.to_json() + "\n")
    print(rep.summary())
    if rep.details.get("rate_exponentially_small"):
        print(f"warning: rate q_sigma = {rep.details['q_sigma']:.3e} is exponentially small")
    return EXIT_OK


def cmd_verify_all(args, run):
    from .acceptance import format_table, run_all

    numbers = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_all(numbers, workers=run.workers, echo=print)
    run.write_json("acceptance.json", [r.__dict__ for r in results])
    print(format_table(results).splitlines()[-1])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuronlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="JSON file with option values")
        sp.add_argument("--out", default="out", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("landscape", help="tabulate r(beta) and locate bad minima")
    common(sp, seed=False)
    sp.add_argument("--activations", default=LANDSCAPE_DEFAULT)
    sp.add_argument("--lo", type=float, default=0.0)
    sp.add_argument("--hi", type=_positive_float, default=1.5)
    sp.add_argument("--steps", type=_positive_int, default=301)
    sp.add_argument("--order", type=_positive_int, default=None)
    sp.set_defaults(func=cmd_landscape)

    sp = sub.add_parser("expand", help="Hermite coefficients of an activation")
    common(sp, seed=False)
    sp.add_argument("--activation", required=True)
    sp.add_argument("--K", type=_positive_int, default=40)
    sp.add_argument("--order", type=_positive_int, default=None)
    sp.set_defaults(func=cmd_expand)

    sp = sub.add_parser("flow", help="integrate a population gradient flow")
    common(sp)
    sp.add_argument("--kind", choices=["1d", "sphere", "sphere-full", "population"], default="1d")
    sp.add_argument("--activation", required=True)
    sp.add_argument("--beta0", type=float, default=0.0)
    sp.add_argument("--a0", type=float, default=0.0)
    sp.add_argument("--d", type=_positive_int, default=10)
    sp.add_argument("--eta", type=_positive_float, default=None)
    sp.add_argument("--K", type=_positive_int, default=40)
    sp.add_argument("--h", type=_positive_float, default=1e-3)
    sp.add_argument("--T", type=_positive_float, default=50.0)
    sp.add_argument("--record-every", type=_positive_int, default=10)
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("empirical", help="finite-sample gap or empirical gradient flow")
    common(sp)
    sp.add_argument("--mode", choices=["supgap", "zero", "sphere"], default="supgap")
    sp.add_argument("--activation", default="silu")
    sp.add_argument("--n", type=_positive_int, default=10_000)
    sp.add_argument("--d", type=_positive_int, default=10)
    sp.add_argument("--Q", type=_positive_float, default=1.0)
    sp.add_argument("--probes", type=_positive_int, default=100)
    sp.add_argument("--h", type=_positive_float, default=0.05)
    sp.add_argument("--T", type=_positive_float, default=30.0)
    sp.add_argument("--record-every", type=_positive_int, default=1)
    sp.add_argument("--save-data", action="store_true")
    sp.set_defaults(func=cmd_empirical)

    sp = sub.add_parser("study", help="Monte-Carlo probability study")
    common(sp)
    sp.add_argument("--scenario", required=True,
                    choices=["constant_prob", "high_prob", "counterexample", "theorem1"])
    sp.add_argument("--activation", default=None)
    sp.add_argument("--d", type=_positive_int, default=20)
    sp.add_argument("--trials", type=_positive_int, default=500)
    sp.add_argument("--delta", type=_positive_float, default=0.5)
    sp.add_argument("--eta", type=_positive_float, default=None)
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("verify-all", help="run the acceptance checks")
    common(sp, seed=False)
    sp.add_argument("--only", default="", help="comma-separated check numbers")
    sp.set_defaults(func=cmd_verify_all)
    return p


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with values from ``--config`` as defaults, rejecting unknown keys."""
    argv = list(sys.argv[1:] if argv is None else argv)
    path = _config_path(argv)
    command = next((t for t in argv if not t.startswith("-")), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        sub = _subparser(parser, command)
    except KeyError:
        return parser.parse_args(argv)
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    known = {a.dest for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(data) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    for key, val in data.items():
        if isinstance(val, (int, float)) and not isinstance(val, bool) and key not in _SIGNED and val <= 0:
            raise UsageError(f"config value {key} must be positive")
    for action in sub._actions:
        if action.dest in data:
            action.required = False
    sub.set_defaults(**data)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        run = Run(args)
        run.workers = workers_from_env()
        code = args.func(args, run)
        run.manifest()
        return code
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, NeuronLabError, ValueError) as exc:
        print(f"neuronlab {getattr(parser, 'prog', '')}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"neuronlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
