"""Command line entry point: ``droprl <subcommand> ...``.

Exit status is 0 on success, 2 when an input fails validation and 1 on any
other error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as exp
from .drop import DropConfig, drop
from .dropv import DropVConfig, run_pipeline
from .errors import ConfigError, ValidationError
from .model import load_instance, random_instance, save_instance
from .offline_data import generate, load_dataset, save_dataset
from .oracle import robust_value_iteration, suboptimality


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _load_policy(path):
    with open(path) as fh:
        return np.asarray(json.load(fh))


def _behavior(inst, name: str, epsilon: float):
    cfg = exp.ExperimentConfig(behavior=name, epsilon=epsilon)
    return exp.behavior_policy(inst, cfg)


def cmd_gen_instance(args) -> None:
    if args.benchmark:
        inst = exp.benchmark_instance(args.rho)
    else:
        inst = random_instance(args.seed, args.S, args.A, args.H, args.d, args.rho)
    if args.out:
        save_instance(inst, args.out)
    else:
        print(json.dumps(inst.to_json()))


def cmd_gen_data(args) -> None:
    inst = load_instance(args.instance)
    D = generate(inst, _behavior(inst, args.behavior, args.epsilon), args.K, args.seed)
    if not args.out:
        raise ConfigError("gen-data needs --out")
    save_dataset(D, args.out)


def cmd_fit(args) -> None:
    inst = load_instance(args.instance)
    rho = inst.rho if args.rho is None else args.rho
    inst = inst.with_rho(rho)
    D = load_dataset(args.data, inst.S, inst.A, inst.H, args.K)
    if args.solver == "drop":
        cfg = DropConfig(rho, D.K, args.delta, args.lambda0, args.gamma0)
        out, _ = drop(inst, D, cfg, args.seed)
    else:
        cfg = DropVConfig(rho, D.K, args.delta, args.lambda1, args.gamma1, args.lambda0, args.gamma0)
        out, _, _ = run_pipeline(inst, D, cfg, args.seed)
    _emit(out.dumps(), args.out)


def cmd_oracle(args) -> None:
    inst = load_instance(args.instance)
    if args.rho is not None:
        inst = inst.with_rho(args.rho)
    sol = robust_value_iteration(inst)
    pi = sol.pi if args.policy is None else _load_policy(args.policy)
    doc = sol.to_json()
    doc["subopt"] = suboptimality(inst, pi, sol)
    _emit(json.dumps(doc), args.out)


def _config_from_args(args) -> exp.ExperimentConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {
        "instance": args.instance, "solver": args.solver, "rho": args.rho, "K": args.K,
        "seeds": args.seeds, "delta": args.delta, "lambda0": args.lambda0, "gamma0": args.gamma0,
        "lambda1": args.lambda1, "gamma1": args.gamma1, "behavior": args.behavior,
        "epsilon": args.epsilon,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_timing:
        doc["timing"] = False
    return exp.ExperimentConfig.from_dict(doc)


def cmd_run(args) -> None:
    config = _config_from_args(args)
    if not args.out:
        raise ConfigError("run needs --out")
    exp.run(config, args.out, jobs=args.jobs)


def cmd_sweep(args) -> None:
    records = exp.read_csv(args.csv)
    solvers = sorted({r.solver for r in records})
    slopes = {s: exp.sweep_slope([r for r in records if r.solver == s]) for s in solvers}
    _emit(json.dumps({"slope": slopes}), args.out)


def cmd_diag(args) -> None:
    inst = load_instance(args.instance)
    report = exp.diagnose(inst, _behavior(inst, args.behavior, args.epsilon))
    _emit(json.dumps(report), args.out)


def cmd_plot(args) -> None:
    if not args.out:
        raise ConfigError("plot needs --out")
    exp.plot(args.csv, args.out)


def _floats(text):
    return [float(x) for x in text.split(",")]


def _ints(text):
    return [int(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="droprl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        return p

    def solver_flags(p, lists: bool):
        p.add_argument("--delta", type=float, default=None if lists else 0.1)
        p.add_argument("--lambda0", type=float, default=None if lists else 1.0)
        p.add_argument("--gamma0", type=float)
        p.add_argument("--lambda1", type=float)
        p.add_argument("--gamma1", type=float)

    def behavior_flags(p, default):
        p.add_argument("--behavior", choices=["uniform", "epsilon-greedy"], default=default)
        p.add_argument("--epsilon", type=float, default=None if default is None else 0.1)

    p = add("gen-instance", cmd_gen_instance, "write a random or benchmark instance")
    p.add_argument("--S", type=int, default=3)
    p.add_argument("--A", type=int, default=2)
    p.add_argument("--H", type=int, default=4)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--rho", type=float, default=0.2)
    p.add_argument("--benchmark", action="store_true")

    p = add("gen-data", cmd_gen_data, "roll out a behavior policy")
    p.add_argument("--instance", required=True)
    p.add_argument("--K", type=int, required=True)
    behavior_flags(p, "uniform")

    p = add("fit", cmd_fit, "run a solver on a dataset")
    p.add_argument("--instance", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--solver", choices=exp.SOLVERS, default="drop")
    p.add_argument("--rho", type=float)
    p.add_argument("--K", type=int, help="trajectory count (default: inferred)")
    solver_flags(p, lists=False)

    p = add("oracle", cmd_oracle, "exact robust solution and policy sub-optimality")
    p.add_argument("--instance", required=True)
    p.add_argument("--rho", type=float)
    p.add_argument("--policy", help="JSON (H, S) or (H, S, A) policy; default the optimum")

    p = add("run", cmd_run, "run an experiment grid to CSV")
    p.add_argument("--config")
    p.add_argument("--instance")
    p.add_argument("--solver", type=lambda t: t.split(","))
    p.add_argument("--rho", type=_floats)
    p.add_argument("--K", type=_ints)
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="record runtime_ms as 0")
    solver_flags(p, lists=True)
    behavior_flags(p, None)

    p = add("sweep", cmd_sweep, "log-log slope of median sub-optimality per solver")
    p.add_argument("--csv", required=True)

    p = add("diag", cmd_diag, "coverage diagnostics of a behavior policy")
    p.add_argument("--instance", required=True)
    behavior_flags(p, "uniform")

    p = add("plot", cmd_plot, "median sub-optimality against K as SVG")
    p.add_argument("--csv", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
