"""Command line entry point: plan, train, sweep, oracle, export-env, validate."""

from __future__ import annotations

import argparse
import json
import sys
import typing
from dataclasses import fields

import numpy as np

from . import harness, planner, teamgrid
from .core import OptionPool, load_model, save_model, validate_model
from .doc import LearnerConfig


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _opt_int(text: str):
    return None if text.lower() == "none" else int(text)


def _opt_str(text: str):
    return None if text.lower() == "none" else text


_SKIP = {"seeds", "out_dir", "broadcast_mode", "learner"}


def _field_type(f):
    t = f.type if not isinstance(f.type, str) else f.type
    t = str(t)
    if t.startswith("bool"):
        return _bool
    if "int | None" in t:
        return _opt_int
    if "str | None" in t:
        return _opt_str
    if t.startswith("int"):
        return int
    if t.startswith("float"):
        return float
    if t.startswith("str"):
        return str
    return None


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment fields (override the config file)")
    for f in fields(harness.ExperimentConfig):
        if f.name in _SKIP:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name == "actions":
            g.add_argument(flag, type=int, nargs="+", default=None, help="learner action subset")
            continue
        g.add_argument(flag, type=_field_type(f), default=None)
    g = p.add_argument_group("learner fields (override the config file)")
    for f in fields(LearnerConfig):
        g.add_argument("--" + f.name.replace("_", "-"), dest="learner__" + f.name,
                       type=_field_type(f), default=None)


def _config_from_args(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    for f in fields(harness.ExperimentConfig):
        if f.name in _SKIP:
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    for f in fields(LearnerConfig):
        v = getattr(args, "learner__" + f.name, None)
        if v is not None:
            setattr(cfg.learner, f.name, v)
    cfg.seeds = list(args.seed)
    cfg.out_dir = args.out
    cfg.broadcast_mode = args.broadcast_mode
    # re-run dataclass validation on the learner after overrides
    cfg.learner = LearnerConfig(**{f.name: getattr(cfg.learner, f.name) for f in fields(LearnerConfig)})
    cfg.validate()
    return cfg


def _make_pool(model, kind: str, num_options: int, seed: int) -> OptionPool:
    if kind == "primitive":
        return OptionPool.primitive(model)
    if kind == "uniform":
        return OptionPool.for_model(model, num_options)
    if kind == "random":
        rng = np.random.default_rng(seed)
        pool = OptionPool.for_model(model, num_options)
        for j in range(model.num_agents):
            pool.theta[j][...] = rng.normal(size=pool.theta[j].shape)
            pool.eps[j][...] = rng.normal(size=pool.eps[j].shape)
            pool.phi[j][...] = rng.normal(size=pool.phi[j].shape)
        return pool
    raise ValueError(f"unknown pool kind {kind!r}")


def _add_pool_flags(p):
    p.add_argument("--pool", choices=("primitive", "uniform", "random"), default="primitive")
    p.add_argument("--num-options", type=int, default=2, help="options per agent for uniform/random pools")
    p.add_argument("--pool-seed", type=int, default=0)


def cmd_plan(args) -> int:
    model = load_model(args.model)
    pool = _make_pool(model, args.pool, args.num_options, args.pool_seed)
    vt = planner.plan(model, pool, args.belief_mode, depth_cap=args.depth_cap, tol=args.tol,
                      max_size=args.max_beliefs, mode=args.broadcast_mode)
    rep = planner.planner_report(vt, pool)
    if args.out:
        planner.write_report(vt, pool, args.out)
    print(f"beliefs={rep['num_beliefs']} closed={rep['closed']} iterations={rep['iterations']} "
          f"V(b0)={rep['value_at_initial']!r}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    res = harness.run(cfg)
    print(json.dumps(res["summary"], indent=1, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    values = [float(v) if args.axis == "broadcast_penalty" else int(v) for v in args.values]
    table = harness.sweep(cfg, args.axis, values)
    for row in table:
        print(f"{row['axis']}={row['value']}: return {row['final_return_mean']:.4f} "
              f"+- {row['final_return_std']:.4f}, broadcast rate {row['final_broadcast_rate_mean']:.4f}")
    return 0


def _policy_from_report(report: dict, model, pool: OptionPool):
    """State-indexed reselection policy from Dirac beliefs of a planner report."""
    pol = np.zeros(model.num_states, dtype=int)
    for b, comps in zip(report["beliefs"], report["policy"]):
        if len(b) == 1:
            (s, p), = b.items()
            if abs(p - 1.0) < 1e-9:
                pol[int(s)] = pool.joint(comps).index
    first = pool.joint(report["policy"][0]).index
    return pol, first


def cmd_oracle(args) -> int:
    model = load_model(args.model)
    pool = _make_pool(model, args.pool, args.num_options, args.pool_seed)
    if args.report:
        with open(args.report) as fh:
            pol, first = _policy_from_report(json.load(fh), model, pool)
    else:
        pol, first = np.full(model.num_states, args.joint_option, dtype=int), args.joint_option
    rng = np.random.default_rng(args.seed)
    mean, se = harness.oracle_evaluate(model, pool, pol, args.episodes, rng, args.broadcast_mode,
                                       initial_option=first)
    print(f"return {mean!r} stderr {se!r}")
    return 0


def cmd_export(args) -> int:
    spec = teamgrid.make_env(args.env, args.num_agents, args.num_goals, args.size,
                             args.max_steps, args.layout_seed)
    model = teamgrid.export_tabular(spec, args.discount, args.observation,
                                    broadcast_penalty=args.broadcast_penalty)
    save_model(model, args.out)
    if args.spec_out:
        teamgrid.save_spec(spec, args.spec_out)
    print(f"exported {model.num_states} joint states, {model.num_actions} joint actions to {args.out}")
    return 0


def cmd_validate(args) -> int:
    if args.config:
        try:
            harness.load_config(args.config).validate()
        except (ValueError, TypeError) as e:
            print(e)
            return 1
        print("config ok")
        return 0
    problems = validate_model(load_model(args.model))
    for p in problems:
        print(p)
    if problems:
        return 1
    print("model ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="teamoc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="belief-space value iteration on a tabular model")
    p.add_argument("--model", required=True)
    _add_pool_flags(p)
    p.add_argument("--belief-mode", choices=("exact-broadcast", "reachable-capped"), default="exact-broadcast")
    p.add_argument("--broadcast-mode", choices=("always", "intermittent", "never"), default=None)
    p.add_argument("--depth-cap", type=int, default=50)
    p.add_argument("--max-beliefs", type=int, default=20000)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None, help="JSON report path")
    p.set_defaults(func=cmd_plan)

    for name, fn, helptext in (("train", cmd_train, "train one configuration over seeds"),
                               ("sweep", cmd_sweep, "train once per value of one axis")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--seed", type=int, nargs="+", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--broadcast-mode", choices=("always", "intermittent", "never"), required=True)
        if name == "sweep":
            p.add_argument("--axis", choices=harness.SWEEP_AXES, required=True)
            p.add_argument("--values", nargs="+", required=True)
        _add_config_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("oracle", help="Monte-Carlo evaluation of a fixed option policy")
    p.add_argument("--model", required=True)
    _add_pool_flags(p)
    p.add_argument("--report", default=None, help="planner report whose policy is evaluated")
    p.add_argument("--joint-option", type=int, default=0, help="constant joint option when no report is given")
    p.add_argument("--broadcast-mode", choices=("always", "intermittent", "never"), default="always")
    p.add_argument("--episodes", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export-env", help="write a grid layout as a tabular model")
    p.add_argument("--env", choices=("fourrooms", "switch", "dualswitch"), required=True)
    p.add_argument("--num-agents", type=int, default=2)
    p.add_argument("--num-goals", type=int, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--layout-seed", type=int, default=0)
    p.add_argument("--discount", type=float, default=0.95)
    p.add_argument("--observation", choices=("state", "view"), default="state")
    p.add_argument("--broadcast-penalty", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--spec-out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("validate", help="check a model file or an experiment config")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--config")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: typing.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
