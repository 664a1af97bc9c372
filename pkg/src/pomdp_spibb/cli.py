"""Command-line entry point: ``pomdp-spibb <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .behavior import save_qtable, train_behavior, write_training_log
from .bounds import sufficiency_count, zeta_bound
from .data import collect_dataset, load_dataset, save_dataset
from .environments import get_env
from .evaluation import rollout_performance
from .experiment import FULL_N_WEDGE, ExperimentConfig, improve, run_experiment
from .fsc import load_fsc, save_fsc


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _json_safe(x):
    if isinstance(x, float) and (math.isinf(x) or math.isnan(x)):
        return str(x)
    return x


def cmd_train(args) -> None:
    env = get_env(args.env)
    fsc, q = train_behavior(env, args.k, args.tau, seed=args.seed, episodes=args.episodes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_fsc(fsc, out / "behavior.json")
    save_qtable(q, out / "qtable.json")
    write_training_log(q, out / "training_log.csv")
    print(f"wrote {out / 'behavior.json'}")


def cmd_collect(args) -> None:
    env = get_env(args.env)
    behavior = load_fsc(args.behavior)
    data = collect_dataset(env, behavior, args.trajectories, args.max_steps,
                           np.random.default_rng(args.seed), behavior_id=str(args.behavior))
    data.meta["seed"] = args.seed
    save_dataset(data, args.out)
    print(f"wrote {len(data)} steps from {args.trajectories} trajectories to {args.out}")


def cmd_improve(args) -> None:
    env = get_env(args.env)
    behavior = load_fsc(args.behavior)
    dataset = load_dataset(args.data)
    n_wedge = 0 if args.algorithm == "basic_rl" else args.n_wedge
    policy, report, n_unknown = improve(env, behavior, dataset, n_wedge, args.k_prime, args.delta,
                                        args.v_max)
    save_fsc(policy, args.out)
    Path(str(args.out) + ".report.json").write_text(report.to_json())
    print(report.to_json())


def cmd_evaluate(args) -> None:
    env = get_env(args.env)
    perf = rollout_performance(env, load_fsc(args.policy), args.episodes, args.max_steps,
                               rng=np.random.default_rng(args.seed))
    print(json.dumps({"mean": perf.mean, "stderr": perf.stderr, "episodes": args.episodes}))


def cmd_bound(args) -> None:
    rep = zeta_bound(args.variant, args.states, args.actions, args.observations, args.n_wedge,
                     args.delta, args.v_max, args.gamma, args.rho_improved, args.rho_behavior)
    out = {"epsilon": rep.epsilon, "zeta": rep.zeta}
    if args.zeta is not None:
        out["sufficiency_count"] = sufficiency_count(args.zeta, args.delta, args.states,
                                                     args.actions, args.v_max, args.gamma,
                                                     support_exp=args.observations)
    print(json.dumps({k: _json_safe(v) for k, v in out.items()}))


def cmd_experiment(args) -> None:
    kw = dict(env=args.env, k=args.k, seed=args.seed, delta=args.delta, workers=args.workers,
              out=args.out, max_steps=args.max_steps)
    for name in ("k_prime_grid", "n_wedge_grid", "sizes"):
        val = getattr(args, name)
        if val is not None:
            kw[name] = _ints(val)
    for name in ("repetitions", "eval_episodes", "tau"):
        val = getattr(args, name)
        if val is not None:
            kw[name] = val
    cfg = ExperimentConfig.full_scale(**kw) if args.full_scale else ExperimentConfig(**kw)
    report = run_experiment(cfg, behavior=load_fsc(args.behavior) if args.behavior else None)
    print(f"behavior rho={report.behavior_rho:.4f}  max rho={report.max_rho:.4f}")
    for r in report.summary:
        print(f"{r['algorithm']:>8} k'={r['k_prime']} N={r['n_wedge']:>3} size={r['size']:>5}  "
              f"mean={r['mean']:.4f}  cvar10={r['cvar10']:.4f}  cvar1={r['cvar1']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pomdp-spibb", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, env=True):
        if env:
            sp.add_argument("--env", default="tiger",
                            help="cheesemaze, tiger, voicemail or file:<path.json>")
        sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = common(sub.add_parser("train-behavior", help="Q-learning + softmax behavior FSC"))
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--episodes", type=int, default=5000)
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("collect", help="simulate a dataset under a behavior FSC"))
    sp.add_argument("--behavior", required=True)
    sp.add_argument("--trajectories", type=int, default=100)
    sp.add_argument("--max-steps", type=int, default=300)
    sp.add_argument("--out", required=True, help="dataset CSV path (meta goes to <out>.json)")
    sp.set_defaults(func=cmd_collect)

    sp = common(sub.add_parser("improve", help="compute an improved FSC from a dataset"))
    sp.add_argument("--behavior", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--algorithm", choices=("spibb", "basic_rl"), default="spibb")
    sp.add_argument("--n-wedge", type=int, default=20)
    sp.add_argument("--k-prime", type=int, default=None)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--v-max", type=float, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_improve)

    sp = common(sub.add_parser("evaluate", help="Monte Carlo performance of an FSC"))
    sp.add_argument("--policy", required=True)
    sp.add_argument("--episodes", type=int, default=2000)
    sp.add_argument("--max-steps", type=int, default=300)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bound", help="evaluate ζ, ε and the sufficiency count")
    sp.add_argument("--variant", choices=("finite-history", "history"), default="finite-history")
    sp.add_argument("--states", type=float, required=True, help="|N×Z|, or a proxy for |H|")
    sp.add_argument("--actions", type=int, required=True)
    sp.add_argument("--observations", type=int, required=True)
    sp.add_argument("--n-wedge", type=int, required=True)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--v-max", type=float, required=True)
    sp.add_argument("--gamma", type=float, default=0.95)
    sp.add_argument("--rho-improved", type=float, default=0.0)
    sp.add_argument("--rho-behavior", type=float, default=0.0)
    sp.add_argument("--zeta", type=float, default=None, help="also report the sufficiency count")
    sp.set_defaults(func=cmd_bound)

    sp = common(sub.add_parser("experiment", help="run the evaluation grid"))
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--k-prime-grid", default=None, help="comma list, default k,k+1")
    sp.add_argument("--n-wedge-grid", default=None,
                    help="comma list, default " + ",".join(map(str, FULL_N_WEDGE)))
    sp.add_argument("--sizes", default=None, help="comma list of trajectory counts")
    sp.add_argument("--repetitions", type=int, default=None)
    sp.add_argument("--eval-episodes", type=int, default=None)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--max-steps", type=int, default=300)
    sp.add_argument("--behavior", default=None, help="use this FSC instead of training one")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--full-scale", "--paper-scale", dest="full_scale", action="store_true",
                    help="500 repetitions, 10000 eval episodes, full size and N∧ grids")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
