"""Command line front end for the experiment runners.

Subcommands: convergence, plan-eval, reward-spec, counterexample,
sensitivity, and learn (one-shot trajectory file in, recovered model JSON
out). Experiment subcommands accept --config with a JSON file produced by
config_to_json, with individual flags applied on top.
"""

import argparse
import json
import sys

from spectral_pomdp.experiments import (
    config_from_json,
    default_config,
    learn_model,
    load_trajectory,
    run_convergence,
    run_counterexample,
    run_planning_eval,
    run_reward_spec,
    run_sensitivity,
)
from spectral_pomdp.hankel import estimate_hankel
from spectral_pomdp.psr import extract_psr, psr_to_json, truncated_svd
from spectral_pomdp.recovery import RecoveryConfig, project_probabilities, \
    recover, recovered_to_json


def _int_list(text):
    return tuple(int(x) for x in text.split(","))


def _float_list(text):
    return tuple(float(x) for x in text.split(","))


def _seed_list(text):
    """Either a comma list ("0,1,2") or a range ("0:20")."""
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi)))
    return _int_list(text)


def _lengths_list(text):
    out = []
    for part in text.split(","):
        h, t = part.split("x")
        out.append((int(h), int(t)))
    return tuple(out)


def _add_experiment_args(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--domain")
    sub.add_argument("--sizes", type=_int_list)
    sub.add_argument("--seeds", type=_seed_list)
    sub.add_argument("--hist-len", type=int)
    sub.add_argument("--test-len", type=int)
    sub.add_argument("--inv-kappa", type=float)
    sub.add_argument("--sigma-min", type=float)
    sub.add_argument("--tau-obs", type=float)
    sub.add_argument("--max-components", type=int)
    sub.add_argument("--episode-steps", type=int)
    sub.add_argument("--outdir")
    sub.add_argument("--workers", type=int)
    sub.add_argument("--no-cache", action="store_true")
    sub.add_argument("--ucb-constant", type=float)
    sub.add_argument("--simulations-per-step", type=int)
    sub.add_argument("--max-depth", type=int)


_CONFIG_FLAGS = {
    "sizes": "sizes",
    "seeds": "seeds",
    "hist_len": "hist_len",
    "test_len": "test_len",
    "inv_kappa": "inv_kappa",
    "sigma_min": "sigma_min",
    "tau_obs": "tau_obs",
    "max_components": "max_components",
    "episode_steps": "episode_steps",
    "outdir": "outdir",
    "workers": "workers",
}


def _build_config(args, parser):
    if args.config:
        with open(args.config) as fh:
            config = config_from_json(fh.read())
    elif args.domain:
        config = default_config(args.domain)
    else:
        parser.error("either --config or --domain is required")
    for flag, field in _CONFIG_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(config, field, value)
    if args.no_cache:
        config.cache = False
    for flag in ("ucb_constant", "simulations_per_step", "max_depth"):
        value = getattr(args, flag)
        if value is not None:
            setattr(config.planner, flag, value)
    return config


def _print_summary(label, summary, outdir):
    print("%s written to %s" % (label, outdir))
    print(json.dumps({k: v for k, v in summary.items() if k != "config"},
                     indent=2, sort_keys=True))


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="spectral-pomdp",
        description="Spectral POMDP learning experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("convergence", "plan-eval", "reward-spec"):
        _add_experiment_args(sub.add_parser(name))

    counter = sub.add_parser("counterexample")
    counter.add_argument("--outdir")
    counter.add_argument("--num-strings", type=int, default=100)
    counter.add_argument("--seed", type=int, default=0)

    sens = sub.add_parser("sensitivity")
    sens.add_argument("--outdir", required=True)
    sens.add_argument("--states", type=_int_list, default=(4, 6))
    sens.add_argument("--lengths", type=_lengths_list,
                      default=((2, 1), (3, 2)))
    sens.add_argument("--inv-kappas", type=_float_list,
                      default=(0.1, 0.01, 0.001))
    sens.add_argument("--n", type=int, default=10**6)
    sens.add_argument("--seeds", type=_seed_list, default=(0, 1, 2, 3, 4))
    sens.add_argument("--sigma-min", type=float, default=0.01)
    sens.add_argument("--workers", type=int, default=1)
    sens.add_argument("--no-cache", action="store_true")

    learn = sub.add_parser("learn")
    learn.add_argument("--trajectory", required=True,
                       help="trajectory file (.npz or .json)")
    learn.add_argument("--out", required=True,
                       help="recovered model JSON output path")
    learn.add_argument("--psr-out", help="optional PSR JSON output path")
    learn.add_argument("--hist-len", type=int, required=True)
    learn.add_argument("--test-len", type=int, required=True)
    learn.add_argument("--inv-kappa", type=float, required=True)
    learn.add_argument("--sigma-min", type=float, required=True)
    learn.add_argument("--tau-obs", type=float, required=True)
    learn.add_argument("--max-components", type=int, default=20)
    learn.add_argument("--seed", type=int, default=0)
    learn.add_argument("--num-actions", type=int)
    learn.add_argument("--num-observations", type=int)

    args = parser.parse_args(argv)

    if args.command == "convergence":
        config = _build_config(args, parser)
        _, summary = run_convergence(config)
        _print_summary("convergence results", summary, config.outdir)
        return 0
    if args.command == "plan-eval":
        config = _build_config(args, parser)
        _, summary = run_planning_eval(config)
        _print_summary("planning evaluation", summary, config.outdir)
        return 0
    if args.command == "reward-spec":
        config = _build_config(args, parser)
        _, summary = run_reward_spec(config)
        _print_summary("reward specification results", summary,
                       config.outdir)
        return 0
    if args.command == "counterexample":
        report = run_counterexample(outdir=args.outdir,
                                    num_strings=args.num_strings,
                                    seed=args.seed)
        for key in ("hankel_max_diff", "float_transition_gap",
                    "max_string_gap", "strings_checked"):
            print("%s: %s" % (key, report[key]))
        print("PASS" if report["passed"] else "FAIL")
        return 0 if report["passed"] else 2
    if args.command == "sensitivity":
        _, summary = run_sensitivity(
            args.outdir, states=args.states, lengths_grid=args.lengths,
            inv_kappas=args.inv_kappas, n=args.n, seeds=args.seeds,
            sigma_min=args.sigma_min, cache=not args.no_cache,
            workers=args.workers)
        _print_summary("sensitivity sweep", summary, args.outdir)
        return 0
    if args.command == "learn":
        traj = load_trajectory(args.trajectory)
        est = estimate_hankel(traj, args.hist_len, args.test_len,
                              num_actions=args.num_actions,
                              num_observations=args.num_observations)
        fact = truncated_svd(est, args.inv_kappa, args.max_components,
                             seed=args.seed)
        psr = extract_psr(est, fact)
        rec = recover(psr, RecoveryConfig(sigma_min=args.sigma_min,
                                          tau_obs=args.tau_obs,
                                          seed=args.seed))
        projected = project_probabilities(rec)
        with open(args.out, "w") as fh:
            json.dump(recovered_to_json(projected), fh)
        if args.psr_out:
            with open(args.psr_out, "w") as fh:
                json.dump(psr_to_json(psr), fh)
        print("estimated rank: %d" % fact.rank)
        print("partition: %s" % (projected.partition,))
        print("model written to %s" % args.out)
        return 0
    parser.error("unknown command %r" % (args.command,))


if __name__ == "__main__":
    sys.exit(main())
