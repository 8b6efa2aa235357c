"""Command-line entry point: ``rsolab <command> [options]``.

Exit status is 0 on success, 1 when a checked invariant fails and 2 on
usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .discretize import parse_grid
from .envs import ENVS, env_constants, make_env
from .harness import (
    ABLATION_OPERATORS,
    DEFAULT_OPERATORS,
    PRESETS,
    ExperimentConfig,
    ablation_beta,
    operator_slug,
    run_experiment,
    summarize,
)
from .mdp import bellman_residual, exact_q_star, load_mdp, m2, random_mdp, state_values
from .operators import Consistent, parse_operator
from .order import (
    check_convex_order,
    check_stochastic_order,
    ecdf,
    gap_distribution,
)
from .viter import convergence_report, geometric_tail_check, iterate_operator, trace_rows

log = logging.getLogger("rsolab")


class InvariantFailure(Exception):
    """A run finished but one of its checked properties does not hold."""


def _fmt(v) -> str:
    return repr(float(v))


def _out_path(args, default: str) -> Path:
    return Path(args.out if args.out is not None else default)


# --------------------------------------------------------------------------
# MDP sources
# --------------------------------------------------------------------------


def _add_mdp_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mdp", metavar="FILE", help="MDP JSON file")
    g.add_argument("--random-mdp", type=int, metavar="SEED", help="draw a random MDP with this seed")
    g.add_argument("--m2", action="store_true", help="built-in two-state test MDP (default)")
    p.add_argument("--states", type=int, default=5, help="states for --random-mdp")
    p.add_argument("--actions", type=int, default=3, help="actions for --random-mdp")
    p.add_argument("--gamma", type=float, default=0.9, help="discount for --random-mdp")


def _load_mdp_source(args):
    if args.mdp:
        return load_mdp(args.mdp)
    if args.random_mdp is not None:
        return random_mdp(args.random_mdp, args.states, args.actions, args.gamma)
    return m2()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_solve(args) -> None:
    mdp = load_mdp(args.file)
    q = exact_q_star(mdp, tol=args.tol)
    residual = bellman_residual(mdp, q)
    result = {
        "q_star": q.tolist(),
        "v_star": state_values(q).tolist(),
        "policy": [int(a) for a in np.argmax(q, axis=1)],
        "residual": residual,
    }
    text = json.dumps(result, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if residual > args.tol:
        raise InvariantFailure(f"Bellman residual {residual:.3e} exceeds {args.tol:.1e}")


def cmd_viter(args) -> None:
    mdp = _load_mdp_source(args)
    kind = parse_operator(args.operator)
    _, trace = iterate_operator(mdp, kind, mdp.zeros_q(), args.k_max, args.seed, args.stride)

    header = ["k", "sup_delta"] + [f"gap_{x}_{a}" for x in range(mdp.n_states) for a in range(mdp.n_actions)]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, delta, gaps in trace_rows(trace):
            w.writerow([k, _fmt(delta)] + [_fmt(g) for g in gaps])
    finally:
        if fh is not sys.stdout:
            fh.close()

    report = convergence_report(trace, exact_q_star(mdp))
    tail_ok = geometric_tail_check(trace, mdp.gamma)
    print(
        f"{kind}: k={trace.k_max} max |V_k - V*| = {report.max_value_error:.3e}, "
        f"geometric tail {'ok' if tail_ok else 'VIOLATED'}",
        file=sys.stderr,
    )
    # The consistent operator contracts in Q rather than V, so the bound is informational there.
    if not tail_ok and not isinstance(kind, Consistent):
        raise InvariantFailure("geometric-tail inequality violated")


def cmd_verify_order(args) -> None:
    mdp = _load_mdp_source(args)
    hat_kind, tilde_kind = parse_operator(args.hat), parse_operator(args.tilde)
    pair = tuple(args.pair)
    hat = gap_distribution(mdp, hat_kind, pair, args.trials, args.k_max, args.seed)
    tilde = gap_distribution(mdp, tilde_kind, pair, args.trials, args.k_max, args.seed + args.trials)

    verdicts = {}
    if args.order in ("stochastic", "both"):
        verdicts["stochastic"] = check_stochastic_order(hat, tilde)
    if args.order in ("convex", "both"):
        verdicts["convex"] = check_convex_order(hat, tilde)

    print(f"pair {pair}, {args.trials} trials each, k_max {args.k_max}")
    print(f"  hat   {hat_kind}: mean gap {hat.mean:.6f}")
    print(f"  tilde {tilde_kind}: mean gap {tilde.mean:.6f}")
    for name, v in verdicts.items():
        print(f"{name} order hat >= tilde: {v}")

    points = np.union1d(hat.values, tilde.values)
    with open(_out_path(args, "order_cdf.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "F_hat", "F_tilde"])
        for t, fh_, ft in zip(points, ecdf(hat.values, points), ecdf(tilde.values, points)):
            w.writerow([_fmt(t), _fmt(fh_), _fmt(ft)])

    failed = [name for name, v in verdicts.items() if not v]
    if failed:
        raise InvariantFailure(f"order check failed: {', '.join(failed)}")


def _experiment_config(args, operators_default) -> ExperimentConfig:
    """Layer the environment preset, then the config file, then explicit flags."""
    file_cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    env = (args.env or file_cfg.get("env") or "mountaincar").lower()
    merged = dict(env=env, operators=list(operators_default), **PRESETS.get(env, {}))
    merged.update(file_cfg)
    flags = {
        "env": args.env,
        "operators": args.operators,
        "trials": args.trials,
        "episodes": args.episodes,
        "test_episodes": args.test_episodes,
        "window": args.window,
        "alpha": args.alpha,
        "epsilon": args.epsilon,
        "gamma": args.gamma,
        "grid": args.grid,
        "workers": args.workers,
        "base_seed": args.seed if args.seed_given else None,
        "out_dir": args.out,
    }
    merged.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig(**merged)


def _print_summary(rows) -> None:
    print(f"{'operator':<24} {'window mean':>12} {'test mean':>10} {'test std':>9} {'final gap':>10}")
    for r in rows:
        print(
            f"{r['operator']:<24} {r['window_mean']:>12.2f} {r['test_mean']:>10.2f} "
            f"{r['test_std']:>9.2f} {r['final_gap_mean']:>10.4f}"
        )


def cmd_qlearn(args) -> None:
    cfg = ExperimentConfig(
        env=args.env,
        operators=[args.operator],
        trials=args.trials,
        episodes=args.episodes,
        test_episodes=args.test_episodes,
        base_seed=args.seed,
        window=min(args.window, args.episodes),
        alpha=args.alpha,
        epsilon=args.epsilon,
        gamma=args.gamma,
        grid=args.grid,
        out_dir=str(_out_path(args, "runs/qlearn")),
    )
    results = run_experiment(cfg)
    d = Path(cfg.out_dir) / operator_slug(args.operator)
    for rec in results[args.operator]:
        np.save(d / f"q_{rec.seed}.npy", rec.q)
    _print_summary(summarize(cfg.out_dir, cfg))


def cmd_bench(args) -> None:
    cfg = _experiment_config(args, DEFAULT_OPERATORS)
    run_experiment(cfg)
    _print_summary(summarize(cfg.out_dir, cfg))


def cmd_ablate_beta(args) -> None:
    cfg = _experiment_config(args, ABLATION_OPERATORS)
    table = ablation_beta(cfg)
    for row in table:
        print(f"{row['metric']:<16} #{row['rank']} {row['operator']:<24} {row['value']:.4f}")


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS if suppress else 0, help="base random seed")
    p.add_argument("--out", default=default, help="output file or directory")
    p.add_argument("--config", default=default, metavar="FILE", help="JSON experiment config")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", choices=sorted(ENVS))
    p.add_argument("--operators", nargs="+", metavar="OP")
    p.add_argument("--trials", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--test-episodes", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--alpha", metavar="SCHEDULE")
    p.add_argument("--epsilon", metavar="SCHEDULE")
    p.add_argument("--gamma", type=float)
    p.add_argument("--grid", metavar="LO:HI:BINS,...")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rsolab {__version__}")
    parser.add_argument("--dump-env-constants", action="store_true", help="print environment constants and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("solve", help="exact Q* of an MDP file")
    p.add_argument("file")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("viter", help="synchronous operator iteration on a tabular MDP")
    _add_mdp_source(p)
    p.add_argument("--operator", default="rso:uniform:0:2")
    p.add_argument("--k-max", type=int, default=1000)
    p.add_argument("--stride", type=int, default=10)
    p.set_defaults(func=cmd_viter)

    p = sub.add_parser("verify-order", help="empirical stochastic/convex order of tail gaps")
    _add_mdp_source(p)
    p.add_argument("--hat", default="rso:uniform:0:2", help="operator expected to dominate")
    p.add_argument("--tilde", default="rso:uniform:0:1")
    p.add_argument("--pair", type=int, nargs=2, default=[0, 1], metavar=("X", "A"))
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--order", choices=["stochastic", "convex", "both"], default="stochastic")
    p.set_defaults(func=cmd_verify_order)

    p = sub.add_parser("qlearn", help="tabular Q-learning on a classic-control task")
    p.add_argument("--env", choices=sorted(ENVS), default="mountaincar")
    p.add_argument("--operator", default="rso:uniform:0:2")
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--test-episodes", type=int, default=0)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--alpha", default="constant:0.1", metavar="SCHEDULE")
    p.add_argument("--epsilon", default="constant:0.1", metavar="SCHEDULE")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--grid", metavar="LO:HI:BINS,...")
    p.set_defaults(func=cmd_qlearn)

    p = sub.add_parser("bench", help="paired multi-trial experiment")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate-beta", help="compare RSO beta distributions")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_ablate_beta)

    for name, sp in sub.choices.items():
        _global_options(sp, suppress=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    raw = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(raw)
    args.seed_given = any(a == "--seed" or a.startswith("--seed=") for a in raw)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")

    if args.dump_env_constants:
        print(json.dumps({name: env_constants(make_env(name)) for name in sorted(ENVS)}, indent=1))
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    if getattr(args, "grid", None):
        try:
            parse_grid(args.grid)
        except ValueError as err:
            parser.error(str(err))
    try:
        args.func(args)
    except InvariantFailure as err:
        print(f"rsolab: invariant failed: {err}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, FileNotFoundError) as err:
        print(f"rsolab: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
