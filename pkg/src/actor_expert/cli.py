"""Command-line front end: train, eval, sweep, and verify-theory."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from .agents import load_agent
from .config import apply_overrides, load_config
from .harness import emit_results, evaluate, sweep, train
from .nn import ContractError, NumericError
from .theory import SUITES, run_all, run_suite

__all__ = ["main"]


def _seed_list(text: str) -> list[int]:
    """Parse 'a..b' (inclusive) or a single integer."""
    if ".." in text:
        first, _, last = text.partition("..")
        try:
            lo, hi = int(first), int(last)
        except ValueError as err:
            raise ContractError(f"bad seed range {text!r}; expected a..b") from err
        if hi < lo:
            raise ContractError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    try:
        return [int(text)]
    except ValueError as err:
        raise ContractError(f"bad seed {text!r}") from err


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actor-expert",
        description="Train and evaluate continuous-action agents, or run the "
        "theory verification suites.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one seed and emit result files")
    p_train.add_argument("--config", required=True, help="key = value config file")
    p_train.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_train.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="config override, repeatable",
    )

    p_eval = sub.add_parser("eval", help="evaluate a saved agent snapshot")
    p_eval.add_argument("--snapshot", required=True, help="path to a seed<k>.npz file")
    p_eval.add_argument("--env", default=None, help="environment (default: the snapshot's)")
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="run several seeds and emit joint results")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--seeds", required=True, help="inclusive range a..b or one seed")
    p_sweep.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="config override, repeatable",
    )

    p_theory = sub.add_parser("verify-theory", help="run the analysis checks")
    p_theory.add_argument("--suite", default=None, choices=sorted(SUITES))
    return parser


def _load(args):
    cfg = apply_overrides(load_config(args.config), args.override)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg.validate()


def _run(args) -> int:
    if args.command == "train":
        cfg = _load(args)
        rows = train(cfg)
        paths = emit_results(cfg, rows)
        last = rows[-1]
        print(f"seed {last.seed}: final mean return {last.mean_return:.4f} "
              f"(sd {last.sd_return:.4f}) at step {last.step}")
        print(f"wrote {paths['curve']}, {paths['config']}, {paths['plot']}")
        return 0

    if args.command == "eval":
        agent, env_name = load_agent(args.snapshot, args.env)
        if args.episodes < 1:
            raise ContractError(f"episodes must be >= 1, got {args.episodes}")
        mean, sd = evaluate(agent, env_name, args.episodes, np.random.default_rng(args.seed))
        print(f"{env_name}: mean return {mean:.6f} (sd {sd:.6f}) "
              f"over {args.episodes} greedy episodes")
        return 0

    if args.command == "sweep":
        cfg = _load(args)
        seeds = _seed_list(args.seeds)
        rows = sweep(cfg, seeds)
        paths = emit_results(cfg, rows)
        finals = [r for r in rows if r.step == max(q.step for q in rows if q.seed == r.seed)]
        mean = float(np.mean([r.mean_return for r in finals]))
        print(f"{len(seeds)} seeds: mean final return {mean:.4f}")
        print(f"wrote {paths['curve']}, {paths['config']}, {paths['plot']}")
        return 0

    reports = [run_suite(args.suite)] if args.suite else run_all()
    failed = 0
    for report in reports:
        status = "PASS" if report.passed else "FAIL"
        failed += not report.passed
        print(f"{status} {report.name}: {report.detail}")
    return 1 if failed else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return _run(args)
    except (ContractError, NumericError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
