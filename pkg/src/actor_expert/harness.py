"""Training loop, offline evaluation, multi-seed sweeps, and result files.

Every source of randomness in a run comes from one of four named streams
spawned from the run seed (init, env, policy, buffer), so a (config, seed)
pair fully determines the transition stream and the emitted CSV. Evaluation
draws from its own per-(seed, step) generator and so never advances the
training streams, no matter how often it runs.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import agents, envs
from .config import ExperimentConfig, format_config
from .nn import ContractError, NumericError
from .plotting import render_curve
from .replay import ReplayBuffer, Transition

__all__ = ["EvalRow", "train", "evaluate", "sweep", "emit_results", "run_dir_for"]

log = logging.getLogger(__name__)

_STREAMS = ("init", "env", "policy", "buffer")
_EVAL_SALT = 9781


class EvalRow(NamedTuple):
    step: int
    seed: int
    mean_return: float
    sd_return: float


def _rng_streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def run_dir_for(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out_dir) / f"{cfg.env}-{cfg.agent}"


def evaluate(agent, env_name: str, episodes: int, rng) -> tuple[float, float]:
    """Mean and sd of undiscounted return over greedy-only episodes.

    Episodes run in lockstep so the batched greedy pass is shared; both
    environments have a fixed episode length, so no row outlives another.
    """
    if episodes < 1:
        raise ContractError(f"episodes must be >= 1, got {episodes}")
    pool = [envs.make_env(env_name) for _ in range(episodes)]
    obs = np.stack([e.reset(rng) for e in pool])
    totals = np.zeros(episodes)
    live = np.ones(episodes, dtype=bool)
    while live.any():
        actions = agent.greedy_batch(obs, rng)
        for i, env in enumerate(pool):
            if not live[i]:
                continue
            res = env.step(actions[i])
            totals[i] += res.reward
            obs[i] = res.obs
            live[i] = not (res.terminal or res.truncated)
    return float(totals.mean()), float(totals.std())


def _eval_row(cfg: ExperimentConfig, agent, seed: int, step: int) -> EvalRow:
    rng = np.random.default_rng((seed, _EVAL_SALT, step))
    mean, sd = evaluate(agent, cfg.env, cfg.eval_episodes, rng)
    if not (np.isfinite(mean) and np.isfinite(sd)):
        raise NumericError(
            f"run aborted: evaluation at step {step} produced non-finite return {mean}"
        )
    return EvalRow(step, seed, mean, sd)


def _write_row(writer, fh, row: EvalRow) -> None:
    # repr round-trips floats exactly through the CSV
    writer.writerow([row.step, row.seed, repr(row.mean_return), repr(row.sd_return)])
    fh.flush()


def train(cfg: ExperimentConfig, seed: int | None = None, run_dir=None) -> list[EvalRow]:
    """One training run; returns its evaluation rows.

    Writes seed<k>.csv incrementally (a crashed run keeps its rows so far)
    and a final parameter snapshot seed<k>.npz into the run directory.
    """
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    env = envs.make_env(cfg.env)
    spec = env.spec
    rngs = _rng_streams(seed)
    agent = agents.make_agent(cfg, spec, rngs["init"])
    buf = ReplayBuffer(cfg.buffer_capacity, spec.obs_dim, spec.action_dim)
    run_dir = Path(run_dir) if run_dir is not None else run_dir_for(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)

    stop_early = not math.isnan(cfg.stop_at_return)
    rows: list[EvalRow] = []
    obs = np.asarray(env.reset(rngs["env"]), dtype=np.float64)
    with open(run_dir / f"seed{seed}.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "seed", "mean_return", "sd_return"])
        stopped = False
        for t in range(cfg.total_steps):
            if t % cfg.eval_period == 0:
                row = _eval_row(cfg, agent, seed, t)
                rows.append(row)
                _write_row(writer, fh, row)
                log.info("seed %d step %d mean return %.3f", seed, t, row.mean_return)
                if stop_early and row.mean_return >= cfg.stop_at_return:
                    stopped = True
                    break
            if t < cfg.warmup_steps:
                action = rngs["policy"].uniform(spec.action_low, spec.action_high)
            else:
                action = agent.explore(obs, rngs["policy"])
            action = np.asarray(action, dtype=np.float64).reshape(spec.action_dim)
            res = env.step(action)
            # a time-limit cut is not a terminal: the bootstrap term survives
            buf.push(Transition(obs, action, res.reward, res.obs, res.terminal))
            if res.terminal or res.truncated:
                obs = np.asarray(env.reset(rngs["env"]), dtype=np.float64)
            else:
                obs = np.asarray(res.obs, dtype=np.float64)
            if t + 1 >= cfg.warmup_steps and len(buf) >= cfg.batch_size:
                agent.update(buf.sample(cfg.batch_size, rngs["buffer"]), rngs["policy"])
        if not stopped:
            row = _eval_row(cfg, agent, seed, cfg.total_steps)
            rows.append(row)
            _write_row(writer, fh, row)
            log.info("seed %d final mean return %.3f", seed, row.mean_return)
    agents.save_agent(agent, cfg, run_dir / f"seed{seed}.npz")
    return rows


def sweep(cfg: ExperimentConfig, seeds, run_dir=None, max_workers: int | None = None) -> list[EvalRow]:
    """Run train once per seed on worker threads; rows come back seed-ordered."""
    seeds = list(seeds)
    if not seeds:
        raise ContractError("sweep needs at least one seed")
    if max_workers is None:
        max_workers = min(len(seeds), 4)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(train, cfg, seed, run_dir) for seed in seeds]
        results = [f.result() for f in futures]
    return [row for per_seed in results for row in per_seed]


def emit_results(cfg: ExperimentConfig, rows, out_dir=None) -> dict:
    """Write curve.csv, config.echo, and curve.svg; returns their paths."""
    rows = list(rows)
    if not rows:
        raise ContractError("no evaluation rows to emit")
    out = Path(out_dir) if out_dir is not None else run_dir_for(cfg)
    out.mkdir(parents=True, exist_ok=True)
    curve = out / "curve.csv"
    with open(curve, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "seed", "mean_return", "sd_return"])
        for row in rows:
            _write_row(writer, fh, row)
    echo = out / "config.echo"
    echo.write_text(format_config(cfg), encoding="utf-8")
    plot = out / "curve.svg"
    render_curve(rows, plot, title=f"{cfg.env} / {cfg.agent}")
    return {"curve": curve, "config": echo, "plot": plot}
