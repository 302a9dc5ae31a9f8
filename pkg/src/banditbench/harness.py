"""Experiment driver: seeded episodes, delayed-reward batching, grids, outputs.

An episode replays one shuffled pass over a round stream: select, pay the
realized reward, and buffer the observation; buffered observations reach the
policy only at delay-batch boundaries (and at the final round).  Grid runs
fan episodes out over a process pool capped by BANDITBENCH_THREADS.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import envs
from .data import BanditRound, ingest_csv, ingest_idx, parse_schema
from .policies import PolicyConfig, make_policy


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a round stream, a policy, and the run protocol."""

    dataset: str                    # synthetic-nonlinear | synthetic-linear |
                                    # mushroom-like | csv:<path> | idx:<imgs>,<labels>
    policy: PolicyConfig
    horizon: int
    repeats: int = 8
    base_seed: int = 0
    delay: int = 0                  # reward batch size; 0 = immediate feedback
    duplicate: bool = True
    n_arms: int = 4                 # synthetic streams only
    raw_dim: int = 8                # synthetic streams only
    noise_sd: float = 0.1
    schema: str | None = None       # csv datasets
    label_column: str | None = None
    reg_grid: tuple = ()
    nu_grid: tuple = ()
    eps_grid: tuple = ()

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class RegretTrace:
    """Per-round log of one episode plus its terminal regret."""

    algorithm: str
    seed: int
    rounds: list[dict] = field(default_factory=list, repr=False)

    @property
    def total_regret(self) -> float:
        return self.rounds[-1]["cum_regret"] if self.rounds else 0.0

    @property
    def cum_regret(self) -> np.ndarray:
        return np.array([r["cum_regret"] for r in self.rounds])


def build_rounds(config: ExperimentConfig, seed) -> list[BanditRound]:
    """Materialize the round stream for one episode seed."""
    name = config.dataset
    if name == "synthetic-nonlinear":
        return envs.synthetic_nonlinear(config.n_arms, config.raw_dim,
                                        config.horizon, seed, config.noise_sd)
    if name == "synthetic-linear":
        return envs.synthetic_linear(config.n_arms, config.raw_dim,
                                     config.horizon, seed, config.noise_sd)
    if name == "mushroom-like":
        dataset = envs.mushroom_like()
    elif name.startswith("csv:"):
        if config.schema is None:
            raise ValueError("csv datasets need a schema file")
        types, label = parse_schema(config.schema)
        dataset = ingest_csv(name[4:], config.label_column or label, types)
    elif name.startswith("idx:"):
        images, _, labels = name[4:].partition(",")
        dataset = ingest_idx(images, labels)
    else:
        raise ValueError(f"unknown dataset {name!r}")
    return envs.dataset_rounds(dataset, seed, config.horizon, config.duplicate)


def run_episode(config: ExperimentConfig, repeat_index: int) -> RegretTrace:
    """One fully seeded pass; deterministic given (config, repeat_index)."""
    seed = config.base_seed ^ repeat_index
    rounds = build_rounds(config, seed)
    input_dim = rounds[0].contexts.shape[1]
    policy = make_policy(config.policy, input_dim, seed)

    trace = RegretTrace(config.policy.algorithm, seed)
    buffer: list[tuple[np.ndarray, float]] = []
    cum = 0.0
    T = config.horizon
    batch = max(config.delay, 1)
    for t, rnd in enumerate(rounds[:T], start=1):
        t_start = time.perf_counter_ns()
        decision = policy.select(rnd.contexts)
        reward = float(rnd.rewards[decision.arm])
        cum += float(np.max(rnd.expected_rewards) - rnd.expected_rewards[decision.arm])
        buffer.append((rnd.contexts[decision.arm], reward))
        if t % batch == 0 or t == T:
            for ctx, r in buffer:
                policy.observe(ctx, r)
            buffer.clear()
        trace.rounds.append({
            "t": t,
            "arm": decision.arm,
            "reward": reward,
            "regret": cum - (trace.rounds[-1]["cum_regret"] if trace.rounds else 0.0),
            "cum_regret": cum,
            "sigma": float(decision.sigmas[decision.arm]),
            "wall_us": (time.perf_counter_ns() - t_start) // 1000,
        })
    return trace


def _episode_task(args):
    config, repeat = args
    return run_episode(config, repeat)


def _pool_size() -> int:
    cap = os.environ.get("BANDITBENCH_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(int(cap), 1))
    return n


def run_repeats(config: ExperimentConfig, parallel: bool = True) -> list[RegretTrace]:
    """All repeats of one configuration, optionally over a process pool."""
    tasks = [(config, i) for i in range(config.repeats)]
    workers = _pool_size()
    if not parallel or workers == 1 or config.repeats == 1:
        return [run_episode(c, i) for c, i in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, config.repeats)) as pool:
        return list(pool.map(_episode_task, tasks))


def summarize(traces: list[RegretTrace]) -> dict:
    """Terminal-regret statistics and the per-round mean curve with its band."""
    finals = np.array([tr.total_regret for tr in traces])
    curves = np.stack([tr.cum_regret for tr in traces])
    n = len(traces)
    std = float(np.std(finals, ddof=1)) if n > 1 else 0.0
    band = curves.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(curves.shape[1])
    return {
        "n_repeats": n,
        "mean": float(finals.mean()),
        "std": std,
        "stderr": std / np.sqrt(n),
        "curve_mean": curves.mean(axis=0),
        "curve_stderr": band,
    }


def run_grid(config: ExperimentConfig, parallel: bool = True):
    """Cartesian sweep over the reg/nu/eps grids; returns (table, best_row).

    Every cell is reported; the best cell has the smallest mean terminal
    regret, ties broken toward smaller nu, then smaller reg, then smaller eps.
    """
    regs = config.reg_grid or (config.policy.reg,)
    nus = config.nu_grid or (config.policy.nu,)
    epss = config.eps_grid or (config.policy.eps,)
    cells = list(itertools.product(regs, nus, epss))
    if not cells:
        raise ValueError("empty grid")

    table = []
    for reg, nu, eps in cells:
        cell_cfg = replace(config, policy=replace(config.policy, reg=reg, nu=nu,
                                                  eps=eps))
        stats = summarize(run_repeats(cell_cfg, parallel=parallel))
        table.append({"reg": reg, "nu": nu, "eps": eps,
                      "mean": stats["mean"], "stderr": stats["stderr"],
                      "std": stats["std"]})
    best = min(table, key=lambda row: (row["mean"], row["nu"], row["reg"], row["eps"]))
    return table, best


def emit_outputs(traces: list[RegretTrace], stats: dict, out_dir: str,
                 grid_table: list[dict] | None = None) -> None:
    """Write JSONL episode traces, a CSV summary, and plot-ready curve data."""
    os.makedirs(out_dir, exist_ok=True)
    algo = traces[0].algorithm if traces else "none"
    for i, tr in enumerate(traces):
        path = os.path.join(out_dir, f"trace_{tr.algorithm}_{i}.jsonl")
        with open(path, "w") as fh:
            for row in tr.rounds:
                fh.write(json.dumps(row) + "\n")

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        if grid_table:
            writer.writerow(["reg", "nu", "eps", "mean", "std", "stderr"])
            for row in grid_table:
                writer.writerow([row["reg"], row["nu"], row["eps"],
                                 row["mean"], row["std"], row["stderr"]])
        else:
            writer.writerow(["algorithm", "n_repeats", "mean", "std", "stderr"])
            writer.writerow([algo, stats["n_repeats"], stats["mean"],
                             stats["std"], stats["stderr"]])

    with open(os.path.join(out_dir, f"plot_{algo}.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mean_cum_regret", "stderr"])
        for t, (mu, se) in enumerate(zip(stats["curve_mean"],
                                         stats["curve_stderr"]), start=1):
            writer.writerow([t, mu, se])


def read_traces(out_dir: str, algorithm: str) -> list[RegretTrace]:
    """Round-trip loader for the JSONL traces written by emit_outputs."""
    traces = []
    i = 0
    while True:
        path = os.path.join(out_dir, f"trace_{algorithm}_{i}.jsonl")
        if not os.path.exists(path):
            break
        with open(path) as fh:
            rounds = [json.loads(line) for line in fh]
        traces.append(RegretTrace(algorithm, -1, rounds))
        i += 1
    return traces
