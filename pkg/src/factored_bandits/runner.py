"""Seeded experiment execution, regret aggregation, and CSV emission.

A run is the sequential loop select -> sample rewards -> observe for a
fixed horizon; regret is always measured against the environment's true
means, never against realized rewards. Runs are independent: each one
gets its own policy instance and generator, seeded from
``(master_seed, run_index, policy_index)`` through the mix function
below, so results are identical whether runs execute sequentially or in
a process pool. ``FB_THREADS`` caps the pool size (1 disables it).

CSV output is byte-deterministic: fixed row order (policy, run, time
step ascending), floats formatted with 17 significant digits, newline
line endings.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .environments import Environment
from .model import MamabSpec
from .policies import Policy, PolicyConfig, build_policy

_MASK64 = (1 << 64) - 1

#: splitmix64 finalizer constants; fixed so that derived seeds are part
#: of the file format contract.
_MIX_GAMMA = 0x9E3779B97F4A7C15
_MIX_M1 = 0xBF58476D1CE4E5B9
_MIX_M2 = 0x94D049BB133111EB

_THIN_FULL_STEPS = 1_000
_THIN_THRESHOLD = 10_000
_THIN_POINTS_PER_DECADE = 200


def mix64(value: int) -> int:
    """splitmix64 finalizer: add the golden gamma, then xor-shift-multiply."""
    z = (value + _MIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_M1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_M2) & _MASK64
    return z ^ (z >> 31)


def derive_run_seed(master_seed: int, run_index: int, policy_index: int) -> int:
    """64-bit seed for one (run, policy) cell: chained splitmix64 mixes."""
    h = mix64(master_seed & _MASK64)
    h = mix64(h ^ (run_index & _MASK64))
    return mix64(h ^ (policy_index & _MASK64))


@dataclass(frozen=True)
class RegretTrace:
    """Per-step and cumulative regret of one run."""

    policy_id: str
    run_id: int
    instantaneous: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "instantaneous", np.asarray(self.instantaneous, dtype=np.float64)
        )
        object.__setattr__(
            self, "cumulative", np.asarray(self.cumulative, dtype=np.float64)
        )


@dataclass(frozen=True)
class PolicyAggregate:
    """Pointwise mean and sample standard deviation of cumulative regret."""

    policy_id: str
    mean: np.ndarray
    std: np.ndarray
    num_runs: int


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs: environment, policies, sizes, seed."""

    environment: Environment
    policies: tuple[PolicyConfig, ...]
    horizon: int
    runs: int
    master_seed: int
    output: str | None = None
    full_resolution: bool = False
    normalize: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if self.runs < 1:
            raise ValueError(f"need at least one run, got {self.runs}")


def run_one(
    env: Environment,
    policy: Policy,
    horizon: int,
    seed: int,
    policy_id: str = "",
    run_id: int = 0,
) -> RegretTrace:
    """Execute one seeded run of ``horizon`` steps and record its regret."""
    rng = np.random.default_rng(seed)
    deltas = np.empty(horizon, dtype=np.float64)
    for t in range(1, horizon + 1):
        arm = policy.select(t, rng)
        rewards = env.sample_rewards(arm, rng)
        policy.observe(arm, rewards)
        deltas[t - 1] = env.regret(arm)
    return RegretTrace(
        policy_id=policy_id,
        run_id=run_id,
        instantaneous=deltas,
        cumulative=np.cumsum(deltas),
    )


def _run_task(args) -> RegretTrace:
    env, config, horizon, seed, run_id = args
    policy = build_policy(config, env)
    return run_one(env, policy, horizon, seed, config.policy_id, run_id)


def resolve_workers(threads: int | None, tasks: int) -> int:
    if threads is None:
        raw = os.environ.get("FB_THREADS", "")
        threads = int(raw) if raw.strip() else (os.cpu_count() or 1)
    return max(1, min(threads, tasks))


def run_experiment(
    env: Environment,
    policies: Sequence[PolicyConfig],
    horizon: int,
    runs: int,
    master_seed: int,
    threads: int | None = None,
) -> list[RegretTrace]:
    """All (policy, run) cells, in deterministic (policy, run) order.

    Parallelism, if any, is across runs only; each run is sequential by
    definition. The trace list is ordered by task index regardless of
    completion order, so output bytes do not depend on the worker count.
    """
    tasks = [
        (env, config, horizon, derive_run_seed(master_seed, run, p_idx), run)
        for p_idx, config in enumerate(policies)
        for run in range(runs)
    ]
    workers = resolve_workers(threads, len(tasks))
    if workers <= 1:
        return [_run_task(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=1))


def aggregate(traces: Sequence[RegretTrace]) -> list[PolicyAggregate]:
    """Pointwise mean and sample std (ddof 1) per policy, order preserved.

    A single trace aggregates with zero standard deviation everywhere.
    """
    by_policy: dict[str, list[RegretTrace]] = {}
    for trace in traces:
        by_policy.setdefault(trace.policy_id, []).append(trace)
    out = []
    for policy_id, group in by_policy.items():
        stacked = np.vstack([t.cumulative for t in group])
        mean = stacked.mean(axis=0)
        if stacked.shape[0] >= 2:
            std = stacked.std(axis=0, ddof=1)
        else:
            std = np.zeros_like(mean)
        out.append(
            PolicyAggregate(policy_id=policy_id, mean=mean, std=std, num_runs=stacked.shape[0])
        )
    return out


def checkpoints(horizon: int, full_resolution: bool = False) -> np.ndarray:
    """Strictly increasing time steps stored in CSV output.

    Every step is kept up to the thinning threshold; beyond it, the
    first 1000 steps are kept and the rest follows a logarithmic grid
    (about 200 points per decade) that always contains the horizon.
    """
    if horizon <= 0:
        return np.empty(0, dtype=np.int64)
    if full_resolution or horizon <= _THIN_THRESHOLD:
        return np.arange(1, horizon + 1, dtype=np.int64)
    head = np.arange(1, _THIN_FULL_STEPS + 1, dtype=np.int64)
    decades = math.log10(horizon) - math.log10(_THIN_FULL_STEPS)
    count = max(2, int(math.ceil(decades * _THIN_POINTS_PER_DECADE)))
    tail = np.unique(
        np.round(
            np.logspace(math.log10(_THIN_FULL_STEPS), math.log10(horizon), num=count)
        ).astype(np.int64)
    )
    tail = tail[(tail > _THIN_FULL_STEPS) & (tail <= horizon)]
    grid = np.concatenate([head, tail])
    if grid[-1] != horizon:
        grid = np.append(grid, horizon)
    return grid


def bound_curve(spec: MamabSpec, sigma: float, horizon) -> np.ndarray:
    """Theoretical cumulative-regret ceiling per time step.

    Evaluates ``sqrt(64 sigma^2 A~ rho t log(A~ t)) + 2/A~`` where ``A~``
    is the total local arm count and ``rho`` the number of groups. Time
    steps with ``A~ t < 2`` (possible only for a single local arm) are
    clamped to the first step where the logarithm is positive.
    ``horizon`` may be an integer (steps 1..horizon) or an array of
    time steps.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    arms = spec.total_local_arms
    rho = spec.num_groups
    if isinstance(horizon, (int, np.integer)):
        ts = np.arange(1, int(horizon) + 1, dtype=np.float64)
    else:
        ts = np.asarray(horizon, dtype=np.float64)
    floor = math.ceil(2.0 / arms)
    effective = np.maximum(ts, floor)
    return np.sqrt(
        64.0 * sigma * sigma * arms * rho * effective * np.log(arms * effective)
    ) + 2.0 / arms


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_traces_csv(
    path: str | Path,
    traces: Sequence[RegretTrace],
    grid: np.ndarray,
    optimal_mean: float,
) -> None:
    """Raw per-run traces at the checkpoint grid.

    The normalized column divides cumulative regret by the optimal
    global mean; when that mean is not positive the raw value is
    emitted unchanged.
    """
    scale = optimal_mean if optimal_mean > 0 else 1.0
    idx = grid - 1
    with open(path, "w", newline="\n") as handle:
        handle.write(
            "policy,run_id,t,instantaneous_regret,cumulative_regret,"
            "normalized_cumulative_regret\n"
        )
        for trace in traces:
            inst = trace.instantaneous[idx]
            cum = trace.cumulative[idx]
            for t, i, c in zip(grid, inst, cum):
                handle.write(
                    f"{trace.policy_id},{trace.run_id},{t},{_fmt(i)},{_fmt(c)},{_fmt(c / scale)}\n"
                )


def write_aggregates_csv(
    path: str | Path,
    aggregates: Sequence[PolicyAggregate],
    grid: np.ndarray,
    bound: np.ndarray,
) -> None:
    """Per-policy mean/std curves plus the theoretical bound column."""
    idx = grid - 1
    with open(path, "w", newline="\n") as handle:
        handle.write("policy,t,mean_cum_regret,std_cum_regret,bound\n")
        for agg in aggregates:
            mean = agg.mean[idx]
            std = agg.std[idx]
            for t, m, s, b in zip(grid, mean, std, bound):
                handle.write(f"{agg.policy_id},{t},{_fmt(m)},{_fmt(s)},{_fmt(b)}\n")


def write_bound_csv(path: str | Path, grid: np.ndarray, bound: np.ndarray) -> None:
    with open(path, "w", newline="\n") as handle:
        handle.write("t,bound\n")
        for t, b in zip(grid, bound):
            handle.write(f"{t},{_fmt(b)}\n")
