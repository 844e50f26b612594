"""Stochastic benchmark environments with known true means.

Each environment fixes the problem structure, one reward distribution
per (group, local arm), and a reward scale: emitted local rewards are
the raw draws divided by ``reward_scale``. The two chain benchmarks set
the scale to the number of groups so that every global mean lies in
[0, 1]; generic problems loaded from file default to scale 1.

Environments are immutable; sampling takes the caller's generator, so
one environment can back many concurrent runs.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .maximizer import MaxResult, variable_elimination
from .model import (
    FactorTable,
    MamabSpec,
    SpecError,
    global_mean,
    project_all,
    validate_spec,
)

REWARD_KINDS = ("bernoulli", "poisson", "normal")

# Unscaled local success probabilities for the Bernoulli chain, indexed
# [a_i][a_{i+1}] for even-numbered groups; odd groups use the transpose.
BERNOULLI_CHAIN_TABLE = ((0.75, 1.0), (0.25, 0.9))

# Unscaled local Poisson means, same orientation convention.
POISSON_CHAIN_TABLE = ((0.1, 0.3), (0.2, 0.1))

GEM_WORKER_GROWTH = 1.03
GEM_BASE_PROBABILITY_HIGH = 0.5
GEM_LAST_VILLAGE_MINES = 4


class InvalidEnvironmentError(SpecError):
    """An environment description is structurally or numerically invalid."""


class InvalidSizeError(InvalidEnvironmentError):
    """A generator was asked for an impossible instance size."""


@dataclass(frozen=True, eq=False)
class Environment:
    """A factored bandit instance with known per-group reward distributions.

    ``params[e]`` holds the distribution parameters of group ``e``
    indexed by local arm: success probabilities for ``bernoulli``, means
    for ``poisson``, and ``(mean, sd)`` rows for ``normal``. All
    parameters describe the *unscaled* draw; emitted rewards divide by
    ``reward_scale``.
    """

    name: str
    spec: MamabSpec
    kinds: tuple[str, ...]
    params: tuple[np.ndarray, ...]
    reward_scale: float = 1.0
    generator_seed: int | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(
            self, "params", tuple(np.asarray(p, dtype=np.float64) for p in self.params)
        )

    def validate(self) -> None:
        validate_spec(self.spec)
        if len(self.kinds) != self.spec.num_groups or len(self.params) != self.spec.num_groups:
            raise InvalidEnvironmentError("need one distribution per group")
        if not self.reward_scale > 0:
            raise InvalidEnvironmentError(f"reward_scale must be positive, got {self.reward_scale}")
        for e, (kind, params) in enumerate(zip(self.kinds, self.params)):
            size = self.spec.local_arm_count(e)
            if kind == "bernoulli":
                if params.shape != (size,):
                    raise InvalidEnvironmentError(f"group {e}: expected {size} probabilities")
                if ((params < 0) | (params > 1)).any():
                    raise InvalidEnvironmentError(f"group {e}: probabilities must lie in [0, 1]")
            elif kind == "poisson":
                if params.shape != (size,):
                    raise InvalidEnvironmentError(f"group {e}: expected {size} means")
                if (params < 0).any():
                    raise InvalidEnvironmentError(f"group {e}: Poisson means must be nonnegative")
            elif kind == "normal":
                if params.shape != (size, 2):
                    raise InvalidEnvironmentError(f"group {e}: expected {size} (mean, sd) rows")
                if (params[:, 1] < 0).any():
                    raise InvalidEnvironmentError(f"group {e}: standard deviations must be nonnegative")
            else:
                raise InvalidEnvironmentError(f"group {e}: unknown reward kind {kind!r}")

    # -- derived quantities ------------------------------------------------

    @cached_property
    def true_means(self) -> list[FactorTable]:
        """Scaled mean tables, one per group."""
        tables = []
        for e, (kind, params) in enumerate(zip(self.kinds, self.params)):
            raw = params[:, 0] if kind == "normal" else params
            tables.append(FactorTable(group=e, values=raw / self.reward_scale))
        return tables

    @cached_property
    def optimal(self) -> MaxResult:
        """The optimal joint arm and value, computed once and cached."""
        return variable_elimination(self.true_means, self.spec)

    @property
    def optimal_mean(self) -> float:
        return self.optimal.value

    def regret(self, arm: Sequence[int]) -> float:
        """Mean-based gap of ``arm`` (never negative; 0 at any optimum)."""
        delta = self.optimal.value - global_mean(self.true_means, arm, self.spec)
        return delta if delta > 0.0 else 0.0

    @cached_property
    def _flat_params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
        # Concatenated parameter arrays for single-kind environments, so
        # one joint arm turns into one vectorized draw across groups.
        if len(set(self.kinds)) != 1:
            return None
        offsets = np.zeros(self.spec.num_groups, dtype=np.int64)
        total = 0
        for e in range(self.spec.num_groups):
            offsets[e] = total
            total += self.spec.local_arm_count(e)
        if self.kinds[0] == "normal":
            first = np.concatenate([p[:, 0] for p in self.params])
            second = np.concatenate([p[:, 1] for p in self.params])
        else:
            first = np.concatenate(self.params)
            second = first
        return offsets, first, second

    # -- sampling ------------------------------------------------------------

    def sample_rewards(self, arm: Sequence[int], rng: np.random.Generator) -> np.ndarray:
        """One scaled local reward per group, drawn independently.

        Single-kind environments consume one vectorized draw across all
        groups; mixed-kind environments draw per group in ascending
        order. Either way the stream is deterministic for a fixed
        generator state.
        """
        indices = project_all(arm, self.spec)
        flat = self._flat_params
        if flat is not None:
            offsets, first, second = flat
            at = offsets + indices
            kind = self.kinds[0]
            if kind == "bernoulli":
                raw = (rng.random(len(indices)) < first[at]).astype(np.float64)
            elif kind == "poisson":
                raw = rng.poisson(first[at]).astype(np.float64)
            else:
                raw = rng.normal(first[at], second[at])
            return raw / self.reward_scale
        out = np.empty(self.spec.num_groups, dtype=np.float64)
        for e, kind in enumerate(self.kinds):
            i = indices[e]
            if kind == "bernoulli":
                raw = 1.0 if rng.random() < self.params[e][i] else 0.0
            elif kind == "poisson":
                raw = float(rng.poisson(self.params[e][i]))
            else:
                raw = float(rng.normal(self.params[e][i, 0], self.params[e][i, 1]))
            out[e] = raw / self.reward_scale
        return out

    # -- serialization ---------------------------------------------------------

    def to_problem_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "name": self.name,
            "agents": self.spec.num_agents,
            "action_counts": list(self.spec.action_counts),
            "groups": [list(g) for g in self.spec.groups],
            "distributions": [
                {"kind": kind, "params": params.tolist()}
                for kind, params in zip(self.kinds, self.params)
            ],
            "reward_scale": self.reward_scale,
        }
        if self.generator_seed is not None:
            doc["generator_seed"] = self.generator_seed
        if self.meta:
            doc["meta"] = self.meta
        return doc

    def to_problem_json(self) -> str:
        return json.dumps(self.to_problem_dict(), indent=2) + "\n"

    def save_problem(self, path: str | Path) -> None:
        Path(path).write_text(self.to_problem_json())

    @classmethod
    def from_problem_dict(cls, doc: dict[str, Any]) -> "Environment":
        try:
            spec = MamabSpec(
                num_agents=int(doc["agents"]),
                action_counts=tuple(doc["action_counts"]),
                groups=tuple(tuple(g) for g in doc["groups"]),
            )
            distributions = doc["distributions"]
            kinds = tuple(str(d["kind"]) for d in distributions)
            params = tuple(np.asarray(d["params"], dtype=np.float64) for d in distributions)
        except (KeyError, TypeError) as exc:
            raise InvalidEnvironmentError(f"malformed problem description: {exc}") from exc
        env = cls(
            name=str(doc.get("name", "problem")),
            spec=spec,
            kinds=kinds,
            params=params,
            reward_scale=float(doc.get("reward_scale", 1.0)),
            generator_seed=doc.get("generator_seed"),
            meta=dict(doc.get("meta", {})),
        )
        env.validate()
        return env

    @classmethod
    def load_problem(cls, path: str | Path) -> "Environment":
        with open(path) as handle:
            try:
                doc = json.load(handle)
            except json.JSONDecodeError as exc:
                raise InvalidEnvironmentError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_problem_dict(doc)


def _check_global_mean_bounds(env: Environment) -> None:
    # Chain construction guard: the scaled global mean must stay in [0, 1]
    # for every joint arm. Max via elimination, min via negated tables.
    high = env.optimal.value
    negated = [FactorTable(group=t.group, values=-t.values) for t in env.true_means]
    low = -variable_elimination(negated, env.spec).value
    if low < -1e-9 or high > 1.0 + 1e-9:
        raise InvalidEnvironmentError(
            f"global means must lie in [0, 1], found range [{low}, {high}]"
        )


def _chain_spec(num_agents: int) -> MamabSpec:
    if num_agents < 2:
        raise InvalidSizeError(f"a chain needs at least 2 agents, got {num_agents}")
    return MamabSpec(
        num_agents=num_agents,
        action_counts=(2,) * num_agents,
        groups=tuple((i, i + 1) for i in range(num_agents - 1)),
    )


def _chain_tables(num_agents: int, table: Sequence[Sequence[float]]) -> tuple[np.ndarray, ...]:
    base = np.asarray(table, dtype=np.float64)
    flipped = base.T
    # Group i couples agents (i, i+1); odd-numbered groups transpose the
    # table. Row-major flattening matches the local arm encoding (first
    # agent most significant).
    return tuple(
        (base if i % 2 == 0 else flipped).reshape(-1).copy()
        for i in range(num_agents - 1)
    )


def bernoulli_chain(num_agents: int) -> Environment:
    """Chain of pairwise-coupled agents with Bernoulli local rewards.

    The optimal joint arm alternates actions 0 and 1 starting with 0;
    its scaled global mean is exactly 1.
    """
    spec = _chain_spec(num_agents)
    env = Environment(
        name="bernoulli-chain",
        spec=spec,
        kinds=("bernoulli",) * spec.num_groups,
        params=_chain_tables(num_agents, BERNOULLI_CHAIN_TABLE),
        reward_scale=float(spec.num_groups),
        meta={"agents": num_agents},
    )
    env.validate()
    _check_global_mean_bounds(env)
    return env


def poisson_chain(num_agents: int) -> Environment:
    """Chain benchmark with Poisson local rewards (heavy right tails).

    Same structure and orientation convention as the Bernoulli chain;
    the optimal scaled global mean is 0.3.
    """
    spec = _chain_spec(num_agents)
    env = Environment(
        name="poisson-chain",
        spec=spec,
        kinds=("poisson",) * spec.num_groups,
        params=_chain_tables(num_agents, POISSON_CHAIN_TABLE),
        reward_scale=float(spec.num_groups),
        meta={"agents": num_agents},
    )
    env.validate()
    _check_global_mean_bounds(env)
    return env


def gem_mining(num_villages: int, rng: np.random.Generator | int) -> Environment:
    """Randomly generated village-to-mine assignment problem.

    Each village (agent) sends its workers to one of the mines it is
    connected to; each mine (group) pays a Bernoulli reward whose
    success probability grows with the number of workers w that chose
    it: ``1.03**(w-1) * p`` with base probability ``p ~ U[0, 0.5)``,
    and exactly 0 when no workers show up. Village i reaches mines
    ``i .. i+m_i-1`` with ``m_i ~ U{2..4}``; the last village always
    reaches 4 mines, so ``(num_villages - 1) + 4`` mines exist in total.

    Generator draws happen in a fixed order (populations by village,
    connectivity by village, base probabilities by mine), so a seeded
    generator reproduces the environment exactly.
    """
    if num_villages < 1:
        raise InvalidSizeError(f"need at least one village, got {num_villages}")
    seed = rng if isinstance(rng, int) else None
    rng = np.random.default_rng(rng)

    populations = rng.integers(1, 6, size=num_villages)
    reach = np.empty(num_villages, dtype=np.int64)
    if num_villages > 1:
        reach[:-1] = rng.integers(2, 5, size=num_villages - 1)
    reach[-1] = GEM_LAST_VILLAGE_MINES
    num_mines = (num_villages - 1) + GEM_LAST_VILLAGE_MINES
    base_probability = rng.uniform(0.0, GEM_BASE_PROBABILITY_HIGH, size=num_mines)

    mine_villages: list[list[int]] = [[] for _ in range(num_mines)]
    for village in range(num_villages):
        for mine in range(village, village + reach[village]):
            mine_villages[mine].append(village)
    kept = [m for m in range(num_mines) if mine_villages[m]]

    groups = []
    tables = []
    for mine in kept:
        villages = tuple(sorted(mine_villages[mine]))
        groups.append(villages)
        choice_ranges = [range(int(reach[v])) for v in villages]
        values = np.empty(math.prod(len(r) for r in choice_ranges))
        for flat, choices in enumerate(itertools.product(*choice_ranges)):
            workers = sum(
                int(populations[v]) for v, c in zip(villages, choices) if v + c == mine
            )
            if workers == 0:
                values[flat] = 0.0
            else:
                values[flat] = GEM_WORKER_GROWTH ** (workers - 1) * base_probability[mine]
        tables.append(values)

    spec = MamabSpec(
        num_agents=num_villages,
        action_counts=tuple(int(r) for r in reach),
        groups=tuple(groups),
    )
    env = Environment(
        name="gem-mining",
        spec=spec,
        kinds=("bernoulli",) * len(kept),
        params=tuple(tables),
        reward_scale=float(len(kept)),
        generator_seed=seed,
        meta={
            "villages": num_villages,
            "populations": [int(p) for p in populations],
            "connectivity": [int(r) for r in reach],
            "base_probabilities": base_probability.tolist(),
            "mines": kept,
        },
    )
    env.validate()
    return env


PRESETS = ("bernoulli-chain", "poisson-chain", "gem-mining")


def build_preset(name: str, agents: int, env_seed: int = 0) -> Environment:
    """Construct one of the named benchmark environments.

    For ``gem-mining`` the ``agents`` argument is the number of
    villages and ``env_seed`` seeds the generator; chains ignore the
    seed.
    """
    if name == "bernoulli-chain":
        return bernoulli_chain(agents)
    if name == "poisson-chain":
        return poisson_chain(agents)
    if name == "gem-mining":
        return gem_mining(agents, env_seed)
    raise InvalidEnvironmentError(f"unknown preset {name!r}, expected one of {PRESETS}")
