"""Core structures for factored multi-agent bandit problems.

A problem couples ``m`` agents through possibly overlapping groups. Each
group carries one table of real values, one entry per *local arm* (the
restriction of a joint arm to the group's agents), and the global value
of a joint arm is the sum of the group entries it selects. Everything
downstream (maximization, posteriors, regret accounting) works on these
three pieces: the problem structure, joint arms, and per-group tables.

Joint arms are plain tuples of action indices, one per agent. Local arms
are flat integers under a fixed mixed-radix encoding: within a group the
first agent (lowest index) is the most significant digit. The encoding
is pinned so that serialized tables and traces are stable across runs
and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

JointArm = tuple[int, ...]


class SpecError(ValueError):
    """A problem description violates a structural invariant."""


class OrphanAgentError(SpecError):
    def __init__(self, agent: int):
        super().__init__(f"agent {agent} does not appear in any group")
        self.agent = agent


class EmptyGroupError(SpecError):
    def __init__(self, group: int):
        super().__init__(f"group {group} is empty")
        self.group = group


class ActionIndexOutOfRangeError(SpecError):
    def __init__(self, message: str):
        super().__init__(message)


class NonCanonicalGroupOrderError(SpecError):
    def __init__(self, group: int):
        super().__init__(
            f"group {group} is not in canonical order (agent indices must be strictly increasing)"
        )
        self.group = group


@dataclass(frozen=True)
class MamabSpec:
    """Agents, per-agent action counts, and the agent groups that share rewards.

    ``groups`` may overlap and duplicates are allowed; each group must
    list its agents in strictly increasing order. Construction only
    coerces the fields to tuples; call :func:`validate_spec` to enforce
    the invariants (environments and file loaders do so).
    """

    num_agents: int
    action_counts: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "action_counts", tuple(int(c) for c in self.action_counts))
        object.__setattr__(
            self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups)
        )

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def group_shape(self, group: int) -> tuple[int, ...]:
        """Action counts of the group's agents, in canonical order."""
        return tuple(self.action_counts[i] for i in self.groups[group])

    def local_arm_count(self, group: int) -> int:
        return math.prod(self.group_shape(group))

    @cached_property
    def total_local_arms(self) -> int:
        """Number of local arms summed over all groups."""
        return sum(self.local_arm_count(e) for e in range(self.num_groups))

    @cached_property
    def joint_arm_count(self) -> int:
        return math.prod(self.action_counts)

    @property
    def max_actions(self) -> int:
        return max(self.action_counts)

    @property
    def max_group_size(self) -> int:
        return max(len(g) for g in self.groups)

    def group_strides(self, group: int) -> tuple[int, ...]:
        """Mixed-radix multipliers; the group's first agent is most significant."""
        shape = self.group_shape(group)
        strides = [1] * len(shape)
        for j in range(len(shape) - 2, -1, -1):
            strides[j] = strides[j + 1] * shape[j + 1]
        return tuple(strides)

    @cached_property
    def _flat_projection(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # Concatenated (agent index, stride) pairs for all groups plus the
        # group start offsets, so one joint arm projects onto every group
        # with a single reduceat.
        agents: list[int] = []
        strides: list[int] = []
        offsets: list[int] = []
        for e, g in enumerate(self.groups):
            offsets.append(len(agents))
            st = self.group_strides(e)
            agents.extend(g)
            strides.extend(st)
        return (
            np.asarray(agents, dtype=np.int64),
            np.asarray(strides, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64),
        )


@dataclass(frozen=True)
class LocalArm:
    """A (group, flat index) pair naming one local arm."""

    group: int
    index: int


@dataclass(frozen=True, eq=False)
class FactorTable:
    """One real value per local arm of one group.

    Carries true means, posterior samples, point estimates, or UCB
    scores, depending on who built it. Entries may be ``+inf`` (used for
    optimistic initialization of improper posteriors); ``-inf`` and NaN
    are rejected at the maximizer boundary.
    """

    group: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64).reshape(-1)
        )


def validate_spec(spec: MamabSpec) -> None:
    """Raise a :class:`SpecError` subclass unless every invariant holds.

    Checks, in order: positive agent count, positive action counts, at
    least one group, nonempty groups in canonical (strictly increasing)
    order with in-range agent indices, and no orphan agents.
    """
    if spec.num_agents < 1:
        raise SpecError(f"need at least one agent, got {spec.num_agents}")
    if len(spec.action_counts) != spec.num_agents:
        raise SpecError(
            f"expected {spec.num_agents} action counts, got {len(spec.action_counts)}"
        )
    for i, count in enumerate(spec.action_counts):
        if count < 1:
            raise ActionIndexOutOfRangeError(
                f"agent {i} has an empty action set (count {count})"
            )
    if spec.num_groups < 1:
        raise SpecError("need at least one group")
    covered = set()
    for e, group in enumerate(spec.groups):
        if len(group) == 0:
            raise EmptyGroupError(e)
        for i in group:
            if not 0 <= i < spec.num_agents:
                raise ActionIndexOutOfRangeError(
                    f"group {e} references agent {i}, valid range is [0, {spec.num_agents})"
                )
        if any(a >= b for a, b in zip(group, group[1:])):
            raise NonCanonicalGroupOrderError(e)
        covered.update(group)
    for i in range(spec.num_agents):
        if i not in covered:
            raise OrphanAgentError(i)


def validate_arm(arm: Sequence[int], spec: MamabSpec) -> None:
    if len(arm) != spec.num_agents:
        raise ValueError(f"arm has {len(arm)} actions, expected {spec.num_agents}")
    for i, (a, count) in enumerate(zip(arm, spec.action_counts)):
        if not 0 <= a < count:
            raise ActionIndexOutOfRangeError(
                f"action {a} of agent {i} is outside [0, {count})"
            )


def project(arm: Sequence[int], spec: MamabSpec, group: int) -> int:
    """Flat index of the joint arm's restriction to one group."""
    strides = spec.group_strides(group)
    return sum(arm[i] * s for i, s in zip(spec.groups[group], strides))


def project_all(arm: Sequence[int], spec: MamabSpec) -> np.ndarray:
    """Local arm indices of ``arm`` for every group at once."""
    agents, strides, offsets = spec._flat_projection
    actions = np.asarray(arm, dtype=np.int64)
    return np.add.reduceat(actions[agents] * strides, offsets)


def local_arm_actions(spec: MamabSpec, group: int, index: int) -> tuple[int, ...]:
    """Decode a flat local arm index back to the group's action tuple."""
    if not 0 <= index < spec.local_arm_count(group):
        raise ValueError(
            f"local arm index {index} out of range for group {group} "
            f"(size {spec.local_arm_count(group)})"
        )
    actions = []
    for stride in spec.group_strides(group):
        actions.append(index // stride)
        index %= stride
    return tuple(actions)


def coordination_graph(spec: MamabSpec) -> frozenset[tuple[int, int]]:
    """Bipartite (agent, group) edges: agent i is wired to every group containing it."""
    return frozenset((i, e) for e, g in enumerate(spec.groups) for i in g)


def check_tables(tables: Sequence[FactorTable], spec: MamabSpec) -> None:
    """Reject table lists that do not line up with the spec or contain -inf/NaN."""
    if len(tables) != spec.num_groups:
        raise ValueError(f"expected {spec.num_groups} tables, got {len(tables)}")
    for e, table in enumerate(tables):
        if table.group != e:
            raise ValueError(f"table at position {e} is labelled group {table.group}")
        if table.values.shape[0] != spec.local_arm_count(e):
            raise ValueError(
                f"group {e} table has {table.values.shape[0]} entries, "
                f"expected {spec.local_arm_count(e)}"
            )
        if np.isnan(table.values).any():
            raise ValueError(f"group {e} table contains NaN")
        if np.isneginf(table.values).any():
            raise ValueError(f"group {e} table contains -inf")


def global_mean(tables: Sequence[FactorTable], arm: Sequence[int], spec: MamabSpec) -> float:
    """Sum of the per-group table entries selected by ``arm``.

    Groups are accumulated in ascending order, which keeps the result
    bit-identical to the vectorized brute-force evaluation.
    """
    total = 0.0
    indices = project_all(arm, spec)
    for e in range(spec.num_groups):
        total += float(tables[e].values[indices[e]])
    return total


def regret_delta(
    true_tables: Sequence[FactorTable],
    arm: Sequence[int],
    spec: MamabSpec,
    maximizer,
) -> float:
    """Gap between the optimal global mean and the arm's global mean.

    ``maximizer`` is a callable ``(tables, spec) -> MaxResult``; callers
    that evaluate many arms should compute the optimum once and cache it
    (see :class:`~factored_bandits.environments.Environment`). Values in
    a sub-ulp band below zero (floating-point reordering between the
    maximizer and the re-evaluation) are clamped to exactly 0.
    """
    best = maximizer(true_tables, spec)
    delta = best.value - global_mean(true_tables, arm, spec)
    return delta if delta > 0.0 else 0.0
