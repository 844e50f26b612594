"""Exact maximization of a sum of per-group tables.

Two independent routes are provided. ``brute_force_argmax`` enumerates
the joint arm space and serves as the oracle in tests.
``variable_elimination`` removes one agent at a time from the
interaction graph: all tables whose scope contains the agent are joined
(added with broadcasting), the agent's axis is maxed out while its
argmax is recorded as a best-response table over the remaining scope,
and the reduced table re-enters the pool. Backtracking through the
best-response tables in reverse order assembles the maximizing arm.

Both routes break ties deterministically: brute force returns the
lexicographically smallest maximizing joint arm, elimination takes the
lowest action index at every max step. ``+inf`` entries are allowed
(they dominate any finite sum, which is how unpulled arms under
improper priors force themselves to be explored); ``-inf`` and NaN are
rejected up front.

The join/reduce schedule depends only on the problem structure and the
elimination order, so it is compiled once into a plan of array shapes
and slots and cached; repeated maximizations (one per time step in a
policy) pay only for the numpy work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .model import (
    FactorTable,
    JointArm,
    MamabSpec,
    OrphanAgentError,
    check_tables,
    global_mean,
)

EliminationOrder = tuple[int, ...]

#: Signature shared by both maximization routes.
Maximizer = Callable[[Sequence[FactorTable], MamabSpec], "MaxResult"]

_BRUTE_FORCE_CHUNK = 1 << 18


class JointSpaceTooLargeError(ValueError):
    """Joint arm space exceeds the brute-force enumeration cap."""


@dataclass(frozen=True)
class MaxResult:
    """A maximizing joint arm and its re-evaluated global value.

    ``value`` is always recomputed as the sum of table entries selected
    by ``arm``, never taken from the algorithm's internal bookkeeping.
    """

    arm: JointArm
    value: float


def brute_force_argmax(
    tables: Sequence[FactorTable], spec: MamabSpec, cap: int = 10_000_000
) -> MaxResult:
    """Enumerate every joint arm; ties go to the lexicographically smallest.

    Joint arms are enumerated in lexicographic order (agent 0 most
    significant) in fixed-size chunks, so memory stays bounded even near
    the cap.
    """
    check_tables(tables, spec)
    n_joint = spec.joint_arm_count
    if n_joint > cap:
        raise JointSpaceTooLargeError(
            f"joint arm space has {n_joint} arms, cap is {cap}"
        )
    suffix = [1] * spec.num_agents
    for i in range(spec.num_agents - 2, -1, -1):
        suffix[i] = suffix[i + 1] * spec.action_counts[i + 1]

    best_value = -math.inf
    best_index = 0
    for start in range(0, n_joint, _BRUTE_FORCE_CHUNK):
        joint = np.arange(start, min(start + _BRUTE_FORCE_CHUNK, n_joint), dtype=np.int64)
        total = np.zeros(joint.shape[0], dtype=np.float64)
        for e, group in enumerate(spec.groups):
            local = np.zeros(joint.shape[0], dtype=np.int64)
            for agent, stride in zip(group, spec.group_strides(e)):
                local += ((joint // suffix[agent]) % spec.action_counts[agent]) * stride
            total += tables[e].values[local]
        k = int(np.argmax(total))
        if total[k] > best_value:
            best_value = float(total[k])
            best_index = start + k

    arm = []
    remainder = best_index
    for i in range(spec.num_agents):
        arm.append(remainder // suffix[i])
        remainder %= suffix[i]
    arm = tuple(arm)
    return MaxResult(arm=arm, value=global_mean(tables, arm, spec))


def choose_order(spec: MamabSpec) -> EliminationOrder:
    """Min-degree greedy elimination order.

    Repeatedly eliminates the agent with the fewest distinct neighbours
    in the current interaction graph (agents are neighbours when they
    share a group); eliminating an agent connects its neighbours into a
    clique. Ties go to the lowest agent index.
    """
    neighbours: dict[int, set[int]] = {i: set() for i in range(spec.num_agents)}
    for group in spec.groups:
        for i in group:
            for j in group:
                if i != j:
                    neighbours[i].add(j)
    order = []
    remaining = set(range(spec.num_agents))
    while remaining:
        agent = min(remaining, key=lambda i: (len(neighbours[i]), i))
        nbrs = neighbours.pop(agent)
        for a in nbrs:
            neighbours[a].discard(agent)
            neighbours[a].update(b for b in nbrs if b != a)
        remaining.discard(agent)
        order.append(agent)
    return tuple(order)


@dataclass(frozen=True)
class _JoinTerm:
    slot: int
    shape: tuple[int, ...]  # factor shape padded with 1s to the union rank


@dataclass(frozen=True)
class _ElimStep:
    agent: int
    axis: int
    inputs: tuple[_JoinTerm, ...]
    out_slot: int
    out_scope: tuple[int, ...]


@dataclass(frozen=True)
class _Plan:
    steps: tuple[_ElimStep, ...]
    num_slots: int
    width: int
    group_shapes: tuple[tuple[int, ...], ...]


def _validate_order(spec: MamabSpec, order: Sequence[int]) -> EliminationOrder:
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(spec.num_agents)):
        raise ValueError(f"elimination order {order} is not a permutation of the agents")
    return order


@lru_cache(maxsize=256)
def _compile_plan(spec: MamabSpec, order: EliminationOrder) -> _Plan:
    scopes: dict[int, tuple[int, ...]] = {e: g for e, g in enumerate(spec.groups)}
    live = set(scopes)
    next_slot = spec.num_groups
    steps = []
    width = 0
    for agent in order:
        involved = sorted(s for s in live if agent in scopes[s])
        if not involved:
            raise OrphanAgentError(agent)
        union_set = set()
        for s in involved:
            union_set.update(scopes[s])
        union = tuple(sorted(union_set))
        width = max(width, len(union) - 1)
        axis = union.index(agent)
        out_scope = tuple(a for a in union if a != agent)
        inputs = tuple(
            _JoinTerm(
                slot=s,
                shape=tuple(
                    spec.action_counts[a] if a in scopes[s] else 1 for a in union
                ),
            )
            for s in involved
        )
        steps.append(
            _ElimStep(agent=agent, axis=axis, inputs=inputs, out_slot=next_slot, out_scope=out_scope)
        )
        live.difference_update(involved)
        scopes[next_slot] = out_scope
        live.add(next_slot)
        next_slot += 1
    return _Plan(
        steps=tuple(steps),
        num_slots=next_slot,
        width=width,
        group_shapes=tuple(spec.group_shape(e) for e in range(spec.num_groups)),
    )


def variable_elimination(
    tables: Sequence[FactorTable],
    spec: MamabSpec,
    order: Sequence[int] | None = None,
) -> MaxResult:
    """Exact factored argmax by eliminating agents one at a time.

    Returns the same value as :func:`brute_force_argmax` (up to
    floating-point reassociation); the returned arm attains it. With no
    ``order`` the min-degree heuristic of :func:`choose_order` is used.
    """
    check_tables(tables, spec)
    if order is None:
        order = choose_order(spec)
    plan = _compile_plan(spec, _validate_order(spec, order))

    arrays: list[np.ndarray | None] = [None] * plan.num_slots
    for e, table in enumerate(tables):
        arrays[e] = table.values.reshape(plan.group_shapes[e])

    best_responses = []
    for step in plan.steps:
        first = step.inputs[0]
        joined = arrays[first.slot].reshape(first.shape)
        for term in step.inputs[1:]:
            joined = joined + arrays[term.slot].reshape(term.shape)
        arrays[step.out_slot] = joined.max(axis=step.axis)
        best_responses.append(joined.argmax(axis=step.axis))

    actions = [0] * spec.num_agents
    for step, response in zip(reversed(plan.steps), reversed(best_responses)):
        coords = tuple(actions[a] for a in step.out_scope)
        actions[step.agent] = int(response[coords])
    arm = tuple(actions)
    return MaxResult(arm=arm, value=global_mean(tables, arm, spec))


def induced_width(spec: MamabSpec, order: Sequence[int]) -> int:
    """Largest number of other agents in any joined scope along ``order``."""
    return _compile_plan(spec, _validate_order(spec, order)).width
