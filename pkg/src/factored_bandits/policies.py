"""Arm-selection strategies over a posterior or statistics bank.

Four strategies ship: Thompson sampling over the factored posterior
(``mats``), an optimism baseline built from the same concentration
threshold as the regret analysis (``factored_ucb``), stateless sparse
cooperative Q-learning with epsilon-greedy exploration (``scql``), and
uniform random play (``random``). All of them resolve the factored
argmax exactly through variable elimination, so coordination across
overlapping groups is never approximated.

Every selection function takes the run's generator explicitly and draws
in a fixed documented order, which makes full arm sequences
reproducible bit-for-bit from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .environments import Environment
from .maximizer import MaxResult, Maximizer, choose_order, variable_elimination
from .model import FactorTable, JointArm, MamabSpec, project_all
from .posteriors import KIND_NORMAL, MODEL_KINDS, THEOREM_SCHEDULE, PosteriorBank

POLICY_KINDS = ("mats", "factored_ucb", "scql", "random")


@dataclass(frozen=True)
class PolicyConfig:
    """Declarative description of one policy, as written in config files.

    ``sigma`` is the subgaussian scale of the *unscaled* local rewards
    (the exploration range divided by two); the UCB policy divides it by
    the environment's reward scale. ``delta`` is either a fixed value in
    (0, 1] or the string ``"theorem"`` for the horizon-free schedule
    ``delta_t = (A~ t)^-2``. The epsilon/learning-rate fields only
    matter for ``scql``.
    """

    kind: str
    sigma: float = 0.5
    delta: float | str = THEOREM_SCHEDULE
    epsilon: float = 0.1
    epsilon_decay: float = 0.9999
    learning_rate: float = 0.1
    label: str | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}, expected one of {POLICY_KINDS}")
        if self.kind == "factored_ucb" and not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.kind == "scql":
            if not 0.0 <= self.epsilon <= 1.0:
                raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
            if not 0.0 < self.epsilon_decay <= 1.0:
                raise ValueError(f"epsilon_decay must lie in (0, 1], got {self.epsilon_decay}")
            if not 0.0 < self.learning_rate <= 1.0:
                raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")

    @property
    def policy_id(self) -> str:
        return self.label if self.label else self.kind


# -- selection operations ---------------------------------------------------


def mats_select(
    bank: PosteriorBank,
    spec: MamabSpec,
    maximizer: Maximizer | None = None,
    rng: np.random.Generator | None = None,
) -> JointArm:
    """Thompson step: sample every local arm's posterior mean, maximize.

    Draws one vector per group (groups ascending, local arms in index
    order), builds the sampled tables, and returns the exact factored
    argmax. Improper arms sample ``+inf`` and therefore win.
    """
    if rng is None:
        raise ValueError("mats_select needs the run's generator")
    tables = bank.sample_tables(rng)
    if maximizer is None:
        maximizer = variable_elimination
    return maximizer(tables, spec).arm


def ucb_select(
    bank: PosteriorBank,
    spec: MamabSpec,
    maximizer: Maximizer | None,
    t: int,
    config: PolicyConfig,
) -> JointArm:
    """Maximize per-group upper confidence scores built from the pull stats.

    The score of a local arm is its running mean plus
    ``sqrt(2 sigma^2 log(1/delta) / n)``; unpulled arms score ``+inf``.
    ``config.sigma`` is divided by the bank's reward scale so the bonus
    lives in the same units as the observed (scaled) rewards.
    """
    if t < 1:
        raise ValueError(f"time step must be >= 1, got {t}")
    sigma = config.sigma / bank.reward_scale
    tables = bank.ucb_tables(t, config.delta, sigma)
    if maximizer is None:
        maximizer = variable_elimination
    return maximizer(tables, spec).arm


def scql_select(
    qtables: Sequence[np.ndarray],
    spec: MamabSpec,
    maximizer: Maximizer | None,
    epsilon: float,
    rng: np.random.Generator,
) -> JointArm:
    """Epsilon-greedy over the local Q tables, greedy branch via elimination."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if rng.random() < epsilon:
        return random_select(spec, rng)
    tables = [FactorTable(group=e, values=q) for e, q in enumerate(qtables)]
    if maximizer is None:
        maximizer = variable_elimination
    return maximizer(tables, spec).arm


def random_select(spec: MamabSpec, rng: np.random.Generator) -> JointArm:
    """Uniform independent action per agent (one vectorized draw)."""
    counts = np.asarray(spec.action_counts, dtype=np.int64)
    return tuple(int(a) for a in rng.integers(0, counts))


# -- stateful policy objects --------------------------------------------------


class Policy:
    """Interface the experiment loop drives: select, then observe.

    Policies are stateful and confined to one run; build a fresh
    instance per run.
    """

    spec: MamabSpec

    def select(self, t: int, rng: np.random.Generator) -> JointArm:
        raise NotImplementedError

    def observe(self, arm: JointArm, local_rewards: np.ndarray) -> None:
        raise NotImplementedError


class MatsPolicy(Policy):
    """Multi-agent Thompson sampling over conjugate local posteriors."""

    def __init__(
        self,
        spec: MamabSpec,
        model_kind: str,
        reward_scale: float = 1.0,
        order: Sequence[int] | None = None,
    ):
        self.spec = spec
        self.bank = PosteriorBank(spec, model_kind, reward_scale)
        self._order = tuple(order) if order is not None else choose_order(spec)

    def _maximize(self, tables, spec) -> MaxResult:
        return variable_elimination(tables, spec, self._order)

    def select(self, t: int, rng: np.random.Generator) -> JointArm:
        return mats_select(self.bank, self.spec, self._maximize, rng)

    def observe(self, arm: JointArm, local_rewards: np.ndarray) -> None:
        indices = project_all(arm, self.spec)
        for e in range(self.spec.num_groups):
            self.bank.update(e, int(indices[e]), float(local_rewards[e]))


class FactoredUcbPolicy(Policy):
    """Optimism baseline: per-local-arm confidence bounds, exact joint argmax."""

    def __init__(self, spec: MamabSpec, config: PolicyConfig, reward_scale: float = 1.0):
        self.spec = spec
        self.config = config
        # The normal-kind bank accepts any finite reward and tracks the
        # counters and running means the scores need.
        self.bank = PosteriorBank(spec, KIND_NORMAL, reward_scale)
        self._order = choose_order(spec)

    def _maximize(self, tables, spec) -> MaxResult:
        return variable_elimination(tables, spec, self._order)

    def select(self, t: int, rng: np.random.Generator) -> JointArm:
        return ucb_select(self.bank, self.spec, self._maximize, t, self.config)

    def observe(self, arm: JointArm, local_rewards: np.ndarray) -> None:
        indices = project_all(arm, self.spec)
        for e in range(self.spec.num_groups):
            self.bank.update(e, int(indices[e]), float(local_rewards[e]))


class ScqlPolicy(Policy):
    """Stateless sparse cooperative Q-learning with decaying epsilon.

    Local Q values start at zero and move toward each observed local
    reward by the learning rate; exploration probability at step t is
    ``epsilon * decay**(t-1)``.
    """

    def __init__(self, spec: MamabSpec, config: PolicyConfig):
        self.spec = spec
        self.config = config
        self.qtables = [
            np.zeros(spec.local_arm_count(e)) for e in range(spec.num_groups)
        ]
        self._order = choose_order(spec)

    def _maximize(self, tables, spec) -> MaxResult:
        return variable_elimination(tables, spec, self._order)

    def epsilon_at(self, t: int) -> float:
        return self.config.epsilon * self.config.epsilon_decay ** (t - 1)

    def select(self, t: int, rng: np.random.Generator) -> JointArm:
        return scql_select(self.qtables, self.spec, self._maximize, self.epsilon_at(t), rng)

    def observe(self, arm: JointArm, local_rewards: np.ndarray) -> None:
        indices = project_all(arm, self.spec)
        alpha = self.config.learning_rate
        for e in range(self.spec.num_groups):
            i = indices[e]
            self.qtables[e][i] += alpha * (float(local_rewards[e]) - self.qtables[e][i])


class RandomPolicy(Policy):
    """Uniform random joint arms; the no-learning reference."""

    def __init__(self, spec: MamabSpec):
        self.spec = spec

    def select(self, t: int, rng: np.random.Generator) -> JointArm:
        return random_select(self.spec, rng)

    def observe(self, arm: JointArm, local_rewards: np.ndarray) -> None:
        pass


class FixedArmPolicy(Policy):
    """Always plays one given arm. Used as the zero-regret oracle in tests."""

    def __init__(self, spec: MamabSpec, arm: JointArm):
        self.spec = spec
        self.arm = tuple(arm)

    def select(self, t: int, rng: np.random.Generator) -> JointArm:
        return self.arm

    def observe(self, arm: JointArm, local_rewards: np.ndarray) -> None:
        pass


def posterior_kind_for(env: Environment) -> str:
    """Conjugate family matching the environment's reward distributions.

    Mixed-kind environments fall back to the normal model, which is
    support-free.
    """
    kinds = set(env.kinds)
    if len(kinds) == 1:
        kind = kinds.pop()
        if kind in MODEL_KINDS:
            return kind
    return KIND_NORMAL


def build_policy(config: PolicyConfig, env: Environment) -> Policy:
    """Fresh single-run policy instance for ``config`` on ``env``."""
    if config.kind == "mats":
        return MatsPolicy(env.spec, posterior_kind_for(env), env.reward_scale)
    if config.kind == "factored_ucb":
        return FactoredUcbPolicy(env.spec, config, env.reward_scale)
    if config.kind == "scql":
        return ScqlPolicy(env.spec, config)
    if config.kind == "random":
        return RandomPolicy(env.spec)
    raise ValueError(f"unknown policy kind {config.kind!r}")
