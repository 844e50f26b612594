"""Conjugate Bayesian models over the per-group local arm means.

One state per (group, local arm), all held in per-group numpy arrays
inside a :class:`PosteriorBank`. Three likelihoods are supported, each
with its non-informative Jeffreys prior:

* ``bernoulli``: Beta(0.5, 0.5) on the success probability;
* ``poisson``: Gamma(0.5, 0), improper until the first observation;
* ``normal``: unknown mean and variance, whose marginal over the mean
  is a location-scale Student-t once two observations exist.

Reward scaling: benchmark environments emit local rewards already
divided by the number of groups so that global means stay in [0, 1].
The bank keeps conjugacy exact by undoing that scaling on ingestion for
the discrete models (a Bernoulli observation ``r/scale`` is stored as
the 0/1 outcome, a Poisson observation as the integer count) and by
re-applying it when the posterior mean is sampled. The normal model
works on the scaled values directly. ``reward_scale=1`` turns the
transform off.

Improper states cannot be sampled; ``sample_mean`` returns ``+inf`` for
them, which the maximizer absorbs, so every local arm is forced to be
pulled until its posterior is proper.

The bank also tracks pull counters and running means of the (scaled)
observations for every model kind; these feed the factored UCB baseline
and are updated with Welford's recurrence for numerical stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import FactorTable, MamabSpec, validate_spec

KIND_BERNOULLI = "bernoulli"
KIND_POISSON = "poisson"
KIND_NORMAL = "normal"
MODEL_KINDS = (KIND_BERNOULLI, KIND_POISSON, KIND_NORMAL)

_INTEGER_TOLERANCE = 1e-6


class SupportViolationError(ValueError):
    """An observation is outside the likelihood's support."""


@dataclass(frozen=True)
class BetaBernoulliState:
    alpha: float
    beta: float


@dataclass(frozen=True)
class GammaPoissonState:
    shape: float
    rate: float
    count: int


@dataclass(frozen=True)
class NormalJeffreysState:
    n: int
    mean: float
    m2: float  # sum of squared deviations from the running mean


class PosteriorBank:
    """Per-(group, local arm) conjugate states, counters, and running means.

    A bank is confined to a single run; concurrent runs use independent
    banks. Sampling draws one vector per group, groups in ascending
    order and local arms in index order within the vector, so a fixed
    generator yields a reproducible stream.
    """

    def __init__(self, spec: MamabSpec, kind: str, reward_scale: float = 1.0):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")
        if not reward_scale > 0:
            raise ValueError(f"reward_scale must be positive, got {reward_scale}")
        validate_spec(spec)
        self.spec = spec
        self.kind = kind
        self.reward_scale = float(reward_scale)
        sizes = [spec.local_arm_count(e) for e in range(spec.num_groups)]
        self.counts = [np.zeros(s, dtype=np.int64) for s in sizes]
        self.means = [np.zeros(s, dtype=np.float64) for s in sizes]
        if kind == KIND_BERNOULLI:
            self._alpha = [np.full(s, 0.5) for s in sizes]
            self._beta = [np.full(s, 0.5) for s in sizes]
        elif kind == KIND_POISSON:
            self._shape = [np.full(s, 0.5) for s in sizes]
        else:
            self._m2 = [np.zeros(s, dtype=np.float64) for s in sizes]

    # -- updates ---------------------------------------------------------

    def update(self, group: int, index: int, reward: float) -> None:
        """Fold one observed (scaled) local reward into the state."""
        reward = float(reward)
        if not math.isfinite(reward):
            raise SupportViolationError(f"reward {reward} is not finite")
        if self.kind == KIND_BERNOULLI:
            outcome = self._as_integer(reward)
            if outcome not in (0, 1):
                raise SupportViolationError(
                    f"Bernoulli reward {reward} does not rescale to 0 or 1"
                )
            self._alpha[group][index] += outcome
            self._beta[group][index] += 1 - outcome
        elif self.kind == KIND_POISSON:
            count = self._as_integer(reward)
            if count < 0:
                raise SupportViolationError(
                    f"Poisson reward {reward} rescales to a negative count"
                )
            self._shape[group][index] += count

        n = int(self.counts[group][index]) + 1
        self.counts[group][index] = n
        old_mean = self.means[group][index]
        delta = reward - old_mean
        new_mean = old_mean + delta / n
        self.means[group][index] = new_mean
        if self.kind == KIND_NORMAL:
            self._m2[group][index] += delta * (reward - new_mean)

    def _as_integer(self, reward: float) -> int:
        raw = reward * self.reward_scale
        nearest = round(raw)
        if abs(raw - nearest) > _INTEGER_TOLERANCE:
            raise SupportViolationError(
                f"reward {reward} times scale {self.reward_scale} is not an integer"
            )
        return int(nearest)

    # -- inspection ------------------------------------------------------

    def count(self, group: int, index: int) -> int:
        return int(self.counts[group][index])

    def mean_estimate(self, group: int, index: int) -> float:
        return float(self.means[group][index])

    def state(self, group: int, index: int):
        """The single-arm conjugate state, as a small frozen record."""
        if self.kind == KIND_BERNOULLI:
            return BetaBernoulliState(
                alpha=float(self._alpha[group][index]),
                beta=float(self._beta[group][index]),
            )
        if self.kind == KIND_POISSON:
            n = int(self.counts[group][index])
            return GammaPoissonState(
                shape=float(self._shape[group][index]), rate=float(n), count=n
            )
        return NormalJeffreysState(
            n=int(self.counts[group][index]),
            mean=float(self.means[group][index]),
            m2=float(self._m2[group][index]),
        )

    # -- posterior sampling ----------------------------------------------

    def sample_group(self, group: int, rng: np.random.Generator) -> np.ndarray:
        """One posterior mean sample per local arm of ``group``.

        Improper arms come back as ``+inf`` without consuming draws.
        """
        if self.kind == KIND_BERNOULLI:
            return rng.beta(self._alpha[group], self._beta[group]) / self.reward_scale
        if self.kind == KIND_POISSON:
            counts = self.counts[group]
            out = np.full(counts.shape[0], np.inf)
            proper = counts > 0
            if proper.any():
                shape = self._shape[group][proper]
                rate = counts[proper].astype(np.float64)
                out[proper] = rng.gamma(shape, 1.0 / rate) / self.reward_scale
            return out
        counts = self.counts[group]
        out = np.full(counts.shape[0], np.inf)
        proper = counts >= 2
        if proper.any():
            n = counts[proper].astype(np.float64)
            spread = np.sqrt(self._m2[group][proper] / (n * (n - 1.0)))
            out[proper] = self.means[group][proper] + rng.standard_t(n - 1.0) * spread
        return out

    def sample_tables(self, rng: np.random.Generator) -> list[FactorTable]:
        """Posterior sample tables for all groups, group-major order."""
        return [
            FactorTable(group=e, values=self.sample_group(e, rng))
            for e in range(self.spec.num_groups)
        ]

    def sample_mean(self, group: int, index: int, rng: np.random.Generator) -> float:
        """Scalar posterior draw for one local arm (``+inf`` if improper)."""
        if self.kind == KIND_BERNOULLI:
            return float(
                rng.beta(self._alpha[group][index], self._beta[group][index])
                / self.reward_scale
            )
        n = int(self.counts[group][index])
        if self.kind == KIND_POISSON:
            if n == 0:
                return math.inf
            return float(
                rng.gamma(self._shape[group][index], 1.0 / n) / self.reward_scale
            )
        if n < 2:
            return math.inf
        spread = math.sqrt(float(self._m2[group][index]) / (n * (n - 1.0)))
        return float(self.means[group][index] + rng.standard_t(n - 1.0) * spread)

    # -- upper confidence scores ------------------------------------------

    def ucb_group(self, group: int, log_inv_delta: float, sigma: float) -> np.ndarray:
        counts = self.counts[group]
        out = np.full(counts.shape[0], np.inf)
        pulled = counts > 0
        if pulled.any():
            n = counts[pulled].astype(np.float64)
            bonus = np.sqrt(2.0 * sigma * sigma * log_inv_delta / n)
            out[pulled] = self.means[group][pulled] + bonus
        return out

    def ucb_tables(self, t: int, delta, sigma: float) -> list[FactorTable]:
        """Score tables ``mean + sqrt(2 sigma^2 log(1/delta) / n)``, +inf when unpulled."""
        log_inv = resolve_log_inv_delta(self.spec, t, delta)
        return [
            FactorTable(group=e, values=self.ucb_group(e, log_inv, sigma))
            for e in range(self.spec.num_groups)
        ]


THEOREM_SCHEDULE = "theorem"


def resolve_log_inv_delta(spec: MamabSpec, t: int, delta) -> float:
    """log(1/delta) for a fixed delta or the ``(A~ t)^-2`` theorem schedule."""
    if delta == THEOREM_SCHEDULE:
        if t < 1:
            raise ValueError(f"time step must be >= 1, got {t}")
        return 2.0 * math.log(spec.total_local_arms * t)
    delta = float(delta)
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return -math.log(delta)


def ucb_score(
    bank: PosteriorBank, group: int, index: int, t: int, delta, sigma: float
) -> float:
    """Upper confidence score of one local arm; ``+inf`` when unpulled."""
    n = bank.count(group, index)
    if n == 0:
        return math.inf
    log_inv = resolve_log_inv_delta(bank.spec, t, delta)
    return bank.mean_estimate(group, index) + math.sqrt(
        2.0 * sigma * sigma * log_inv / n
    )


def batch_fit(
    spec: MamabSpec,
    kind: str,
    observations: Mapping[tuple[int, int], Sequence[float]],
    reward_scale: float = 1.0,
) -> PosteriorBank:
    """Bank with the same sufficient statistics, computed in closed form.

    Deliberately avoids the incremental recurrences (two-pass means and
    squared deviations) so tests can compare the two routes.
    """
    bank = PosteriorBank(spec, kind, reward_scale)
    for (group, index), values in observations.items():
        data = np.asarray(list(values), dtype=np.float64)
        if data.size == 0:
            continue
        if not np.isfinite(data).all():
            raise SupportViolationError("observations must be finite")
        n = data.size
        bank.counts[group][index] = n
        bank.means[group][index] = float(np.mean(data))
        if kind == KIND_BERNOULLI:
            outcomes = np.asarray([bank._as_integer(v) for v in data])
            if not np.isin(outcomes, (0, 1)).all():
                raise SupportViolationError("Bernoulli observations must rescale to 0/1")
            successes = int(outcomes.sum())
            bank._alpha[group][index] = 0.5 + successes
            bank._beta[group][index] = 0.5 + (n - successes)
        elif kind == KIND_POISSON:
            counts = [bank._as_integer(v) for v in data]
            if any(c < 0 for c in counts):
                raise SupportViolationError("Poisson observations must be nonnegative")
            bank._shape[group][index] = 0.5 + sum(counts)
        else:
            bank._m2[group][index] = float(np.sum((data - np.mean(data)) ** 2))
    return bank
