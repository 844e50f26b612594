import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from factored_bandits import (
    FactorTable,
    MamabSpec,
    PolicyConfig,
    PosteriorBank,
    bernoulli_chain,
    build_policy,
    mats_select,
    poisson_chain,
    project_all,
    random_select,
    scql_select,
    ucb_select,
    variable_elimination,
)
from factored_bandits.policies import (
    FactoredUcbPolicy,
    FixedArmPolicy,
    MatsPolicy,
    RandomPolicy,
    ScqlPolicy,
    posterior_kind_for,
)
from factored_bandits.posteriors import KIND_BERNOULLI, KIND_POISSON, batch_fit


def pair_spec() -> MamabSpec:
    return MamabSpec(2, (2, 2), ((0, 1),))


class TestMatsSelect:
    def test_degenerate_posterior_concentrates_on_optimum(self):
        # huge pseudo-counts pin each posterior at the chain's true means
        env = bernoulli_chain(2)
        observations = {}
        for k, p in enumerate(env.params[0]):
            n = 1_000_000
            ones = int(round(n * p))
            observations[(0, k)] = [1.0] * ones + [0.0] * (n - ones)
        bank = PosteriorBank(env.spec, KIND_BERNOULLI)
        for (e, k), data in observations.items():
            bank.counts[e][k] = len(data)
            bank.means[e][k] = float(np.mean(data))
            bank._alpha[e][k] = 0.5 + sum(data)
            bank._beta[e][k] = 0.5 + len(data) - sum(data)
        rng = np.random.default_rng(2)
        hits = sum(
            mats_select(bank, env.spec, None, rng) == (0, 1) for _ in range(1000)
        )
        assert hits >= 999

    def test_unpulled_poisson_arm_is_forced(self):
        spec = pair_spec()
        bank = PosteriorBank(spec, KIND_POISSON)
        for k in range(4):
            if k != 2:
                bank.update(0, k, 1.0)
        arm = mats_select(bank, spec, None, np.random.default_rng(0))
        assert arm == (1, 0)  # local arm 2 under the mixed-radix encoding

    def test_probability_matching_single_agent(self):
        spec = MamabSpec(1, (3,), ((0,),))
        observations = {
            (0, 0): [1.0, 0.0, 1.0],
            (0, 1): [1.0, 1.0, 0.0, 1.0],
            (0, 2): [0.0, 1.0],
        }
        bank = batch_fit(spec, KIND_BERNOULLI, observations)
        trials = 100_000
        rng = np.random.default_rng(11)
        counts = Counter(mats_select(bank, spec, None, rng)[0] for _ in range(trials))
        alphas = bank._alpha[0]
        betas = bank._beta[0]
        oracle_rng = np.random.default_rng(101)
        samples = oracle_rng.beta(alphas, betas, size=(trials, 3))
        oracle_counts = Counter(np.argmax(samples, axis=1).tolist())
        for arm in range(3):
            assert abs(counts[arm] / trials - oracle_counts[arm] / trials) < 0.01

    def test_requires_generator(self):
        bank = PosteriorBank(pair_spec(), KIND_BERNOULLI)
        with pytest.raises(ValueError):
            mats_select(bank, pair_spec(), None, None)


class TestUcbSelect:
    def test_all_unpulled_ties_to_all_zeros(self):
        spec = pair_spec()
        bank = PosteriorBank(spec, "normal")
        config = PolicyConfig(kind="factored_ucb")
        assert ucb_select(bank, spec, None, 1, config) == (0, 0)

    def test_delta_one_reduces_to_greedy(self):
        spec = pair_spec()
        observations = {
            (0, 0): [0.1, 0.3],
            (0, 1): [0.9, 0.7],
            (0, 2): [0.5, 0.5],
            (0, 3): [0.2, 0.2],
        }
        bank = batch_fit(spec, "normal", observations)
        config = PolicyConfig(kind="factored_ucb", delta=1.0)
        assert ucb_select(bank, spec, None, 5, config) == (0, 1)

    def test_hand_computed_two_agent_argmax(self):
        spec = pair_spec()
        counts = {0: 16, 1: 4, 2: 4, 3: 16}
        means = {0: 0.6, 1: 0.5, 2: 0.1, 3: 0.3}
        observations = {(0, k): [means[k]] * counts[k] for k in range(4)}
        bank = batch_fit(spec, "normal", observations)
        sigma, delta = 0.5, math.exp(-1.0)
        scores = {
            k: means[k] + math.sqrt(2 * sigma**2 * 1.0 / counts[k]) for k in range(4)
        }
        best = max(scores, key=lambda k: (scores[k], -k))
        config = PolicyConfig(kind="factored_ucb", sigma=sigma, delta=delta)
        arm = ucb_select(bank, spec, None, 3, config)
        assert arm == divmod(best, 2)
        # scores: 0.777, 0.854, 0.454, 0.477 -> local arm 1, joint (0, 1)
        assert best == 1
        assert arm == (0, 1)

    def test_never_selects_a_dominated_arm(self, rng):
        # if some other arm scores strictly higher in every group, the
        # exact maximizer cannot return this one
        spec = MamabSpec(3, (2, 2, 2), ((0, 1), (1, 2)))
        config = PolicyConfig(kind="factored_ucb")
        for trial in range(25):
            observations = {
                (e, k): list(rng.random(size=int(rng.integers(1, 6))))
                for e in range(2)
                for k in range(4)
            }
            bank = batch_fit(spec, "normal", observations)
            t = trial + 1
            arm = ucb_select(bank, spec, None, t, config)
            tables = bank.ucb_tables(t, config.delta, config.sigma)
            chosen = [tables[e].values[i] for e, i in enumerate(project_all(arm, spec))]
            for other in itertools.product(range(2), repeat=3):
                if other == arm:
                    continue
                scores = [
                    tables[e].values[i] for e, i in enumerate(project_all(other, spec))
                ]
                assert not all(o > c for o, c in zip(scores, chosen))


class TestScqlSelect:
    def test_epsilon_one_is_uniform(self):
        spec = pair_spec()
        qtables = [np.zeros(4)]
        rng = np.random.default_rng(3)
        draws = Counter(
            scql_select(qtables, spec, None, 1.0, rng) for _ in range(10_000)
        )
        frequencies = [draws[arm] for arm in sorted(draws)]
        assert len(frequencies) == 4
        result = stats.chisquare(frequencies)
        assert result.pvalue > 0.01

    def test_greedy_on_true_means_finds_optimum(self):
        env = bernoulli_chain(2)
        qtables = [t.values.copy() for t in env.true_means]
        arm = scql_select(qtables, env.spec, None, 0.0, np.random.default_rng(0))
        assert arm == (0, 1)

    def test_full_learning_rate_overwrites(self):
        env = bernoulli_chain(2)
        policy = ScqlPolicy(env.spec, PolicyConfig(kind="scql", learning_rate=1.0))
        policy.observe((0, 1), np.array([0.77]))
        assert policy.qtables[0][1] == pytest.approx(0.77)
        policy.observe((0, 1), np.array([0.33]))
        assert policy.qtables[0][1] == pytest.approx(0.33)

    def test_epsilon_decays(self):
        policy = ScqlPolicy(
            pair_spec(), PolicyConfig(kind="scql", epsilon=0.1, epsilon_decay=0.5)
        )
        assert policy.epsilon_at(1) == pytest.approx(0.1)
        assert policy.epsilon_at(3) == pytest.approx(0.025)


class TestRandomSelect:
    def test_uniform_over_four_arms(self):
        spec = pair_spec()
        rng = np.random.default_rng(8)
        draws = Counter(random_select(spec, rng) for _ in range(10_000))
        result = stats.chisquare([draws[a] for a in sorted(draws)])
        assert result.pvalue > 0.01

    def test_single_action(self):
        spec = MamabSpec(1, (1,), ((0,),))
        assert random_select(spec, np.random.default_rng(0)) == (0,)

    def test_three_action_frequencies(self):
        spec = MamabSpec(1, (3,), ((0,),))
        rng = np.random.default_rng(9)
        draws = Counter(random_select(spec, rng)[0] for _ in range(10_000))
        for a in range(3):
            assert abs(draws[a] / 10_000 - 1.0 / 3.0) < 0.02


class TestSelectionInvariances:
    def test_shift_of_one_groups_samples_keeps_argmax(self, rng):
        env = bernoulli_chain(4)
        bank = PosteriorBank(env.spec, KIND_BERNOULLI, env.reward_scale)
        sample_rng = np.random.default_rng(77)
        tables = bank.sample_tables(sample_rng)
        base = variable_elimination(tables, env.spec)
        shifted = [
            FactorTable(t.group, t.values + (2.0 if t.group == 1 else 0.0))
            for t in tables
        ]
        assert variable_elimination(shifted, env.spec).arm == base.arm

    @pytest.mark.parametrize("kind", ["mats", "factored_ucb", "scql", "random"])
    def test_fixed_seed_reproduces_arm_sequence(self, kind):
        env = poisson_chain(3) if kind == "mats" else bernoulli_chain(3)
        sequences = []
        for _ in range(2):
            policy = build_policy(PolicyConfig(kind=kind), env)
            rng = np.random.default_rng(123)
            arms = []
            for t in range(1, 60):
                arm = policy.select(t, rng)
                rewards = env.sample_rewards(arm, rng)
                policy.observe(arm, rewards)
                arms.append(arm)
            sequences.append(arms)
        assert sequences[0] == sequences[1]


class TestPolicyFactory:
    def test_kind_mapping(self):
        env = bernoulli_chain(3)
        assert isinstance(build_policy(PolicyConfig(kind="mats"), env), MatsPolicy)
        assert isinstance(
            build_policy(PolicyConfig(kind="factored_ucb"), env), FactoredUcbPolicy
        )
        assert isinstance(build_policy(PolicyConfig(kind="scql"), env), ScqlPolicy)
        assert isinstance(build_policy(PolicyConfig(kind="random"), env), RandomPolicy)

    def test_posterior_kind_follows_environment(self):
        assert posterior_kind_for(bernoulli_chain(2)) == "bernoulli"
        assert posterior_kind_for(poisson_chain(2)) == "poisson"

    def test_mats_bank_uses_environment_scale(self):
        env = bernoulli_chain(4)
        policy = build_policy(PolicyConfig(kind="mats"), env)
        assert policy.bank.reward_scale == pytest.approx(3.0)

    def test_config_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            PolicyConfig(kind="bogus")

    def test_fixed_arm_policy(self):
        env = bernoulli_chain(2)
        policy = FixedArmPolicy(env.spec, (0, 1))
        assert policy.select(1, np.random.default_rng(0)) == (0, 1)
