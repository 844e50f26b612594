"""Thompson sampling and baselines for loosely coupled multi-agent bandits."""

from .environments import (
    Environment,
    bernoulli_chain,
    build_preset,
    gem_mining,
    poisson_chain,
)
from .maximizer import (
    MaxResult,
    brute_force_argmax,
    choose_order,
    induced_width,
    variable_elimination,
)
from .model import (
    FactorTable,
    JointArm,
    LocalArm,
    MamabSpec,
    SpecError,
    coordination_graph,
    global_mean,
    local_arm_actions,
    project,
    project_all,
    regret_delta,
    validate_spec,
)
from .policies import (
    FactoredUcbPolicy,
    FixedArmPolicy,
    MatsPolicy,
    PolicyConfig,
    RandomPolicy,
    ScqlPolicy,
    build_policy,
    mats_select,
    random_select,
    scql_select,
    ucb_select,
)
from .posteriors import PosteriorBank, batch_fit, ucb_score
from .runner import (
    ExperimentConfig,
    RegretTrace,
    aggregate,
    bound_curve,
    checkpoints,
    derive_run_seed,
    run_experiment,
    run_one,
)

__version__ = "0.1.0"
