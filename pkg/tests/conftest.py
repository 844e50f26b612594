import numpy as np
import pytest

from factored_bandits import FactorTable, MamabSpec, validate_spec


def random_spec(
    rng: np.random.Generator,
    max_agents: int = 8,
    max_actions: int = 4,
    max_group_size: int = 3,
) -> MamabSpec:
    """Random valid problem structure (every agent covered)."""
    m = int(rng.integers(1, max_agents + 1))
    counts = tuple(int(c) for c in rng.integers(1, max_actions + 1, size=m))
    groups = []
    for _ in range(int(rng.integers(1, m + 2))):
        size = int(rng.integers(1, min(max_group_size, m) + 1))
        members = tuple(sorted(int(i) for i in rng.choice(m, size=size, replace=False)))
        groups.append(members)
    covered = {i for g in groups for i in g}
    for i in range(m):
        if i not in covered:
            groups.append((i,))
    spec = MamabSpec(num_agents=m, action_counts=counts, groups=tuple(groups))
    validate_spec(spec)
    return spec


def random_tables(rng: np.random.Generator, spec: MamabSpec) -> list[FactorTable]:
    return [
        FactorTable(group=e, values=rng.random(spec.local_arm_count(e)))
        for e in range(spec.num_groups)
    ]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240731)
