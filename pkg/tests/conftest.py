import numpy as np
import pytest

from noir.arr import BudgetPlan, DenominatorPolicy
from noir.vocab import Vocabulary, synth_vocabulary


@pytest.fixture(scope="session")
def fixture_vocab() -> Vocabulary:
    """The |V|=6, m=3 desk fixture used across the suite."""
    return synth_vocabulary(6, 3, 42, 0.25)


@pytest.fixture(scope="session")
def two_token_vocab() -> Vocabulary:
    return Vocabulary(("a", "b"), np.array([[0.0], [1.0]], dtype=np.float32))


@pytest.fixture(scope="session")
def gap_vocab() -> Vocabulary:
    """Single-feature column {0, 1, 3}: asymmetric distance sets."""
    return Vocabulary(("a", "b", "c"), np.array([[0.0], [1.0], [3.0]], dtype=np.float32))


@pytest.fixture(params=list(DenominatorPolicy), ids=lambda p: p.value)
def policy(request) -> DenominatorPolicy:
    return request.param


def uniform_plan(eps_per_feature: float, dim: int) -> BudgetPlan:
    return BudgetPlan.uniform(eps_per_feature * dim, dim)
