import numpy as np
import hypothesis.strategies as st
import pytest
from hypothesis import settings

from qhmpe import envs
from qhmpe.mdp import FiniteMdp, QhDiscount

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@st.composite
def mdps(draw, max_states=8, max_actions=4):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, max_states))
    k = draw(st.integers(1, max_actions))
    return envs.random_mdp(seed, n, k, (-10.0, 10.0))


def random_policy(mdp: FiniteMdp, rng: np.random.Generator) -> np.ndarray:
    pi = np.empty(mdp.n_pairs)
    for i in range(mdp.n_states):
        sl = mdp.state_slice(i)
        pi[sl] = rng.dirichlet(np.ones(sl.stop - sl.start))
    return pi


@st.composite
def mdp_and_policy(draw, max_states=8, max_actions=4):
    mdp = draw(mdps(max_states, max_actions))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    return mdp, random_policy(mdp, rng)


discounts = st.builds(
    QhDiscount,
    sigma=st.floats(0.0, 1.0),
    gamma=st.floats(0.0, 0.95),
)


@pytest.fixture
def two_state():
    return envs.two_state()


@pytest.fixture
def inventory():
    return envs.inventory()
