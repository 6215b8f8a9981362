"""Provides the shared fixtures of the test suite."""

import numpy as np
import pytest
import hypothesis

from sl_async_sa.mdp import MdpModel
from sl_async_sa.sa_engine import NoiseKinds, NoiseModel

hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture
def three_state_model() -> MdpModel:
    """Returns a 3-state, 2-action model whose optimal actions are separated by Q* gaps of about 0.5."""
    transitions = np.array(
        [
            [[0.2, 0.5, 0.3], [0.4, 0.3, 0.3]],
            [[0.3, 0.3, 0.4], [0.5, 0.2, 0.3]],
            [[0.3, 0.4, 0.3], [0.2, 0.3, 0.5]],
        ]
    )
    rewards = np.array([[0.9, 0.3], [0.2, 0.8], [0.6, 0.1]])
    return MdpModel(
        transitions=transitions,
        rewards=rewards,
        beta=0.8,
        reward_noise=NoiseModel(kind=NoiseKinds.GAUSSIAN, scale=0.5, truncation=4.0),
    )


@pytest.fixture
def single_state_model() -> MdpModel:
    """Returns the 1-state, 1-action model with r = 1 and β = 0.5, whose action value is 2."""
    return MdpModel(
        transitions=np.ones((1, 1, 1)),
        rewards=np.ones((1, 1)),
        beta=0.5,
        reward_noise=NoiseModel(kind=NoiseKinds.ZERO, scale=0.0),
    )
