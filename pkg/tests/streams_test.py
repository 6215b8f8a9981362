"""Contains tests for the named random streams."""

import numpy as np
from hypothesis import given, strategies as st

from sl_async_sa.streams import StreamIds, ReplicateStreams, stream_generator


@given(seed=st.integers(min_value=0, max_value=2**63 - 1))
def test_equal_seeds_reproduce_every_stream(seed: int) -> None:
    """Verifies that two replicates with the same root seed see identical draws on every stream."""
    first = ReplicateStreams.from_seed(seed=seed)
    second = ReplicateStreams.from_seed(seed=seed)
    for name in ("scheduler", "noise", "ties", "reward", "flow", "initial"):
        np.testing.assert_array_equal(getattr(first, name).random(4), getattr(second, name).random(4))


def test_streams_are_independent() -> None:
    """Verifies that different streams and different seeds produce different draws."""
    streams = ReplicateStreams.from_seed(seed=11)
    draws = {name: getattr(streams, name).random(8) for name in ("scheduler", "noise", "ties", "reward")}
    assert len({tuple(values) for values in draws.values()}) == len(draws)
    other = ReplicateStreams.from_seed(seed=12)
    assert not np.array_equal(other.noise.random(8), draws["noise"])


def test_consuming_one_stream_leaves_the_others_unchanged() -> None:
    """Verifies that extra draws on the noise stream never shift the scheduler stream."""
    busy = ReplicateStreams.from_seed(seed=3)
    busy.noise.standard_normal(1_000)
    idle = ReplicateStreams.from_seed(seed=3)
    np.testing.assert_array_equal(busy.scheduler.random(16), idle.scheduler.random(16))


def test_stream_generator_matches_the_replicate_bundle() -> None:
    """Verifies that a single named stream can be recreated outside the bundle."""
    bundle = ReplicateStreams.from_seed(seed=42)
    single = stream_generator(seed=42, stream=StreamIds.REWARD)
    np.testing.assert_array_equal(bundle.reward.random(5), single.random(5))
    assert bundle.seed == 42
