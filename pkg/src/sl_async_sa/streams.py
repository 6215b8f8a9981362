"""Provides the named random streams that make every replicate fully determined by its root seed.

Each consumer of randomness (the update scheduler, the additive noise, the tie-breaking selections, the MDP reward
noise, the flow bundles and the initial-state draws) owns an independent numpy Generator derived from the replicate's
root seed and the stream identifier. Adding or removing draws from one stream never changes the draws seen by another.
"""

from enum import IntEnum
from dataclasses import dataclass

import numpy as np


class StreamIds(IntEnum):
    """Defines the identifiers of the independent random streams spawned for each replicate."""

    SCHEDULER = 1
    """The stream used to sample update subsets and, for the MDP, the behavior actions and next states."""
    NOISE = 2
    """The stream used to draw the additive martingale noise of the iteration."""
    TIES = 3
    """The stream used by the random tie-breaking selection policy."""
    REWARD = 4
    """The stream used to draw the MDP reward noise."""
    FLOW = 5
    """The stream used by differential-inclusion flow bundles (random scaling diagonals and vertex choices)."""
    INITIAL = 6
    """The stream used to draw initial states and initial update subsets."""


def stream_generator(seed: int, stream: StreamIds) -> np.random.Generator:
    """Creates the generator for one named stream of the replicate with the given root seed.

    Args:
        seed: The replicate's root seed. Must be a non-negative integer.
        stream: The identifier of the stream to create.

    Returns:
        The numpy Generator seeded from the (seed, stream) pair.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


@dataclass
class ReplicateStreams:
    """Stores the full set of named random streams used by a single replicate run.

    Notes:
        Instances are confined to the worker that runs the replicate and must not be shared across processes.
    """

    seed: int
    """The root seed from which all streams were derived."""
    scheduler: np.random.Generator
    """The update-scheduler stream."""
    noise: np.random.Generator
    """The additive noise stream."""
    ties: np.random.Generator
    """The tie-breaking stream."""
    reward: np.random.Generator
    """The reward noise stream."""
    flow: np.random.Generator
    """The flow-bundle stream."""
    initial: np.random.Generator
    """The initial-state stream."""

    @classmethod
    def from_seed(cls, seed: int) -> ReplicateStreams:
        """Derives all named streams from the input root seed."""
        return cls(
            seed=int(seed),
            scheduler=stream_generator(seed=seed, stream=StreamIds.SCHEDULER),
            noise=stream_generator(seed=seed, stream=StreamIds.NOISE),
            ties=stream_generator(seed=seed, stream=StreamIds.TIES),
            reward=stream_generator(seed=seed, stream=StreamIds.REWARD),
            flow=stream_generator(seed=seed, stream=StreamIds.FLOW),
            initial=stream_generator(seed=seed, stream=StreamIds.INITIAL),
        )
