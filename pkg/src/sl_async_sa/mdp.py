"""Provides the discounted Markov decision process application: the model, its exact evaluation oracles, the coupled
actor-critic learner with ε-greedy exploration, and the Lyapunov construction that certifies its convergence.

The critic runs on the fast timescale: Q(s, a) moves toward R + β V(s') with step γ(φ(s, a)), where V(s) is the
policy-weighted Q-row. The actor runs on the slow timescale: π(s) moves toward a best-response vertex of Q(s) with
step μ̂(ν(s)). States are visited by a single trajectory of the model driven by the ε-greedy behavior policy.
"""

import json
from typing import TYPE_CHECKING, Any
from pathlib import Path  # noqa: TC003
from dataclasses import field, dataclass

from numba import njit  # type: ignore[import-untyped]
import numpy as np
import polars as pl
from scipy import linalg
from numpy.typing import NDArray  # noqa: TC002 - Required at runtime for Numba type introspection
from ataraxis_base_utilities import LogLevel, console

from .stepsize import Schedule, ScheduleFamilies
from .sa_engine import NoiseKinds, NoiseModel, TrajectoryLog
from .scheduler import (
    StaticKernel,
    UpdateFamily,
    CallableKernel,
    sample_index,
    validate_chain,
    min_update_proportion,
)
from .mean_field import (
    TIE_TOLERANCE,
    OmegaBox,
    TiePolicies,
    SetValuedField,
    BestResponseField,
    DisplacementField,
    best_response_set,
)
from .two_timescale import JointFamily, RatioTrend, ratio_trend

if TYPE_CHECKING:
    from .streams import ReplicateStreams

_TRANSITION_TOLERANCE: float = 1e-12
"""The largest deviation of a transition row's sum from 1 accepted by the model."""
_POLICY_TOLERANCE: float = 1e-12
"""The largest deviation of a policy row's sum from 1 accepted by the Policy class."""
_SOLVE_RESIDUAL: float = 1e-10
"""The largest residual accepted for the policy-evaluation linear solve."""
_SIMPLEX_DRIFT: float = 1e-9
"""The largest simplex violation of an updated policy row tolerated without renormalization."""
_CLAMP_SLACK: float = 1.0
"""The slack added to r_max / (1 - β) when clamping Q-entries to the compact box."""
_MAXIMUM_TRACKING_ROWS: int = 10_000
"""The largest number of iterations pooled into the windowed critic error."""


@dataclass(frozen=True)
class MdpModel:
    """Defines a finite discounted Markov decision process with a uniform number of actions per state."""

    transitions: NDArray[np.float64]
    """The (states, actions, states) array of transition probabilities P_{ss'}(a)."""
    rewards: NDArray[np.float64]
    """The (states, actions) array of mean rewards r(s, a)."""
    beta: float
    """The discount factor, in (0, 1)."""
    reward_noise: NoiseModel = field(
        default_factory=lambda: NoiseModel(kind=NoiseKinds.GAUSSIAN, scale=0.5, truncation=4.0)
    )
    """The zero-mean noise added to every realized reward."""

    def __post_init__(self) -> None:
        """Converts the arrays and validates the model."""
        transitions = np.asarray(self.transitions, dtype=np.float64)
        rewards = np.atleast_2d(np.asarray(self.rewards, dtype=np.float64))
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "rewards", rewards)

        if transitions.ndim != 3 or transitions.shape[0] != transitions.shape[2]:  # noqa: PLR2004
            message = (
                f"Unable to create the MDP model. Transitions must have shape (states, actions, states), but got "
                f"{transitions.shape}."
            )
            console.error(message=message, error=ValueError)
        if rewards.shape != transitions.shape[:2]:
            message = (
                f"Unable to create the MDP model. Rewards must have shape {transitions.shape[:2]}, but got "
                f"{rewards.shape}."
            )
            console.error(message=message, error=ValueError)
        if not 0.0 < self.beta < 1.0:
            message = f"Unable to create the MDP model. The discount factor must be in (0, 1), but got {self.beta}."
            console.error(message=message, error=ValueError)
        if not np.all(np.isfinite(transitions)) or np.min(transitions) < 0.0:
            message = "Unable to create the MDP model. Transition probabilities must be finite and non-negative."
            console.error(message=message, error=ValueError)
        worst = float(np.max(np.abs(np.sum(transitions, axis=2) - 1.0)))
        if worst > _TRANSITION_TOLERANCE:
            message = (
                f"Unable to create the MDP model. Every transition row must sum to 1 within {_TRANSITION_TOLERANCE}, "
                f"but the largest deviation is {worst:.3e}."
            )
            console.error(message=message, error=ValueError)

    @property
    def n_states(self) -> int:
        """Returns the number of states."""
        return int(self.rewards.shape[0])

    @property
    def n_actions(self) -> int:
        """Returns the number of actions per state."""
        return int(self.rewards.shape[1])

    @property
    def r_max(self) -> float:
        """Returns the largest absolute mean reward."""
        return float(np.max(np.abs(self.rewards)))

    @property
    def q_bound(self) -> float:
        """Returns the half-width r_max / (1 - β) + 1 of the compact box enforced on Q-entries."""
        return self.r_max / (1.0 - self.beta) + _CLAMP_SLACK

    def check_ergodicity(self) -> None:
        """Verifies that the state chain is irreducible and aperiodic under every ε-floored policy.

        Under an ε-floored policy every action has positive probability, so the support graph of the state chain is the
        union of the action graphs. The uniform policy has exactly this support.

        Raises:
            AssumptionViolationError: If the chain is reducible or periodic.
        """
        chain = np.mean(self.transitions, axis=1)
        family = UpdateFamily.singletons(n_components=self.n_states)
        validate_chain(kernel=StaticKernel(chain / np.sum(chain, axis=1, keepdims=True)), family=family, x=np.zeros(1))

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the model."""
        return {
            "states": self.n_states,
            "actions": self.n_actions,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "beta": self.beta,
            "reward_noise": {
                "kind": str(self.reward_noise.kind),
                "scale": self.reward_noise.scale,
                "truncation": self.reward_noise.truncation,
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MdpModel:
        """Builds the model from its dictionary form.

        Raises:
            ValueError: If the declared sizes disagree with the arrays or the action sets are ragged.
        """
        n_states = int(data["states"])
        n_actions = int(data["actions"])
        transitions = data["transitions"]
        rewards = data["rewards"]
        ragged = len(transitions) != n_states or len(rewards) != n_states
        ragged = ragged or any(len(row) != n_actions for row in (*transitions, *rewards))
        ragged = ragged or any(len(target) != n_states for row in transitions for target in row)
        if ragged:
            message = (
                f"Unable to load the MDP model. Every state must have exactly {n_actions} actions and every "
                f"transition row must have {n_states} entries."
            )
            console.error(message=message, error=ValueError)
        noise_data = data.get("reward_noise")
        noise = (
            NoiseModel(kind=NoiseKinds.GAUSSIAN, scale=0.5, truncation=4.0)
            if noise_data is None
            else NoiseModel(
                kind=NoiseKinds(noise_data.get("kind", NoiseKinds.GAUSSIAN)),
                scale=float(noise_data.get("scale", 0.5)),
                truncation=noise_data.get("truncation"),
            )
        )
        return cls(
            transitions=np.asarray(transitions, dtype=np.float64),
            rewards=np.asarray(rewards, dtype=np.float64),
            beta=float(data["beta"]),
            reward_noise=noise,
        )

    @classmethod
    def from_json(cls, path: Path) -> MdpModel:
        """Loads the model from a JSON file and validates the ergodicity of its chain.

        Raises:
            AssumptionViolationError: If the state chain is reducible or periodic.
        """
        model = cls.from_dict(json.loads(path.read_text()))
        model.check_ergodicity()
        return model

    def to_json(self, path: Path) -> None:
        """Writes the model to a JSON file."""
        path.write_text(json.dumps(self.to_dict(), indent=2))


def random_model(
    rng: np.random.Generator, n_states: int, n_actions: int, beta: float, mixing: float = 0.5
) -> MdpModel:
    """Draws a random model with rewards in [0, 1] and transition rows that mix a Dirichlet draw with the uniform row.

    The uniform component keeps every transition probability at least mixing / n_states, which makes the state chain
    irreducible and aperiodic under every policy.
    """
    if not 0.0 < mixing <= 1.0:
        message = f"Unable to draw the random model. The uniform mixing weight must be in (0, 1], but got {mixing}."
        console.error(message=message, error=ValueError)
    dirichlet = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    transitions = (1.0 - mixing) * dirichlet + mixing / n_states
    transitions /= np.sum(transitions, axis=2, keepdims=True)
    rewards = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return MdpModel(transitions=transitions, rewards=rewards, beta=beta)


@dataclass(frozen=True)
class Policy:
    """Stores a stationary randomized policy π and the exploration floor of its ε-greedy behavior version."""

    pi: NDArray[np.float64]
    """The (states, actions) row-stochastic matrix."""
    epsilon_floor: float = 0.0
    """The exploration floor ε of the behavior policy π^ε."""

    def __post_init__(self) -> None:
        """Validates the policy rows."""
        matrix = np.atleast_2d(np.asarray(self.pi, dtype=np.float64))
        object.__setattr__(self, "pi", matrix)
        if not np.all(np.isfinite(matrix)) or np.min(matrix) < 0.0:
            message = "Unable to create the policy. Probabilities must be finite and non-negative."
            console.error(message=message, error=ValueError)
        worst = float(np.max(np.abs(np.sum(matrix, axis=1) - 1.0)))
        if worst > _POLICY_TOLERANCE:
            message = (
                f"Unable to create the policy. Every row must sum to 1 within {_POLICY_TOLERANCE}, but the largest "
                f"deviation is {worst:.3e}."
            )
            console.error(message=message, error=ValueError)
        if self.epsilon_floor < 0.0 or (self.epsilon_floor > 0.0 and self.epsilon_floor >= 1.0 / matrix.shape[1]):
            message = (
                f"Unable to create the policy. The exploration floor must be in [0, {1.0 / matrix.shape[1]}), but got "
                f"{self.epsilon_floor}."
            )
            console.error(message=message, error=ValueError)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, epsilon_floor: float = 0.0) -> Policy:
        """Creates the uniform policy."""
        return cls(pi=np.full((n_states, n_actions), 1.0 / n_actions), epsilon_floor=epsilon_floor)

    @classmethod
    def deterministic(cls, actions: list[int] | NDArray[np.int64], n_actions: int) -> Policy:
        """Creates the pure policy that plays the listed action in every state."""
        chosen = np.asarray(actions, dtype=np.int64)
        matrix = np.zeros((chosen.size, n_actions), dtype=np.float64)
        matrix[np.arange(chosen.size), chosen] = 1.0
        return cls(pi=matrix)

    def behavior(self) -> NDArray[np.float64]:
        """Returns the ε-greedy behavior matrix π^ε."""
        if self.epsilon_floor == 0.0:
            return self.pi.copy()
        return np.vstack([epsilon_greedy(policy_row=row, epsilon=self.epsilon_floor) for row in self.pi])


@dataclass(frozen=True)
class QTable:
    """Stores a (states, actions) table of action values."""

    q: NDArray[np.float64]
    """The action values Q(s, a)."""

    def state_values(self, policy: Policy) -> NDArray[np.float64]:
        """Returns V(s) = Σ_a π(s, a) Q(s, a)."""
        return np.sum(policy.pi * self.q, axis=1)

    def within_bound(self, model: MdpModel) -> bool:
        """Returns True if every entry lies inside the compact box [-q_bound, q_bound]."""
        return bool(np.max(np.abs(self.q)) <= model.q_bound)


def _matrix(policy: Policy | NDArray[np.float64]) -> NDArray[np.float64]:
    """Returns the policy matrix of a Policy or a raw (states, actions) array."""
    return policy.pi if isinstance(policy, Policy) else np.asarray(policy, dtype=np.float64)


def policy_operators(
    model: MdpModel, policy: Policy | NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Returns the policy-averaged reward vector r_π and transition matrix P_π."""
    pi = _matrix(policy)
    return np.sum(pi * model.rewards, axis=1), np.einsum("sa,sat->st", pi, model.transitions)


def _evaluate(model: MdpModel, pi: NDArray[np.float64]) -> NDArray[np.float64]:
    """Solves V = r_π + β P_π V for an arbitrary (not necessarily stochastic) policy matrix."""
    reward, transition = policy_operators(model=model, policy=pi)
    system = np.eye(model.n_states) - model.beta * transition
    values: NDArray[np.float64] = linalg.solve(system, reward)
    return values


def value_function(model: MdpModel, policy: Policy | NDArray[np.float64]) -> NDArray[np.float64]:
    """Computes V^π by a direct solve of the linear system V = r_π + β P_π V.

    Raises:
        RuntimeError: If the solve misses the 1e-10 residual. I - βP_π is always invertible for β < 1, so this
            indicates an internal numerical failure.
    """
    pi = _matrix(policy)
    values = _evaluate(model=model, pi=pi)
    reward, transition = policy_operators(model=model, policy=pi)
    residual = float(np.max(np.abs(values - reward - model.beta * transition @ values)))
    if residual > _SOLVE_RESIDUAL:
        message = f"Unable to evaluate the policy. The linear solve residual {residual:.3e} exceeds {_SOLVE_RESIDUAL}."
        console.error(message=message, error=RuntimeError)
    return values


def _q_from_values(model: MdpModel, values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Returns r(s, a) + β Σ_{s'} P_{ss'}(a) V(s')."""
    result: NDArray[np.float64] = model.rewards + model.beta * np.einsum("sat,t->sa", model.transitions, values)
    return result


def q_values(model: MdpModel, policy: Policy | NDArray[np.float64]) -> QTable:
    """Computes Q^π(s, a) = r(s, a) + β Σ_{s'} P_{ss'}(a) V^π(s')."""
    return QTable(q=_q_from_values(model=model, values=value_function(model=model, policy=policy)))


def bellman_operator(
    model: MdpModel, policy: Policy | NDArray[np.float64], q: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Applies h(π, Q)(s, a) = r(s, a) + β Σ_{s'} P_{ss'}(a) Σ_{a'} π(s', a') Q(s', a'), a β-contraction in Q."""
    table = np.asarray(q, dtype=np.float64).reshape(model.n_states, model.n_actions)
    return _q_from_values(model=model, values=np.sum(_matrix(policy) * table, axis=1))


def best_response(q_row: NDArray[np.float64], tie_tolerance: float = TIE_TOLERANCE) -> tuple[int, ...]:
    """Returns the actions whose values lie within the tie tolerance of the row maximum. Never empty."""
    return best_response_set(q_row=q_row, tie_tolerance=tie_tolerance)


def best_response_vertex(
    q_row: NDArray[np.float64],
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    tie_draw: float = 0.0,
    tie_tolerance: float = TIE_TOLERANCE,
) -> int:
    """Selects one best-response action: the lowest tied index, or the tie at position floor(draw · ties)."""
    actions = best_response(q_row=q_row, tie_tolerance=tie_tolerance)
    if tie_policy == TiePolicies.RANDOM and len(actions) > 1:
        return actions[min(int(tie_draw * len(actions)), len(actions) - 1)]
    return actions[0]


def epsilon_greedy(policy_row: NDArray[np.float64], epsilon: float) -> NDArray[np.float64]:
    """Returns the ε-greedy row π(s, a)(1 - Aε) + ε.

    Raises:
        ValueError: If ε is outside (0, 1/A). Larger floors would invert the policy's preferences.
    """
    row = np.asarray(policy_row, dtype=np.float64)
    if not 0.0 < epsilon < 1.0 / row.size:
        message = (
            f"Unable to build the epsilon-greedy policy. Epsilon must be in (0, {1.0 / row.size}) for {row.size} "
            f"actions, but got {epsilon}."
        )
        console.error(message=message, error=ValueError)
    return row * (1.0 - row.size * epsilon) + epsilon


@dataclass(frozen=True)
class StepOutcome:
    """Stores the result of one actor-critic update."""

    q: NDArray[np.float64]
    """The updated action values Q_{n+1}."""
    pi: NDArray[np.float64]
    """The updated policy π_{n+1}."""
    clamped: bool = False
    """Determines whether the updated Q-entry was clamped to the compact box."""
    drift: float = 0.0
    """The simplex violation of the updated policy row before renormalization (0 when none was needed)."""


def algorithm_step(
    model: MdpModel,
    q: NDArray[np.float64],
    pi: NDArray[np.float64],
    transition: tuple[int, int, int],
    reward: float,
    critic_counts: NDArray[np.int64],
    actor_counts: NDArray[np.int64],
    fast_schedule: Schedule,
    slow_schedule: Schedule,
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    rng: np.random.Generator | None = None,
    tie_draw: float | None = None,
    freeze_policy: bool = False,
    tie_tolerance: float = TIE_TOLERANCE,
) -> StepOutcome:
    """Applies one actor-critic update at the visited pair (s_{n+1}, a_{n+1}) with observed next state s_{n+2}.

    The critic moves Q(s, a) toward R_{n+1} + β V_n(s_{n+2}) with step γ(φ(s, a)). The actor moves π(s) toward a
    best-response vertex of Q_n(s) with step μ̂(ν(s)). Both updates read the pre-update Q_n and π_n.

    Args:
        model: The MDP model.
        q: The (states, actions) action values Q_n. Not modified.
        pi: The (states, actions) policy π_n. Not modified.
        transition: The visited state, the played action and the observed next state.
        reward: The realized reward R_{n+1}, drawn by the caller with mean r(s, a).
        critic_counts: The (states, actions) visit counters φ, already including this visit.
        actor_counts: The per-state visit counters ν, already including this visit.
        fast_schedule: The critic schedule γ.
        slow_schedule: The actor schedule μ̂.
        tie_policy: The best-response selection rule.
        rng: The tie-breaking stream, used by the random policy when no draw is supplied.
        tie_draw: A pre-drawn uniform variate for the random tie policy.
        freeze_policy: Determines whether the actor update is skipped.
        tie_tolerance: The best-response tie tolerance.

    Returns:
        The StepOutcome with the updated tables. Q-entries are clamped to ±(r_max / (1 - β) + 1).
    """
    state, action, next_state = transition
    if critic_counts[state, action] < 1 or actor_counts[state] < 1:
        message = "Unable to apply the actor-critic update. The visit counters must already include the current visit."
        console.error(message=message, error=ValueError)

    value = float(np.sum(pi[next_state] * q[next_state]))
    draw = tie_draw
    if draw is None:
        draw = float(rng.random()) if (tie_policy == TiePolicies.RANDOM and rng is not None) else 0.0
    best = best_response_vertex(q_row=q[state], tie_policy=tie_policy, tie_draw=draw, tie_tolerance=tie_tolerance)

    critic_step = fast_schedule.value(int(critic_counts[state, action]))
    actor_step = slow_schedule.value(int(actor_counts[state]))

    q_next = q.copy()
    updated = q[state, action] + critic_step * (reward + model.beta * value - q[state, action])
    bound = model.q_bound
    clamped = abs(updated) > bound
    q_next[state, action] = min(max(updated, -bound), bound)

    pi_next = pi.copy()
    drift = 0.0
    if not freeze_policy:
        target = np.zeros(model.n_actions, dtype=np.float64)
        target[best] = 1.0
        row = pi[state] + actor_step * (target - pi[state])
        violation = max(abs(float(np.sum(row)) - 1.0), -float(np.min(row)))
        if violation > _SIMPLEX_DRIFT:
            drift = violation
            row = np.maximum(row, 0.0)
            row /= np.sum(row)
            console.echo(
                message=f"Renormalized the policy row of state {state} after a simplex drift of {violation:.3e}.",
                level=LogLevel.WARNING,
            )
        pi_next[state] = row
    return StepOutcome(q=q_next, pi=pi_next, clamped=clamped, drift=drift)


@dataclass(frozen=True)
class ValueIterationResult:
    """Stores the optimal values and the optimal action sets computed by value iteration."""

    values: NDArray[np.float64]
    """The optimal values V*."""
    optimal_actions: tuple[tuple[int, ...], ...]
    """The greedy (optimal) action set of every state."""
    q: NDArray[np.float64]
    """The optimal action values Q*."""
    iterations: int
    """The number of Bellman sweeps performed."""
    residual: float
    """The sup-norm residual of the last sweep."""


def value_iteration(model: MdpModel, tolerance: float = 1e-10, max_iterations: int = 100_000) -> ValueIterationResult:
    """Computes V* by sup-norm fixed-point iteration of the Bellman optimality operator.

    Iterates until the sweep residual is at most tolerance · (1 - β), which bounds the distance to V* by the
    tolerance.

    Raises:
        ValueError: If the tolerance is not positive.
        RuntimeError: If the iteration limit is reached first.
    """
    if tolerance <= 0.0:
        message = f"Unable to run value iteration. The tolerance must be positive, but got {tolerance}."
        console.error(message=message, error=ValueError)
    values = np.zeros(model.n_states, dtype=np.float64)
    threshold = tolerance * (1.0 - model.beta)
    residual = np.inf
    iterations = 0
    while residual > threshold:
        if iterations >= max_iterations:
            message = f"Unable to reach the value iteration tolerance {tolerance} in {max_iterations} sweeps."
            console.error(message=message, error=RuntimeError)
        updated = np.max(_q_from_values(model=model, values=values), axis=1)
        residual = float(np.max(np.abs(updated - values)))
        values = updated
        iterations += 1
    q = _q_from_values(model=model, values=values)
    return ValueIterationResult(
        values=values,
        optimal_actions=tuple(best_response(q_row=row) for row in q),
        q=q,
        iterations=iterations,
        residual=residual,
    )


def optimal_policy(solution: ValueIterationResult, n_actions: int) -> Policy:
    """Returns the pure policy that plays the lowest-index optimal action in every state."""
    return Policy.deterministic(actions=[actions[0] for actions in solution.optimal_actions], n_actions=n_actions)


def is_optimal(solution: ValueIterationResult, policy: Policy, tolerance: float = 1e-9) -> bool:
    """Returns True if the policy only plays optimal actions."""
    for state, actions in enumerate(solution.optimal_actions):
        support = np.flatnonzero(policy.pi[state] > tolerance)
        if not set(support.tolist()) <= set(actions):
            return False
    return True


def advantage(model: MdpModel, policy: Policy | NDArray[np.float64]) -> NDArray[np.float64]:
    """Returns K_{s,a}(π) = Q^π(s, a) - V^π(s)."""
    values = value_function(model=model, policy=policy)
    return _q_from_values(model=model, values=values) - values[:, np.newaxis]


def lyapunov_W(  # noqa: N802
    model: MdpModel, policy: Policy | NDArray[np.float64], optimal_values: NDArray[np.float64]
) -> float:
    """Returns W(π) = Σ_s (V*(s) - V^π(s)), which is zero exactly at optimal policies."""
    return float(np.sum(optimal_values - _evaluate(model=model, pi=_matrix(policy))))


def lyapunov_gradient(model: MdpModel, policy: Policy | NDArray[np.float64]) -> NDArray[np.float64]:
    """Returns ∂W/∂π(s, a) = -(1ᵀ(I - βP_π)^{-1})_s · Q^π(s, a)."""
    pi = _matrix(policy)
    _, transition = policy_operators(model=model, policy=pi)
    system = np.eye(model.n_states) - model.beta * transition
    occupancy: NDArray[np.float64] = linalg.solve(system.T, np.ones(model.n_states))
    q = _q_from_values(model=model, values=_evaluate(model=model, pi=pi))
    return -occupancy[:, np.newaxis] * q


def _normalized_rows(values: NDArray[np.float64], n_states: int, n_actions: int) -> NDArray[np.float64]:
    """Reshapes a flattened policy and projects each row back onto the simplex by clipping and rescaling."""
    matrix = np.maximum(np.asarray(values, dtype=np.float64).reshape(n_states, n_actions), 0.0)
    totals = np.sum(matrix, axis=1, keepdims=True)
    return np.where(totals > 0.0, matrix / np.where(totals > 0.0, totals, 1.0), 1.0 / n_actions)


def joint_kernel(model: MdpModel, epsilon: float) -> CallableKernel:
    """Builds the (s, a) → (s', a') scheduling kernel P_{ss'}(a) · π^ε(s', a') of the actor-critic learner.

    The kernel reads the policy from the first states · actions coordinates of its input. Rows are renormalized before
    use so that the kernel stays defined under the perturbations of the Lipschitz probe.
    """
    n_states, n_actions = model.n_states, model.n_actions

    def _row(current: int, x: NDArray[np.float64]) -> NDArray[np.float64]:
        state, action = divmod(current, n_actions)
        pi = _normalized_rows(x[: n_states * n_actions], n_states, n_actions)
        behavior = pi * (1.0 - n_actions * epsilon) + epsilon
        return (model.transitions[state, action][:, np.newaxis] * behavior).ravel()

    return CallableKernel(function=_row, n_subsets=n_states * n_actions)


def state_action_family(model: MdpModel) -> UpdateFamily:
    """Returns the family of singleton (s, a) subsets, indexed by s · actions + a."""
    return UpdateFamily.singletons(n_components=model.n_states * model.n_actions)


def actor_critic_family(model: MdpModel) -> JointFamily:
    """Returns the joint family whose element (s, a) updates the slow state component s and the fast pair (s, a)."""
    n_states, n_actions = model.n_states, model.n_actions
    subsets = tuple(
        (state, n_states + state * n_actions + action) for state in range(n_states) for action in range(n_actions)
    )
    return JointFamily(
        family=UpdateFamily(subsets=subsets, n_components=n_states + n_states * n_actions), n_slow=n_states
    )


class BellmanTarget(SetValuedField):
    """Implements the single-valued critic target (π, Q) ↦ h(π, Q) over the concatenated point z = (π, Q)."""

    def __init__(self, model: MdpModel) -> None:
        self.model = model
        self.dimension = model.n_states * model.n_actions
        self.growth_constant = float(np.sqrt(self.dimension)) * (model.r_max + model.beta)

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,  # noqa: ARG002
        rng: np.random.Generator | None = None,  # noqa: ARG002
    ) -> NDArray[np.float64]:
        """Returns h(π, Q), flattened."""
        size = self.dimension
        pi = x[:size].reshape(self.model.n_states, self.model.n_actions)
        return bellman_operator(model=self.model, policy=pi, q=x[size : 2 * size]).ravel()

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Returns the single point h(π, Q)."""
        return self.select(x)[np.newaxis, :]


def strategy_field(model: MdpModel) -> DisplacementField:
    """Returns the reduced strategy field π ↦ b(Q^π) - π, set-valued at best-response ties."""
    n_states, n_actions = model.n_states, model.n_actions

    def _q(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return _q_from_values(model=model, values=_evaluate(model=model, pi=_normalized_rows(x, n_states, n_actions)))

    return DisplacementField(target=BestResponseField(q_function=_q, n_states=n_states, n_actions=n_actions))


def actor_field(model: MdpModel) -> DisplacementField:
    """Returns the coupled slow field (π, Q) ↦ b(Q) - π over the concatenated point z = (π, Q)."""
    size = model.n_states * model.n_actions
    target = BestResponseField(
        q_function=lambda z: z[size : 2 * size], n_states=model.n_states, n_actions=model.n_actions
    )
    return DisplacementField(target=target, offset=0)


def critic_field(model: MdpModel) -> DisplacementField:
    """Returns the coupled fast field (π, Q) ↦ h(π, Q) - Q over the concatenated point z = (π, Q)."""
    return DisplacementField(target=BellmanTarget(model=model), offset=model.n_states * model.n_actions)


def strategy_box(model: MdpModel, epsilon: float) -> OmegaBox:
    """Returns the scaling box with one diagonal entry per state, shared by all of the state's actions."""
    return OmegaBox(epsilon=epsilon, n_blocks=model.n_states, block_size=model.n_actions)


def sign_property(model: MdpModel, policy: Policy | NDArray[np.float64], omega: NDArray[np.float64]) -> float:
    """Returns the smallest ⟨ω_s (π̃_s - π_s), K_s(π)⟩ over states and best-response vertices π̃_s."""
    pi = _matrix(policy)
    values = value_function(model=model, policy=pi)
    q = _q_from_values(model=model, values=values)
    gaps = q - values[:, np.newaxis]
    smallest = np.inf
    for state in range(model.n_states):
        for action in best_response(q_row=q[state]):
            target = np.zeros(model.n_actions, dtype=np.float64)
            target[action] = 1.0
            smallest = min(smallest, float(omega[state] * np.dot(target - pi[state], gaps[state])))
    return smallest


@dataclass(frozen=True)
class LearnerSettings:
    """Defines the schedules, exploration floor and selection rules of the actor-critic learner."""

    fast_schedule: Schedule = Schedule(family=ScheduleFamilies.POWER, exponent=0.6)
    """The critic schedule γ."""
    slow_schedule: Schedule = Schedule(family=ScheduleFamilies.POWER, exponent=1.0)
    """The actor schedule μ̂."""
    epsilon: float = 0.05
    """The exploration floor of the ε-greedy behavior policy."""
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX
    """The best-response selection rule."""
    tie_tolerance: float = TIE_TOLERANCE
    """The best-response tie tolerance."""


@njit(cache=True)
def _draw_action(pi: NDArray[np.float64], state: int, u: float, epsilon: float) -> int:
    """Samples an action from the ε-greedy row of the state with the inverse-CDF rule."""
    n_actions = pi.shape[1]
    accumulator = 0.0
    for action in range(n_actions):
        accumulator += pi[state, action] * (1.0 - n_actions * epsilon) + epsilon
        if u < accumulator:
            return action
    return n_actions - 1


@njit(cache=True)
def _actor_critic_kernel(
    cumulative: NDArray[np.float64],
    rewards: NDArray[np.float64],
    beta: float,
    pi: NDArray[np.float64],
    q: NDArray[np.float64],
    state: int,
    action_uniforms: NDArray[np.float64],
    next_uniforms: NDArray[np.float64],
    reward_noise: NDArray[np.float64],
    tie_uniforms: NDArray[np.float64],
    epsilon: float,
    fast_exponents: NDArray[np.float64],
    slow_exponents: NDArray[np.float64],
    random_ties: bool,
    freeze_policy: bool,
    q_bound: float,
    tie_tolerance: float,
    critic_counts: NDArray[np.int64],
    actor_counts: NDArray[np.int64],
    pi_out: NDArray[np.float64],
    q_out: NDArray[np.float64],
    slow_alpha: NDArray[np.float64],
    fast_alpha: NDArray[np.float64],
    states: NDArray[np.int64],
    actions: NDArray[np.int64],
    events: NDArray[np.int64],
) -> None:
    """Runs the actor-critic learner over pre-drawn randomness.

    Notes:
        Uses numba-acceleration. Applies the same sampling rules, step-size formula, update order, clamping and
        renormalization as the Python path built on `algorithm_step`. Events are counted as (clamps,
        renormalizations).
    """
    n_states, n_actions = rewards.shape
    n_iterations = next_uniforms.shape[0]
    action = _draw_action(pi, state, action_uniforms[0], epsilon)
    for step in range(n_iterations):
        states[step] = state
        actions[step] = action

        next_state = n_states - 1
        for candidate in range(n_states):
            if next_uniforms[step] < cumulative[state, action, candidate]:
                next_state = candidate
                break
        reward = rewards[state, action] + reward_noise[step]

        critic_counts[state, action] += 1
        actor_counts[state] += 1
        visits = float(critic_counts[state, action])
        critic_step = visits ** -fast_exponents[0] / max(np.log(visits), 1.0) ** fast_exponents[1]
        visits = float(actor_counts[state])
        actor_step = visits ** -slow_exponents[0] / max(np.log(visits), 1.0) ** slow_exponents[1]

        value = 0.0
        for candidate in range(n_actions):
            value += pi[next_state, candidate] * q[next_state, candidate]

        # Selects the best-response vertex from the pre-update action values.
        largest = q[state, 0]
        for candidate in range(1, n_actions):
            largest = max(largest, q[state, candidate])
        ties = 0
        for candidate in range(n_actions):
            if q[state, candidate] >= largest - tie_tolerance:
                ties += 1
        position = 0
        if random_ties and ties > 1:
            position = min(int(tie_uniforms[step] * ties), ties - 1)
        best = 0
        seen = 0
        for candidate in range(n_actions):
            if q[state, candidate] >= largest - tie_tolerance:
                if seen == position:
                    best = candidate
                    break
                seen += 1

        updated = q[state, action] + critic_step * (reward + beta * value - q[state, action])
        if abs(updated) > q_bound:
            events[0] += 1
        q[state, action] = min(max(updated, -q_bound), q_bound)

        if not freeze_policy:
            total = 0.0
            smallest = 1.0
            for candidate in range(n_actions):
                target = 1.0 if candidate == best else 0.0
                pi[state, candidate] = pi[state, candidate] + actor_step * (target - pi[state, candidate])
                total += pi[state, candidate]
                smallest = min(smallest, pi[state, candidate])
            if max(abs(total - 1.0), -smallest) > 1e-9:
                events[1] += 1
                total = 0.0
                for candidate in range(n_actions):
                    pi[state, candidate] = max(pi[state, candidate], 0.0)
                    total += pi[state, candidate]
                for candidate in range(n_actions):
                    pi[state, candidate] /= total

        slow_alpha[step] = actor_step
        fast_alpha[step] = critic_step
        for row in range(n_states):
            for column in range(n_actions):
                pi_out[step + 1, row * n_actions + column] = pi[row, column]
                q_out[step + 1, row * n_actions + column] = q[row, column]

        state = next_state
        action = _draw_action(pi, state, action_uniforms[step + 1], epsilon)


@dataclass
class ActorCriticRun:
    """Stores the full record of one actor-critic learning run."""

    n_states: int
    """The number of states."""
    n_actions: int
    """The number of actions per state."""
    pi_path: NDArray[np.float64] = field(repr=False)
    """The (iterations + 1, states · actions) flattened policies π_0, ..., π_N."""
    q_path: NDArray[np.float64] = field(repr=False)
    """The (iterations + 1, states · actions) flattened action values Q_0, ..., Q_N."""
    states: NDArray[np.int64] = field(repr=False)
    """The visited state s_{n+1} of every iteration."""
    actions: NDArray[np.int64] = field(repr=False)
    """The played action a_{n+1} of every iteration."""
    slow_alpha: NDArray[np.float64] = field(repr=False)
    """The actor step μ̂(ν(s_{n+1})) of every iteration."""
    fast_alpha: NDArray[np.float64] = field(repr=False)
    """The critic step γ(φ(s_{n+1}, a_{n+1})) of every iteration."""
    critic_counts: NDArray[np.int64] = field(repr=False)
    """The final (states, actions) visit counters φ_N."""
    actor_counts: NDArray[np.int64] = field(repr=False)
    """The final per-state visit counters ν_N."""
    clamp_events: int = 0
    """The number of Q-updates clamped to the compact box."""
    renormalizations: int = 0
    """The number of policy rows renormalized after a simplex drift."""

    @property
    def n_iterations(self) -> int:
        """Returns the number of iterations N."""
        return int(self.states.size)

    @property
    def pairs(self) -> NDArray[np.int64]:
        """Returns the visited (s, a) pair index s · actions + a of every iteration."""
        return self.states * self.n_actions + self.actions

    @property
    def ratios(self) -> NDArray[np.float64]:
        """Returns the step-size ratios ᾱ_n / γ̄_n."""
        return self.slow_alpha / self.fast_alpha

    def policy(self, n: int) -> NDArray[np.float64]:
        """Returns the (states, actions) policy π_n."""
        return self.pi_path[n].reshape(self.n_states, self.n_actions)

    def q_table(self, n: int) -> NDArray[np.float64]:
        """Returns the (states, actions) action values Q_n."""
        return self.q_path[n].reshape(self.n_states, self.n_actions)

    def visit_fractions(self, n: int) -> NDArray[np.float64]:
        """Returns the empirical update proportions φ_n(s, a) / n of every pair."""
        counts = np.bincount(self.pairs[:n], minlength=self.n_states * self.n_actions)
        return counts / float(n)

    def slow_log(self) -> TrajectoryLog:
        """Returns the strategy trajectory as a block-structured log with one component per state."""
        mu = np.zeros((self.n_iterations, self.n_states), dtype=np.float64)
        mu[np.arange(self.n_iterations), self.states] = 1.0
        return TrajectoryLog.from_knots(
            tau_bar=np.concatenate([[0.0], np.cumsum(self.slow_alpha)]),
            x=self.pi_path,
            mu=mu,
            block_size=self.n_actions,
            subsets=self.pairs,
        )

    def fast_log(self) -> TrajectoryLog:
        """Returns the critic trajectory as a log with one component per (s, a) pair."""
        mu = np.zeros((self.n_iterations, self.n_states * self.n_actions), dtype=np.float64)
        mu[np.arange(self.n_iterations), self.pairs] = 1.0
        return TrajectoryLog.from_knots(
            tau_bar=np.concatenate([[0.0], np.cumsum(self.fast_alpha)]),
            x=self.q_path,
            mu=mu,
            subsets=self.pairs,
        )


def run_actor_critic(
    model: MdpModel,
    settings: LearnerSettings,
    streams: ReplicateStreams,
    n_iterations: int,
    freeze_policy: bool = False,
    initial_policy: Policy | None = None,
    initial_q: NDArray[np.float64] | None = None,
    compiled: bool = True,
) -> ActorCriticRun:
    """Simulates the actor-critic learner for a fixed number of iterations.

    All randomness is pre-drawn: the initial state from the initial stream, the action and next-state uniforms from the
    scheduler stream, the reward noise from the reward stream and the tie uniforms from the tie stream. The compiled
    kernel and the Python loop over `algorithm_step` consume the same draws.

    Args:
        model: The MDP model.
        settings: The learner settings.
        streams: The replicate's named random streams.
        n_iterations: The number of iterations.
        freeze_policy: Determines whether the actor is frozen, leaving a pure critic run.
        initial_policy: The initial policy. Defaults to the uniform policy.
        initial_q: The initial action values. Defaults to zero.
        compiled: Determines whether the compiled kernel is used.

    Returns:
        The ActorCriticRun record.
    """
    if n_iterations < 1:
        message = f"Unable to run the actor-critic learner. The iteration count must be positive, got {n_iterations}."
        console.error(message=message, error=ValueError)
    epsilon_greedy(policy_row=np.full(model.n_actions, 1.0 / model.n_actions), epsilon=settings.epsilon)

    n_states, n_actions = model.n_states, model.n_actions
    pi = (Policy.uniform(n_states, n_actions) if initial_policy is None else initial_policy).pi.copy()
    q = np.zeros((n_states, n_actions)) if initial_q is None else np.asarray(initial_q, dtype=np.float64).copy()
    state = int(streams.initial.integers(n_states))
    action_uniforms = streams.scheduler.random(n_iterations + 1)
    next_uniforms = streams.scheduler.random(n_iterations)
    reward_noise = model.reward_noise.sample(rng=streams.reward, shape=(n_iterations,))
    tie_uniforms = (
        streams.ties.random(n_iterations) if settings.tie_policy == TiePolicies.RANDOM else np.zeros(n_iterations)
    )

    size = n_states * n_actions
    pi_path = np.empty((n_iterations + 1, size), dtype=np.float64)
    q_path = np.empty((n_iterations + 1, size), dtype=np.float64)
    pi_path[0] = pi.ravel()
    q_path[0] = q.ravel()
    states = np.empty(n_iterations, dtype=np.int64)
    actions = np.empty(n_iterations, dtype=np.int64)
    slow_alpha = np.empty(n_iterations, dtype=np.float64)
    fast_alpha = np.empty(n_iterations, dtype=np.float64)
    critic_counts = np.zeros((n_states, n_actions), dtype=np.int64)
    actor_counts = np.zeros(n_states, dtype=np.int64)
    events = np.zeros(2, dtype=np.int64)

    if compiled:
        _actor_critic_kernel(
            np.cumsum(model.transitions, axis=2),
            model.rewards,
            model.beta,
            pi,
            q,
            state,
            action_uniforms,
            next_uniforms,
            reward_noise,
            tie_uniforms,
            settings.epsilon,
            np.asarray([settings.fast_schedule.exponent, settings.fast_schedule.log_exponent]),
            np.asarray([settings.slow_schedule.exponent, settings.slow_schedule.log_exponent]),
            settings.tie_policy == TiePolicies.RANDOM,
            freeze_policy,
            model.q_bound,
            settings.tie_tolerance,
            critic_counts,
            actor_counts,
            pi_path,
            q_path,
            slow_alpha,
            fast_alpha,
            states,
            actions,
            events,
        )
    else:
        cumulative = np.cumsum(model.transitions, axis=2)
        action = sample_index(cumulative=np.cumsum(epsilon_greedy(pi[state], settings.epsilon)), u=action_uniforms[0])
        for step in range(n_iterations):
            states[step] = state
            actions[step] = action
            next_state = sample_index(cumulative=cumulative[state, action], u=float(next_uniforms[step]))
            reward = float(model.rewards[state, action] + reward_noise[step])
            critic_counts[state, action] += 1
            actor_counts[state] += 1
            outcome = algorithm_step(
                model=model,
                q=q,
                pi=pi,
                transition=(state, action, next_state),
                reward=reward,
                critic_counts=critic_counts,
                actor_counts=actor_counts,
                fast_schedule=settings.fast_schedule,
                slow_schedule=settings.slow_schedule,
                tie_policy=settings.tie_policy,
                tie_draw=float(tie_uniforms[step]),
                freeze_policy=freeze_policy,
                tie_tolerance=settings.tie_tolerance,
            )
            events[0] += int(outcome.clamped)
            events[1] += int(outcome.drift > 0.0)
            q, pi = outcome.q, outcome.pi
            slow_alpha[step] = settings.slow_schedule.value(int(actor_counts[state]))
            fast_alpha[step] = settings.fast_schedule.value(int(critic_counts[state, action]))
            pi_path[step + 1] = pi.ravel()
            q_path[step + 1] = q.ravel()
            state = next_state
            behavior = epsilon_greedy(pi[state], settings.epsilon)
            action = sample_index(cumulative=np.cumsum(behavior), u=float(action_uniforms[step + 1]))

    if events[0] > 0:
        console.echo(
            message=f"Clamped {events[0]} critic updates to the compact box of half-width {model.q_bound:.4g}.",
            level=LogLevel.WARNING,
        )
    return ActorCriticRun(
        n_states=n_states,
        n_actions=n_actions,
        pi_path=pi_path,
        q_path=q_path,
        states=states,
        actions=actions,
        slow_alpha=slow_alpha,
        fast_alpha=fast_alpha,
        critic_counts=critic_counts,
        actor_counts=actor_counts,
        clamp_events=int(events[0]),
        renormalizations=int(events[1]),
    )


def checkpoint_iterations(n_iterations: int, every: int) -> NDArray[np.int64]:
    """Returns the checkpoint iterations every, 2·every, ..., always including the last iteration."""
    if every < 1:
        message = f"Unable to place checkpoints. The checkpoint cadence must be positive, but got {every}."
        console.error(message=message, error=ValueError)
    points = np.arange(every, n_iterations + 1, every, dtype=np.int64)
    if points.size == 0 or points[-1] != n_iterations:
        points = np.append(points, n_iterations)
    return points


def checkpoint_table(
    run: ActorCriticRun, model: MdpModel, optimal_values: NDArray[np.float64], every: int
) -> pl.DataFrame:
    """Evaluates W(π_n), max_s |V^{π_n}(s) - V*(s)| and ‖Q_n - Q^{π_n}‖∞ at every checkpoint."""
    rows: dict[str, list[Any]] = {"n": [], "lyapunov": [], "value_gap": [], "tracking_error": []}
    for n in checkpoint_iterations(n_iterations=run.n_iterations, every=every):
        pi = run.policy(int(n))
        values = value_function(model=model, policy=pi)
        q_exact = _q_from_values(model=model, values=values)
        rows["n"].append(int(n))
        rows["lyapunov"].append(float(np.sum(optimal_values - values)))
        rows["value_gap"].append(float(np.max(np.abs(values - optimal_values))))
        rows["tracking_error"].append(float(np.max(np.abs(run.q_table(int(n)) - q_exact))))
    return pl.DataFrame(rows)


def windowed_critic_error(
    run: ActorCriticRun,
    model: MdpModel,
    window: float = 0.5,
    until: int | None = None,
    max_rows: int = _MAXIMUM_TRACKING_ROWS,
) -> float:
    """Returns ‖median_n (Q_n - Q^{π_n})‖∞ over the trailing fraction of the iterations up to until.

    The critic keeps fluctuating around Q^{π_n} at the scale of the reward noise, so its terminal distance overstates
    the tracking error. The componentwise median over a trailing window averages that fluctuation out. Q^{π_n} is only
    re-solved when the policy changes, and long windows are thinned to at most max_rows evenly spaced iterations.

    Args:
        run: The learning run.
        model: The MDP model.
        window: The trailing fraction of the iterations to pool, in (0, 1].
        until: The last pooled iteration. Defaults to the last iteration of the run.
        max_rows: The largest number of iterations pooled into the median.

    Raises:
        ValueError: If the window fraction lies outside (0, 1].
    """
    if not 0.0 < window <= 1.0:
        message = f"Unable to compute the windowed critic error. The window must lie in (0, 1], but got {window}."
        console.error(message=message, error=ValueError)
    last = run.n_iterations if until is None else min(max(until, 0), run.n_iterations)
    start = min(last, int(np.floor((1.0 - window) * last)))
    stride = max(1, (last - start + 1) // max_rows)
    iterations = range(start, last + 1, stride)
    residuals = np.empty((len(iterations), run.q_path.shape[1]), dtype=np.float64)
    previous: NDArray[np.float64] | None = None
    q_exact = np.zeros(run.q_path.shape[1], dtype=np.float64)
    for row, n in enumerate(iterations):
        pi = run.pi_path[n]
        if previous is None or not np.array_equal(pi, previous):
            values = value_function(model=model, policy=run.policy(n))
            q_exact = _q_from_values(model=model, values=values).ravel()
            previous = pi
        residuals[row] = run.q_path[n] - q_exact
    return float(np.max(np.abs(np.median(residuals, axis=0))))


@dataclass
class ActorCriticReport:
    """Stores the diagnostics of one actor-critic run."""

    checkpoints: pl.DataFrame = field(repr=False)
    """The per-checkpoint table (n, lyapunov, value_gap, tracking_error)."""
    eta_hat: float
    """The minimum stationary (s, a) mass of the scheduling chain over the checkpoint policies."""
    occupancy_ratio: float
    """The smallest (φ_n(s, a) / n) / η̂ over pairs and occupancy checkpoints."""
    ratio: RatioTrend
    """The decade comparison of the step-size ratios."""
    terminal_ratio: float
    """The step-size ratio at the ratio probe iteration."""
    clamp_events: int
    """The number of clamped critic updates."""
    renormalizations: int
    """The number of renormalized policy rows."""
    windowed_tracking_error: float = 0.0
    """The sup norm of the median critic residual Q_n - Q^{π_n} over the trailing tracking window."""

    @property
    def terminal_value_gap(self) -> float:
        """Returns max_s |V^{π_N}(s) - V*(s)|."""
        return float(self.checkpoints["value_gap"][-1])

    @property
    def occupancy_passed(self) -> bool:
        """Returns True if every pair kept at least 0.9 η̂ of the updates at every occupancy checkpoint."""
        return self.occupancy_ratio >= 0.9  # noqa: PLR2004

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the report."""
        return {
            "terminal_value_gap": self.terminal_value_gap,
            "terminal_lyapunov": float(self.checkpoints["lyapunov"][-1]),
            "terminal_tracking_error": float(self.checkpoints["tracking_error"][-1]),
            "windowed_tracking_error": self.windowed_tracking_error,
            "eta_hat": self.eta_hat,
            "occupancy_ratio": self.occupancy_ratio,
            "occupancy_passed": self.occupancy_passed,
            "ratio_trend": self.ratio.to_dict(),
            "terminal_ratio": self.terminal_ratio,
            "clamp_events": self.clamp_events,
            "renormalizations": self.renormalizations,
        }


def actor_critic_report(
    run: ActorCriticRun,
    model: MdpModel,
    settings: LearnerSettings,
    optimal_values: NDArray[np.float64],
    checkpoint_every: int = 10_000,
    occupancy_from: int = 10_000,
    ratio_probe: int | None = None,
    tracking_window: float = 0.5,
) -> ActorCriticReport:
    """Computes the checkpoint table, the occupancy check, the ratio diagnostic and the windowed critic error.

    Args:
        run: The learning run.
        model: The MDP model.
        settings: The learner settings used by the run.
        optimal_values: V* from value iteration.
        checkpoint_every: The checkpoint cadence.
        occupancy_from: The first checkpoint iteration included in the occupancy check.
        ratio_probe: The iteration at which the step-size ratio is reported. Defaults to the last iteration.
        tracking_window: The trailing fraction of the iterations pooled into the windowed critic error.

    Returns:
        The ActorCriticReport.
    """
    table = checkpoint_table(run=run, model=model, optimal_values=optimal_values, every=checkpoint_every)
    points = [int(n) for n in table["n"]]
    eta_hat = min_update_proportion(
        kernel=joint_kernel(model=model, epsilon=settings.epsilon),
        family=state_action_family(model=model),
        x_grid=[run.pi_path[n] for n in [0, *points]],
    )
    occupancy_points = [n for n in points if n >= occupancy_from] or [points[-1]]
    occupancy_ratio = min(float(np.min(run.visit_fractions(n))) for n in occupancy_points) / eta_hat
    probe = run.n_iterations if ratio_probe is None else ratio_probe
    return ActorCriticReport(
        checkpoints=table,
        eta_hat=eta_hat,
        occupancy_ratio=occupancy_ratio,
        ratio=ratio_trend(ratios=run.ratios),
        terminal_ratio=float(run.ratios[probe - 1]),
        clamp_events=run.clamp_events,
        renormalizations=run.renormalizations,
        windowed_tracking_error=windowed_critic_error(run=run, model=model, window=tracking_window),
    )
