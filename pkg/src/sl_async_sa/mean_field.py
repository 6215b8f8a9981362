"""Provides the set-valued mean fields F(·) that drive the stochastic approximation engines, the Ω^ε scaling box that
absorbs asynchronous updates into the mean field, and the selection machinery shared by the simulation engines and the
differential-inclusion integrators.

Set-valued maps are represented by a selection oracle plus an optional finite vertex description. Set arithmetic is
only implemented for polytopal (finite-vertex) sets.
"""

from abc import ABC, abstractmethod
from enum import StrEnum
from math import prod
from typing import TYPE_CHECKING
from itertools import product
from dataclasses import field, dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linprog
from ataraxis_base_utilities import console

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

TIE_TOLERANCE: float = 1e-9
"""The absolute tolerance within which two Q-values are treated as tied by best-response fields."""
_BOX_TOLERANCE: float = 1e-12
"""The slack tolerated when checking that a scaling diagonal lies inside the Ω^ε box."""
_MAXIMUM_ENUMERATED_CORNERS: int = 4096
"""The largest number of box corners (or vertex combinations) enumerated exhaustively."""


class TiePolicies(StrEnum):
    """Defines the rules used to pick a single element of a set-valued field."""

    LOWEST_INDEX = "lowest-index"
    """Deterministically picks the lowest-index element (for intervals at kinks, the interval midpoint)."""
    RANDOM = "random"
    """Picks a uniformly random vertex using the caller's tie-breaking stream."""


class SetValuedField(ABC):
    """Defines the interface of a set-valued mean field F: R^n ⇉ R^K.

    Subclasses provide a measurable selection oracle and, when available, a finite list of extreme points of F(x).
    The input dimension may differ from the output dimension (two-timescale fields read the concatenated (x, y)).
    """

    dimension: int
    """The output dimension K of the field."""
    growth_constant: float
    """The constant c of the linear growth bound ‖f‖ ≤ c(1 + ‖x‖) for all f ∈ F(x)."""

    @abstractmethod
    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns one element f ∈ F(x) chosen by the tie policy."""
        raise NotImplementedError

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:  # noqa: ARG002
        """Returns the (m, K) array of extreme points of F(x), or None when the field is a black box."""
        return None

    @property
    def has_vertices(self) -> bool:
        """Returns True if the field exposes a finite vertex description."""
        return True


def _require_finite(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Converts the input to a float array and rejects non-finite entries."""
    array = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        message = "Unable to evaluate the mean field. The input point contains non-finite entries."
        console.error(message=message, error=ValueError)
    return array


def select(
    field: SetValuedField,
    x: NDArray[np.float64],
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    rng: np.random.Generator | None = None,
) -> NDArray[np.float64]:
    """Returns a measurable selection f ∈ F(x) of the input field.

    Args:
        field: The evaluated set-valued field.
        x: The evaluation point.
        tie_policy: The rule used to pick among multiple elements. The lowest-index policy is deterministic.
        rng: The tie-breaking stream. Required by the random policy.

    Returns:
        The selected element of F(x).

    Raises:
        ValueError: If x contains non-finite entries, or the random policy is requested without a stream.
    """
    if tie_policy == TiePolicies.RANDOM and rng is None:
        message = "Unable to select from the mean field. The random tie policy requires a tie-breaking stream."
        console.error(message=message, error=ValueError)
    return field.select(_require_finite(x), tie_policy, rng)


def _pick_vertex(
    vertices: NDArray[np.float64], tie_policy: TiePolicies, rng: np.random.Generator | None
) -> NDArray[np.float64]:
    """Picks a vertex according to the tie policy."""
    if tie_policy == TiePolicies.RANDOM and rng is not None and vertices.shape[0] > 1:
        return vertices[int(rng.integers(vertices.shape[0]))].copy()
    return vertices[0].copy()


class LinearField(SetValuedField):
    """Implements the single-valued affine field F(x) = A x + b.

    Args:
        matrix: The (K, n) matrix A.
        offset: The K-vector b. Defaults to zero.
        growth_constant: The growth constant. Defaults to max(‖A‖₂, ‖b‖), which satisfies the growth bound.
    """

    def __init__(
        self,
        matrix: NDArray[np.float64] | list[list[float]],
        offset: NDArray[np.float64] | list[float] | None = None,
        growth_constant: float | None = None,
    ) -> None:
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        self.dimension = self.matrix.shape[0]
        self.offset = (
            np.zeros(self.dimension, dtype=np.float64) if offset is None else np.asarray(offset, dtype=np.float64)
        )
        if self.offset.shape != (self.dimension,):
            message = (
                f"Unable to create the linear field. The offset must have {self.dimension} entries, but got shape "
                f"{self.offset.shape}."
            )
            console.error(message=message, error=ValueError)
        default_constant = max(float(np.linalg.norm(self.matrix, ord=2)), float(np.linalg.norm(self.offset)))
        self.growth_constant = default_constant if growth_constant is None else float(growth_constant)

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,  # noqa: ARG002
        rng: np.random.Generator | None = None,  # noqa: ARG002
    ) -> NDArray[np.float64]:
        """Returns A x + b."""
        result: NDArray[np.float64] = self.matrix @ x + self.offset
        return result

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Returns the single point A x + b."""
        return self.select(x)[np.newaxis, :]


class SignField(SetValuedField):
    """Implements the Filippov hull of F(x) = -sign(x): each coordinate is -sign(x_i) away from 0 and [-1, 1] at 0.

    Under the lowest-index policy the kink coordinates select the interval midpoint 0.
    """

    def __init__(self, dimension: int) -> None:
        self.dimension = dimension
        self.growth_constant = float(np.sqrt(dimension))

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns -sign(x) with kink coordinates resolved by the tie policy."""
        result = -np.sign(x)
        kinks = x == 0.0
        if tie_policy == TiePolicies.RANDOM and rng is not None and np.any(kinks):
            result[kinks] = rng.choice(np.array([-1.0, 1.0]), size=int(np.sum(kinks)))
        return result

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:
        """Returns every combination of ±1 over the kink coordinates, or None when there are more combinations than
        the enumeration cap.
        """
        kinks = np.flatnonzero(x == 0.0)
        base = -np.sign(x)
        if kinks.size == 0:
            return base[np.newaxis, :]
        if 2**kinks.size > _MAXIMUM_ENUMERATED_CORNERS:
            return None
        combinations = list(product((-1.0, 1.0), repeat=kinks.size))
        result = np.tile(base, (len(combinations), 1))
        result[:, kinks] = np.asarray(combinations)
        return result


def best_response_set(q_row: NDArray[np.float64], tie_tolerance: float = TIE_TOLERANCE) -> tuple[int, ...]:
    """Returns the indices of all entries within the tie tolerance of the row maximum. Never empty."""
    row = np.asarray(q_row, dtype=np.float64)
    return tuple(int(index) for index in np.flatnonzero(row >= np.max(row) - tie_tolerance))


class BestResponseField(SetValuedField):
    """Implements the pure best-response map x ↦ b(Q(x)), where Q(x) is a (states, actions) table.

    Each state's component is the convex hull of the unit vectors of its best-response actions. The output is the
    flattened (states * actions) strategy profile.

    Args:
        q_function: The function that maps the input point to the (states, actions) Q-table.
        n_states: The number of states.
        n_actions: The number of actions per state.
        tie_tolerance: The tie tolerance used to build the best-response sets.
    """

    def __init__(
        self,
        q_function: Callable[[NDArray[np.float64]], NDArray[np.float64]],
        n_states: int,
        n_actions: int,
        tie_tolerance: float = TIE_TOLERANCE,
    ) -> None:
        self._q_function = q_function
        self.n_states = n_states
        self.n_actions = n_actions
        self.tie_tolerance = tie_tolerance
        self.dimension = n_states * n_actions
        self.growth_constant = float(np.sqrt(n_states))

    @classmethod
    def from_table(cls, q_table: NDArray[np.float64], tie_tolerance: float = TIE_TOLERANCE) -> BestResponseField:
        """Creates the field that ignores its input and responds to a fixed Q-table."""
        table = np.atleast_2d(np.asarray(q_table, dtype=np.float64))
        return cls(
            q_function=lambda _: table, n_states=table.shape[0], n_actions=table.shape[1], tie_tolerance=tie_tolerance
        )

    def response_sets(self, x: NDArray[np.float64]) -> list[tuple[int, ...]]:
        """Returns the best-response action set of every state at the input point."""
        table = np.asarray(self._q_function(x), dtype=np.float64).reshape(self.n_states, self.n_actions)
        return [best_response_set(q_row=row, tie_tolerance=self.tie_tolerance) for row in table]

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns a pure best-response profile, one unit vector per state."""
        profile = np.zeros((self.n_states, self.n_actions), dtype=np.float64)
        for state, actions in enumerate(self.response_sets(x)):
            if tie_policy == TiePolicies.RANDOM and rng is not None and len(actions) > 1:
                profile[state, actions[int(rng.integers(len(actions)))]] = 1.0
            else:
                profile[state, actions[0]] = 1.0
        return profile.ravel()

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:
        """Returns every pure profile that plays a best response in each state, or None when there are more profiles
        than the enumeration cap.
        """
        response_sets = self.response_sets(x)
        if prod(len(actions) for actions in response_sets) > _MAXIMUM_ENUMERATED_CORNERS:
            return None
        combinations = list(product(*response_sets))
        result = np.zeros((len(combinations), self.n_states, self.n_actions), dtype=np.float64)
        for row, actions in enumerate(combinations):
            result[row, np.arange(self.n_states), list(actions)] = 1.0
        return result.reshape(len(combinations), self.dimension)


class DisplacementField(SetValuedField):
    """Implements F(x) = h(x) - x for a set-valued target map h.

    Both mean fields of the actor-critic algorithm take this form: the strategy field b(Q^π) - π and the critic field
    h(π, Q) - Q. For two-timescale use, the subtracted coordinates are the last K entries of the input, selected by
    `offset`.

    Args:
        target: The target map h.
        offset: The index of the first input coordinate that is subtracted.
    """

    def __init__(self, target: SetValuedField, offset: int = 0) -> None:
        self.target = target
        self.offset = offset
        self.dimension = target.dimension
        self.growth_constant = target.growth_constant + 1.0

    def _own(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Returns the slice of the input that is subtracted from the target."""
        return x[self.offset : self.offset + self.dimension]

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns h(x) - x for the target element chosen by the tie policy."""
        return self.target.select(x, tie_policy, rng) - self._own(x)

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:
        """Shifts the target's vertices by -x."""
        target_vertices = self.target.vertices(x)
        if target_vertices is None:
            return None
        return target_vertices - self._own(x)[np.newaxis, :]

    @property
    def has_vertices(self) -> bool:
        """Returns True if the target exposes vertices."""
        return self.target.has_vertices


class ProjectionField(SetValuedField):
    """Implements the projected field F(x) = clip(x + f, lower, upper) - x for f in the base field.

    Notes:
        The image of a polytope under the clip map need not be convex. The vertex description returned here is the
        set of projected base vertices, whose hull contains every projected selection.

    Args:
        base: The unprojected field.
        lower: The lower corner of the projection box.
        upper: The upper corner of the projection box.
    """

    def __init__(
        self,
        base: SetValuedField,
        lower: NDArray[np.float64] | list[float],
        upper: NDArray[np.float64] | list[float],
    ) -> None:
        self.base = base
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if np.any(self.lower > self.upper):
            message = "Unable to create the projection field. Every lower bound must not exceed its upper bound."
            console.error(message=message, error=ValueError)
        self.dimension = base.dimension
        self.growth_constant = base.growth_constant

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns the projected displacement of the base selection."""
        return np.clip(x + self.base.select(x, tie_policy, rng), self.lower, self.upper) - x

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:
        """Returns the projected base vertices."""
        base_vertices = self.base.vertices(x)
        if base_vertices is None:
            return None
        return np.clip(x[np.newaxis, :] + base_vertices, self.lower, self.upper) - x[np.newaxis, :]

    @property
    def has_vertices(self) -> bool:
        """Returns True if the base field exposes vertices."""
        return self.base.has_vertices


class CallableField(SetValuedField):
    """Wraps a user-supplied single-valued function as a black-box field without a vertex description.

    Args:
        function: The function that returns an element of F(x).
        dimension: The output dimension.
        growth_constant: The declared growth constant.
    """

    def __init__(
        self, function: Callable[[NDArray[np.float64]], NDArray[np.float64]], dimension: int, growth_constant: float
    ) -> None:
        self._function = function
        self.dimension = dimension
        self.growth_constant = growth_constant

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,  # noqa: ARG002
        rng: np.random.Generator | None = None,  # noqa: ARG002
    ) -> NDArray[np.float64]:
        """Evaluates the wrapped function."""
        return np.asarray(self._function(x), dtype=np.float64)

    @property
    def has_vertices(self) -> bool:
        """Returns False, as black-box fields expose no vertices."""
        return False


@dataclass(frozen=True)
class OmegaBox:
    """Defines the box Ω^ε of diagonal scalings with entries in [ε, 1].

    Scalings are declared per block: every coordinate of a block shares the block's diagonal entry. The default block
    size of 1 yields one entry per coordinate. The strategy field of the actor-critic algorithm uses one block per
    state, because all actions of a state are updated together.
    """

    epsilon: float
    """The lower bound ε of every diagonal entry, in (0, 1]."""
    n_blocks: int
    """The number of independently scaled blocks k."""
    block_size: int = 1
    """The number of coordinates that share each diagonal entry."""

    def __post_init__(self) -> None:
        """Validates the box parameters."""
        if not 0.0 < self.epsilon <= 1.0:
            message = f"Unable to create the scaling box. Epsilon must be in (0, 1], but got {self.epsilon}."
            console.error(message=message, error=ValueError)
        if self.n_blocks < 1 or self.block_size < 1:
            message = "Unable to create the scaling box. The block count and block size must be positive."
            console.error(message=message, error=ValueError)

    @property
    def dimension(self) -> int:
        """Returns the number of scaled coordinates."""
        return self.n_blocks * self.block_size

    def contains(self, omega: NDArray[np.float64]) -> bool:
        """Returns True if every entry of the block diagonal lies in [ε, 1]."""
        values = np.asarray(omega, dtype=np.float64)
        return bool(
            values.shape == (self.n_blocks,)
            and np.all(values >= self.epsilon - _BOX_TOLERANCE)
            and np.all(values <= 1.0 + _BOX_TOLERANCE)
        )

    def expand(self, omega: NDArray[np.float64]) -> NDArray[np.float64]:
        """Expands a block diagonal to one entry per coordinate."""
        return np.repeat(np.asarray(omega, dtype=np.float64), self.block_size)

    def corners(self) -> NDArray[np.float64]:
        """Returns the (2^k, k) array of box corners {ε, 1}^k, truncated for very large k."""
        count = min(self.n_blocks, int(np.log2(_MAXIMUM_ENUMERATED_CORNERS)))
        head = np.asarray(list(product((self.epsilon, 1.0), repeat=count)), dtype=np.float64)
        if count == self.n_blocks:
            return head
        # Tail blocks beyond the enumeration cap alternate between the two extremes.
        tail = np.where(np.arange(self.n_blocks - count) % 2 == 0, self.epsilon, 1.0)
        return np.hstack([head, np.tile(tail, (head.shape[0], 1))])

    def levels(self, count: int) -> NDArray[np.float64]:
        """Returns `count` uniform diagonals c·1 with c evenly spaced over [ε, 1]."""
        return np.repeat(np.linspace(self.epsilon, 1.0, count)[:, np.newaxis], self.n_blocks, axis=1)

    def sample(self, rng: np.random.Generator) -> NDArray[np.float64]:
        """Draws a block diagonal uniformly from the box interior."""
        return rng.uniform(self.epsilon, 1.0, size=self.n_blocks)


def scale(box: OmegaBox, omega_diag: NDArray[np.float64], f: NDArray[np.float64]) -> NDArray[np.float64]:
    """Applies a diagonal scaling from the box to a field element.

    Args:
        box: The scaling box.
        omega_diag: The block diagonal, one entry per block.
        f: The field element, one entry per coordinate.

    Returns:
        The componentwise product ω·f.

    Raises:
        ValueError: If the diagonal lies outside the box.
    """
    omega = np.asarray(omega_diag, dtype=np.float64)
    if not box.contains(omega):
        message = (
            f"Unable to apply the scaling. Expected {box.n_blocks} diagonal entries in [{box.epsilon}, 1], but got "
            f"{omega.tolist()}."
        )
        console.error(message=message, error=ValueError)
    return box.expand(omega) * np.asarray(f, dtype=np.float64)


@dataclass(frozen=True)
class ScaledField:
    """Defines the scaled field F̄(x) = Ω^ε · F(x) whose differential inclusion the asynchronous iterates track."""

    base: SetValuedField
    """The unscaled mean field F."""
    box: OmegaBox
    """The scaling box Ω^ε."""

    def __post_init__(self) -> None:
        """Verifies that the box covers every coordinate of the field."""
        if self.box.dimension != self.base.dimension:
            message = (
                f"Unable to create the scaled field. The box scales {self.box.dimension} coordinates, but the field "
                f"has dimension {self.base.dimension}."
            )
            console.error(message=message, error=ValueError)

    def select(
        self,
        x: NDArray[np.float64],
        omega_diag: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns ω·f for the input diagonal and the base selection at x."""
        return scale(box=self.box, omega_diag=omega_diag, f=select(self.base, x, tie_policy, rng))

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:
        """Returns the products of box corners and base vertices, whose hull contains F̄(x)."""
        base_vertices = self.base.vertices(x)
        if base_vertices is None:
            return None
        corners = np.asarray([self.box.expand(corner) for corner in self.box.corners()])
        return (corners[:, np.newaxis, :] * base_vertices[np.newaxis, :, :]).reshape(-1, self.base.dimension)


def clamp_relative_steps(mu: NDArray[np.float64], epsilon: float) -> NDArray[np.float64]:
    """Returns the floored relative step sizes v = max{u, ε} used by the averaging diagnostic."""
    return np.maximum(np.asarray(mu, dtype=np.float64), epsilon)


def hull_distance(vertices: NDArray[np.float64], point: NDArray[np.float64]) -> float:
    """Returns the L1 distance from the point to the convex hull of the vertices, computed by linear programming.

    Solves min Σ(s⁺ + s⁻) subject to Vᵀλ + s⁺ - s⁻ = p, Σλ = 1 and λ, s⁺, s⁻ ≥ 0. A zero optimum
    certifies membership.
    """
    vertex_array = np.atleast_2d(np.asarray(vertices, dtype=np.float64))
    target = np.asarray(point, dtype=np.float64)
    count, size = vertex_array.shape
    if count == 1:
        return float(np.sum(np.abs(vertex_array[0] - target)))

    objective = np.concatenate([np.zeros(count), np.ones(2 * size)])
    equality = np.zeros((size + 1, count + 2 * size), dtype=np.float64)
    equality[:size, :count] = vertex_array.T
    equality[:size, count : count + size] = np.eye(size)
    equality[:size, count + size :] = -np.eye(size)
    equality[size, :count] = 1.0
    rhs = np.concatenate([target, [1.0]])
    result = linprog(c=objective, A_eq=equality, b_eq=rhs, bounds=(0, None), method="highs")
    if not result.success:
        message = f"Unable to compute the hull membership residual. The linear program failed: {result.message}."
        console.error(message=message, error=RuntimeError)
    return float(result.fun)


@dataclass
class SaMapReport:
    """Stores the diagnostics of the stochastic-approximation-map criteria over a set of probe points."""

    hull_sizes: list[int] = field(default_factory=list)
    """The number of vertices describing F(x) at each probe. A positive finite count witnesses a convex compact set."""
    growth_ratios: list[float] = field(default_factory=list)
    """The ratio max ‖z‖ / (1 + ‖x‖) over the vertices z of F(x) at each probe."""
    usc_excess: list[float] = field(default_factory=list)
    """The excess of F(x_j) over F(x_last) (largest vertex distance to the limit hull) along the probe sequence."""
    probe_distances: list[float] = field(default_factory=list)
    """The distance ‖x_j - x_last‖ that pairs with each usc excess entry."""
    growth_constant: float = 0.0
    """The growth constant declared by the field."""
    truncated_probes: int = 0
    """The number of probes whose vertex description exceeded the enumeration cap and was not checked."""

    @property
    def convexity_passed(self) -> bool:
        """Returns True if every probe has a finite, non-empty vertex description."""
        return len(self.hull_sizes) > 0 and all(size > 0 for size in self.hull_sizes)

    @property
    def max_growth_ratio(self) -> float:
        """Returns the largest growth ratio observed over the probes."""
        return max(self.growth_ratios, default=0.0)

    @property
    def growth_passed(self) -> bool:
        """Returns True if the declared growth constant bounds every observed ratio."""
        return self.max_growth_ratio <= self.growth_constant + 1e-12

    @property
    def usc_passed(self) -> bool:
        """Returns True if the excess does not grow as the probes approach the limit point."""
        pairs = sorted(zip(self.probe_distances, self.usc_excess, strict=True), reverse=True)
        ordered = [excess for _, excess in pairs]
        return all(later <= earlier + 1e-9 for earlier, later in zip(ordered, ordered[1:], strict=False))

    def to_dict(self) -> dict[str, object]:
        """Returns the JSON-serializable form of the report."""
        return {
            "hull_sizes": self.hull_sizes,
            "growth_ratios": self.growth_ratios,
            "max_growth_ratio": self.max_growth_ratio,
            "growth_constant": self.growth_constant,
            "usc_excess": self.usc_excess,
            "probe_distances": self.probe_distances,
            "convexity_passed": self.convexity_passed,
            "growth_passed": self.growth_passed,
            "usc_passed": self.usc_passed,
            "truncated_probes": self.truncated_probes,
        }


def check_sa_map(field: SetValuedField, probe_points: Sequence[NDArray[np.float64]]) -> SaMapReport:
    """Probes the stochastic-approximation-map criteria of a polytopal field.

    The last probe is treated as the limit point of the sequence for the upper semi-continuity probe: for every
    earlier probe x_j the excess sup over vertices z of F(x_j) of the distance from z to the hull of F(x_last) is
    reported together with ‖x_j - x_last‖.

    Args:
        field: The probed field. Must expose vertices.
        probe_points: The ordered probe sequence.

    Returns:
        The SaMapReport. Violations are reported, never raised.

    Raises:
        ValueError: If the field has no vertex description or no probes are given.
    """
    if not field.has_vertices or len(probe_points) == 0:
        message = "Unable to check the mean field. The field must expose vertices and at least one probe is required."
        console.error(message=message, error=ValueError)

    report = SaMapReport(growth_constant=field.growth_constant)
    described: list[NDArray[np.float64]] = []
    for probe in probe_points:
        point = _require_finite(probe)
        vertices = field.vertices(point)
        if vertices is None:
            report.truncated_probes += 1
            continue
        described.append(vertices)
        report.hull_sizes.append(int(vertices.shape[0]))
        norms = np.linalg.norm(vertices, axis=1)
        report.growth_ratios.append(float(np.max(norms) / (1.0 + np.linalg.norm(point))))

    if report.truncated_probes == 0 and len(probe_points) > 1:
        limit_point = np.asarray(probe_points[-1], dtype=np.float64)
        limit_vertices = described[-1]
        for probe, vertices in zip(probe_points[:-1], described[:-1], strict=True):
            excess = max(hull_distance(vertices=limit_vertices, point=vertex) for vertex in vertices)
            report.usc_excess.append(excess)
            report.probe_distances.append(float(np.linalg.norm(np.asarray(probe) - limit_point)))
    return report
