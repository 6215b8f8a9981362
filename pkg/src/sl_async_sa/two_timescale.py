"""Provides the coupled two-timescale asynchronous process with a slow iterate x_n and a fast iterate y_n, the
step-size ratio diagnostics, and the fast-timescale tracking checks.

Both iterates are driven by a single scheduling chain over a joint family whose elements list slow and fast
components together. Mean fields read the concatenated point z = (x, y).
"""

from typing import TYPE_CHECKING, Any
from pathlib import Path  # noqa: TC003
from dataclasses import field, dataclass

import numpy as np
import polars as pl
from scipy import linalg
from numpy.typing import NDArray
from ataraxis_base_utilities import console

from .errors import AssumptionViolationError
from .stepsize import Schedule, is_faster_timescale
from .sa_engine import BiasModel, NoiseModel, BoundingBox, EngineState, apply_update, thinned_rows
from .scheduler import UpdateFamily, UpdateScheduler
from .mean_field import TiePolicies, LinearField, SetValuedField, select

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from .streams import ReplicateStreams


@dataclass(frozen=True)
class JointFamily:
    """Splits each element of the joint update family H̄ into its slow part I and fast part J.

    The joint family lives in the combined index space: indices below n_slow are slow components, the remaining
    indices are fast components (shifted by n_slow).
    """

    family: UpdateFamily
    """The joint family over n_slow + n_fast components."""
    n_slow: int
    """The number of slow components."""
    slow_membership: NDArray[np.bool_] = field(init=False, repr=False, compare=False)
    """The (subsets, n_slow) membership matrix of the slow parts."""
    fast_membership: NDArray[np.bool_] = field(init=False, repr=False, compare=False)
    """The (subsets, n_fast) membership matrix of the fast parts."""

    def __post_init__(self) -> None:
        """Derives the part memberships and verifies that every joint element touches both iterates."""
        if not 0 < self.n_slow < self.family.n_components:
            message = (
                f"Unable to create the joint update family. The slow component count must be in "
                f"[1, {self.family.n_components - 1}], but got {self.n_slow}."
            )
            console.error(message=message, error=ValueError)
        slow = self.family.membership[:, : self.n_slow]
        fast = self.family.membership[:, self.n_slow :]
        empty = np.flatnonzero(~slow.any(axis=1) | ~fast.any(axis=1))
        if empty.size > 0:
            message = (
                f"Unable to create the joint update family. Subsets {empty.tolist()} do not update both the slow and "
                f"the fast iterate."
            )
            console.error(message=message, error=ValueError)
        object.__setattr__(self, "slow_membership", slow)
        object.__setattr__(self, "fast_membership", fast)

    @property
    def n_fast(self) -> int:
        """Returns the number of fast components."""
        return self.family.n_components - self.n_slow

    def parts(self, subset: int) -> tuple[NDArray[np.intp], NDArray[np.intp]]:
        """Returns the slow and fast component indices (each in its own index space) of the joint subset."""
        return np.flatnonzero(self.slow_membership[subset]), np.flatnonzero(self.fast_membership[subset])


@dataclass
class CoupledState:
    """Stores the mutable state of the coupled two-timescale process."""

    slow: EngineState
    """The slow iterate x_n with schedule α."""
    fast: EngineState
    """The fast iterate y_n with schedule γ."""
    joint_subset: int = 0
    """The index of the joint subset drawn at the last iteration."""

    @property
    def n(self) -> int:
        """Returns the number of completed iterations."""
        return self.slow.n

    @property
    def z(self) -> NDArray[np.float64]:
        """Returns the concatenated point (x_n, y_n)."""
        return np.concatenate([self.slow.x, self.fast.x])

    @property
    def ratios(self) -> NDArray[np.float64]:
        """Returns the logged step-size ratios ᾱ_n / γ̄_n."""
        return self.slow.log.alpha_bar / self.fast.log.alpha_bar

    @classmethod
    def initial(
        cls,
        x0: NDArray[np.float64] | list[float],
        y0: NDArray[np.float64] | list[float],
        initial_subset: int = 0,
        slow_block_size: int = 1,
    ) -> CoupledState:
        """Creates a fresh coupled state at (x0, y0)."""
        return cls(
            slow=EngineState.initial(x0=x0, initial_subset=initial_subset, block_size=slow_block_size),
            fast=EngineState.initial(x0=y0, initial_subset=initial_subset),
            joint_subset=initial_subset,
        )


class FastLimitOracle:
    """Wraps the map x ↦ Λ(x) to the unique globally asymptotically stable equilibrium of the frozen fast dynamics.

    Args:
        function: The map Λ.
        tolerance: The tracking tolerance used by acceptance checks.
    """

    def __init__(self, function: Callable[[NDArray[np.float64]], NDArray[np.float64]], tolerance: float = 0.02) -> None:
        if tolerance <= 0.0:
            message = f"Unable to create the fast-limit oracle. The tolerance must be positive, but got {tolerance}."
            console.error(message=message, error=ValueError)
        self._function = function
        self.tolerance = tolerance

    def __call__(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluates Λ(x)."""
        return np.asarray(self._function(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def lipschitz_estimate(self, probes: Sequence[NDArray[np.float64]]) -> float:
        """Returns the largest ratio ‖Λ(x) - Λ(x′)‖ / ‖x - x′‖ over all distinct probe pairs."""
        values = [self(probe) for probe in probes]
        constant = 0.0
        for first in range(len(probes)):
            for second in range(first + 1, len(probes)):
                distance = float(np.linalg.norm(np.asarray(probes[first]) - np.asarray(probes[second])))
                if distance > 0.0:
                    change = float(np.linalg.norm(values[first] - values[second]))
                    constant = max(constant, change / distance)
        return constant


def check_schedule_pairing(slow: Schedule, fast: Schedule) -> None:
    """Verifies that the slow schedule vanishes faster than the fast schedule.

    Raises:
        AssumptionViolationError: If α(n)/γ(n) does not converge to 0, citing (B2)(c).
    """
    if not is_faster_timescale(slow=slow, fast=fast):
        message = (
            f"The slow schedule (exponent {slow.exponent}, log exponent {slow.log_exponent}) does not vanish faster "
            f"than the fast schedule (exponent {fast.exponent}, log exponent {fast.log_exponent}). This violates "
            f"(B2)(c)."
        )
        console.error(message=message, error=AssumptionViolationError)


def coupled_step(
    state: CoupledState,
    slow_field: SetValuedField,
    fast_field: SetValuedField,
    slow_schedule: Schedule,
    fast_schedule: Schedule,
    joint: JointFamily,
    subset: int,
    noise: tuple[NDArray[np.float64], NDArray[np.float64]],
    bias: tuple[NDArray[np.float64], NDArray[np.float64]],
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    tie_rng: np.random.Generator | None = None,
    boxes: tuple[BoundingBox | None, BoundingBox | None] = (None, None),
) -> CoupledState:
    """Applies one coupled iteration with an already drawn joint subset, noise pair and bias pair.

    Both selections are evaluated at the pre-update point z_n = (x_n, y_n).
    """
    z = state.z
    slow_selection = select(slow_field, z, tie_policy, tie_rng)
    fast_selection = select(fast_field, z, tie_policy, tie_rng)
    slow_update, fast_update = joint.parts(subset)
    apply_update(
        state=state.slow,
        schedule=slow_schedule,
        update=slow_update,
        subset=subset,
        selection=slow_selection,
        noise=noise[0],
        bias=bias[0],
        box=boxes[0],
        assumption="(B1)(a)",
    )
    apply_update(
        state=state.fast,
        schedule=fast_schedule,
        update=fast_update,
        subset=subset,
        selection=fast_selection,
        noise=noise[1],
        bias=bias[1],
        box=boxes[1],
        assumption="(B1)(a)",
    )
    state.joint_subset = subset
    return state


def iterate_coupled(
    state: CoupledState,
    slow_field: SetValuedField,
    fast_field: SetValuedField,
    slow_schedule: Schedule,
    fast_schedule: Schedule,
    scheduler: UpdateScheduler,
    joint: JointFamily,
    noises: tuple[NoiseModel, NoiseModel],
    biases: tuple[BiasModel, BiasModel],
    streams: ReplicateStreams,
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    boxes: tuple[BoundingBox | None, BoundingBox | None] = (None, None),
) -> CoupledState:
    """Runs one iteration of the coupled two-timescale process.

    Draws one joint subset H̄_{n+1} from the scheduler at z_n, updates the slow components of its I-part with
    α(ν_{n+1}(i)) and the fast components of its J-part with γ(φ_{n+1}(j)), and appends a row to both logs.

    Args:
        state: The coupled state. Modified in place and returned.
        slow_field: The slow mean field F over z = (x, y).
        fast_field: The fast mean field G over z = (x, y).
        slow_schedule: The slow schedule α.
        fast_schedule: The fast schedule γ.
        scheduler: The scheduler over the joint family.
        joint: The joint family split into slow and fast parts.
        noises: The slow and fast noise models. Both draw from the noise stream, slow first.
        biases: The slow and fast bias models.
        streams: The replicate's named random streams.
        tie_policy: The selection rule of both fields.
        boxes: The compact boxes of the slow and fast iterates.

    Returns:
        The advanced coupled state.

    Raises:
        AssumptionViolationError: If either iterate leaves its box, citing (B1)(a).
    """
    subset = scheduler.advance(x=state.z)
    iteration = np.asarray([state.n + 1])
    noise = (
        noises[0].sample(rng=streams.noise, shape=(state.slow.x.size,)),
        noises[1].sample(rng=streams.noise, shape=(state.fast.x.size,)),
    )
    bias = (
        biases[0].values(iterations=iteration, dimension=state.slow.x.size)[0],
        biases[1].values(iterations=iteration, dimension=state.fast.x.size)[0],
    )
    return coupled_step(
        state=state,
        slow_field=slow_field,
        fast_field=fast_field,
        slow_schedule=slow_schedule,
        fast_schedule=fast_schedule,
        joint=joint,
        subset=subset,
        noise=noise,
        bias=bias,
        tie_policy=tie_policy,
        tie_rng=streams.ties,
        boxes=boxes,
    )


def run_coupled(
    state: CoupledState,
    slow_field: SetValuedField,
    fast_field: SetValuedField,
    slow_schedule: Schedule,
    fast_schedule: Schedule,
    scheduler: UpdateScheduler,
    joint: JointFamily,
    noises: tuple[NoiseModel, NoiseModel],
    biases: tuple[BiasModel, BiasModel],
    streams: ReplicateStreams,
    n_steps: int,
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    boxes: tuple[BoundingBox | None, BoundingBox | None] = (None, None),
) -> CoupledState:
    """Runs the coupled process for a fixed number of iterations with all randomness of the block pre-drawn.

    Raises:
        AssumptionViolationError: If the schedules are not paired per (B2)(c) or an iterate leaves its box.
    """
    check_schedule_pairing(slow=slow_schedule, fast=fast_schedule)
    slow_size = state.slow.x.size
    fast_size = state.fast.x.size
    uniforms = scheduler.rng.random(n_steps)
    slow_noise = noises[0].sample(rng=streams.noise, shape=(n_steps, slow_size))
    fast_noise = noises[1].sample(rng=streams.noise, shape=(n_steps, fast_size))
    iterations = np.arange(state.n + 1, state.n + n_steps + 1)
    slow_bias = biases[0].values(iterations=iterations, dimension=slow_size)
    fast_bias = biases[1].values(iterations=iterations, dimension=fast_size)
    state.slow.log.reserve(additional=n_steps)
    state.fast.log.reserve(additional=n_steps)

    for step in range(n_steps):
        subset = scheduler.advance_with(x=state.z, u=float(uniforms[step]))
        coupled_step(
            state=state,
            slow_field=slow_field,
            fast_field=fast_field,
            slow_schedule=slow_schedule,
            fast_schedule=fast_schedule,
            joint=joint,
            subset=subset,
            noise=(slow_noise[step], fast_noise[step]),
            bias=(slow_bias[step], fast_bias[step]),
            tie_policy=tie_policy,
            tie_rng=streams.ties,
            boxes=boxes,
        )
    return state


def tracking_error(state: CoupledState, oracle: FastLimitOracle) -> float:
    """Returns ‖y_n - Λ(x_n)‖∞."""
    return float(np.max(np.abs(state.fast.x - oracle(state.slow.x))))


def tracking_errors(
    slow_path: NDArray[np.float64], fast_path: NDArray[np.float64], oracle: FastLimitOracle
) -> NDArray[np.float64]:
    """Returns ‖y_k - Λ(x_k)‖∞ for every row of the paired slow and fast paths."""
    return np.asarray(
        [float(np.max(np.abs(y - oracle(x)))) for x, y in zip(slow_path, fast_path, strict=True)], dtype=np.float64
    )


def windowed_tracking_error(
    slow_path: NDArray[np.float64],
    fast_path: NDArray[np.float64],
    oracle: FastLimitOracle,
    window: float = 0.5,
) -> float:
    """Returns ‖median_k (y_k - Λ(x_k))‖∞ over the trailing fraction of the paired paths.

    The fast iterate keeps fluctuating around Λ(x) at the scale of its noise, so its terminal distance overstates the
    tracking error. The componentwise median of the residuals over a trailing window averages that fluctuation out.

    Args:
        slow_path: The logged slow iterates, one row per iteration.
        fast_path: The logged fast iterates, one row per iteration.
        oracle: The fast limit Λ.
        window: The trailing fraction of the rows to pool, in (0, 1].

    Raises:
        ValueError: If the window fraction lies outside (0, 1].
    """
    if not 0.0 < window <= 1.0:
        message = f"Unable to compute the windowed tracking error. The window must lie in (0, 1], but got {window}."
        console.error(message=message, error=ValueError)
    n_rows = len(slow_path)
    start = min(n_rows - 1, int(np.floor((1.0 - window) * (n_rows - 1))))
    residuals = np.asarray(
        [y - oracle(x) for x, y in zip(slow_path[start:], fast_path[start:], strict=True)], dtype=np.float64
    )
    return float(np.max(np.abs(np.median(residuals, axis=0))))


@dataclass(frozen=True)
class RatioTrend:
    """Stores the decade comparison of the step-size ratio sequence ᾱ_n / γ̄_n."""

    first_decade_max: float
    """The largest ratio over the first tenth of the iterations."""
    last_decade_max: float
    """The largest ratio over the last tenth of the iterations."""
    terminal: float
    """The ratio at the last logged iteration."""

    @property
    def decreasing(self) -> bool:
        """Returns True if the tail maximum lies below the head maximum."""
        return self.last_decade_max < self.first_decade_max

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the trend."""
        return {
            "first_decade_max": self.first_decade_max,
            "last_decade_max": self.last_decade_max,
            "terminal": self.terminal,
            "decreasing": self.decreasing,
        }


def ratio_trend(ratios: NDArray[np.float64]) -> RatioTrend:
    """Compares the maximum step-size ratio over the first and the last tenth of the iterations.

    Raises:
        ValueError: If fewer than 10 ratios are logged.
    """
    values = np.asarray(ratios, dtype=np.float64)
    if values.size < 10:  # noqa: PLR2004
        message = (
            f"Unable to evaluate the step-size ratio trend. At least 10 iterations are required, but got "
            f"{values.size}."
        )
        console.error(message=message, error=ValueError)
    decade = values.size // 10
    return RatioTrend(
        first_decade_max=float(np.max(values[:decade])),
        last_decade_max=float(np.max(values[-decade:])),
        terminal=float(values[-1]),
    )


class ReducedSlowField(SetValuedField):
    """Implements F^Λ(x) = F(x, Λ(x)), the slow field with the fast iterate pinned at its equilibrium.

    Args:
        slow_field: The coupled slow field F over z = (x, y).
        oracle: The fast limit Λ.
        n_slow: The slow dimension.
    """

    def __init__(self, slow_field: SetValuedField, oracle: FastLimitOracle, n_slow: int) -> None:
        self.slow_field = slow_field
        self.oracle = oracle
        self.n_slow = n_slow
        self.dimension = slow_field.dimension
        self.growth_constant = slow_field.growth_constant

    def _lift(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Returns the point (x, Λ(x)).

        Raises:
            ValueError: If x does not have n_slow entries.
        """
        slow = np.asarray(x, dtype=np.float64)
        if slow.shape != (self.n_slow,):
            message = (
                f"Unable to evaluate the reduced slow field. Expected a slow point with {self.n_slow} entries, but got "
                f"shape {slow.shape}."
            )
            console.error(message=message, error=ValueError)
        return np.concatenate([slow, self.oracle(slow)])

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
        rng: np.random.Generator | None = None,
    ) -> NDArray[np.float64]:
        """Returns a selection of F(x, Λ(x))."""
        return self.slow_field.select(self._lift(x), tie_policy, rng)

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64] | None:
        """Returns the vertices of F(x, Λ(x))."""
        return self.slow_field.vertices(self._lift(x))

    @property
    def has_vertices(self) -> bool:
        """Returns True if the coupled slow field exposes vertices."""
        return self.slow_field.has_vertices


def reduced_slow_field(slow_field: SetValuedField, oracle: FastLimitOracle, n_slow: int) -> ReducedSlowField:
    """Builds F^Λ(x) = F(x, Λ(x))."""
    return ReducedSlowField(slow_field=slow_field, oracle=oracle, n_slow=n_slow)


def linear_fast_limit(fast_field: LinearField, n_slow: int, tolerance: float = 0.02) -> FastLimitOracle:
    """Builds Λ for an affine fast field G(x, y) = A_x x + A_y y + b.

    Solves A_y Λ(x) = -(A_x x + b). The frozen fast dynamics have a unique globally asymptotically stable equilibrium
    exactly when A_y is Hurwitz.

    Raises:
        AssumptionViolationError: If A_y has an eigenvalue with a non-negative real part, citing (B6).
    """
    slow_block = fast_field.matrix[:, :n_slow]
    fast_block = fast_field.matrix[:, n_slow:]
    if fast_block.shape[0] != fast_block.shape[1]:
        message = (
            f"Unable to build the fast limit. The fast block of the field must be square, but got shape "
            f"{fast_block.shape}."
        )
        console.error(message=message, error=ValueError)
    largest_real_part = float(np.max(np.real(linalg.eigvals(fast_block))))
    if largest_real_part >= 0.0:
        message = (
            f"The frozen fast dynamics are not globally asymptotically stable: the fast block has an eigenvalue with "
            f"real part {largest_real_part:.4g}. This violates (B6)."
        )
        console.error(message=message, error=AssumptionViolationError)
    offset = fast_field.offset

    def _limit(x: NDArray[np.float64]) -> NDArray[np.float64]:
        solution: NDArray[np.float64] = linalg.solve(fast_block, -(slow_block @ x + offset))
        return solution

    return FastLimitOracle(function=_limit, tolerance=tolerance)


def coupled_frame(state: CoupledState, thinning: int = 1) -> pl.DataFrame:
    """Converts the coupled logs to the (n, tau_bar, rho_bar, x_1..x_K, y_1..y_L, ratio) table.

    Row 0 has no update and carries a zero ratio.
    """
    slow_log = state.slow.log
    fast_log = state.fast.log
    rows = thinned_rows(length=slow_log.length, thinning=thinning)
    ratio = np.concatenate([[0.0], state.ratios])
    columns: dict[str, Any] = {
        "n": rows,
        "tau_bar": slow_log.tau_bar[rows],
        "rho_bar": fast_log.tau_bar[rows],
    }
    for coordinate in range(slow_log.dimension):
        columns[f"x_{coordinate + 1}"] = slow_log.x[rows, coordinate]
    for coordinate in range(fast_log.dimension):
        columns[f"y_{coordinate + 1}"] = fast_log.x[rows, coordinate]
    columns["ratio"] = ratio[rows]
    return pl.DataFrame(columns)


def write_coupled_csv(state: CoupledState, path: Path, thinning: int = 1) -> None:
    """Writes the coupled trajectory table to a CSV file."""
    coupled_frame(state=state, thinning=thinning).write_csv(path)
