"""Provides the single-timescale asynchronous stochastic approximation engine, its intrinsic timescale τ̄_n, the
dense trajectory log, and the continuous-time linear interpolation x̄(t) of the iterates.

The engine implements x_{n+1}(i) = x_n(i) + α(ν_{n+1}(i)) · 1{i ∈ I_{n+1}} · [f_n(i) + V_{n+1}(i) + d_{n+1}(i)],
where the update subsets I_n are drawn by a controlled Markov chain and f_n is a selection of the set-valued mean field
at x_n.
"""

import json
from enum import StrEnum
from typing import TYPE_CHECKING, Any
from pathlib import Path  # noqa: TC003
from dataclasses import field, dataclass

from numba import njit  # type: ignore[import-untyped]
import numpy as np
import polars as pl
from numpy.typing import NDArray  # noqa: TC002 - Required at runtime for Numba type introspection
from ataraxis_base_utilities import console

from .errors import AssumptionViolationError
from .stepsize import Schedule, CounterVector, ratio_bound
from .scheduler import StaticKernel, UpdateFamily, UpdateScheduler, TransitionKernel, min_update_proportion
from .mean_field import TiePolicies, LinearField, SetValuedField, select

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .streams import ReplicateStreams

_INITIAL_LOG_CAPACITY: int = 1024
"""The number of iterations the trajectory log preallocates before it starts doubling its buffers."""


class NoiseKinds(StrEnum):
    """Defines the supported additive noise distributions."""

    GAUSSIAN = "gaussian"
    """Centered gaussian noise with standard deviation equal to the noise scale."""
    UNIFORM = "bounded-uniform"
    """Noise drawn uniformly from [-scale, scale]."""
    ZERO = "zero"
    """No noise. Draws nothing from the noise stream."""


@dataclass(frozen=True)
class NoiseModel:
    """Defines the martingale difference noise V_n added to the mean-field selection at each iteration."""

    kind: NoiseKinds = NoiseKinds.ZERO
    """The noise distribution."""
    scale: float = 0.0
    """The standard deviation (gaussian) or the half-width (bounded-uniform) of the noise."""
    independent: bool = True
    """Determines whether components receive independent draws. Otherwise, a single common draw is shared."""
    truncation: float | None = None
    """The symmetric clipping level of gaussian noise, in units of the scale. Clipping keeps the mean at zero."""

    def __post_init__(self) -> None:
        """Resolves the noise kind and validates the parameters."""
        object.__setattr__(self, "kind", NoiseKinds(self.kind))
        if self.scale < 0.0:
            message = f"Unable to create the noise model. The scale must be non-negative, but got {self.scale}."
            console.error(message=message, error=ValueError)
        if self.truncation is not None and self.truncation <= 0.0:
            message = f"Unable to create the noise model. The truncation must be positive, but got {self.truncation}."
            console.error(message=message, error=ValueError)

    @property
    def standard_deviation(self) -> float:
        """Returns an upper bound on the per-component standard deviation of the noise."""
        if self.kind == NoiseKinds.GAUSSIAN:
            return self.scale
        if self.kind == NoiseKinds.UNIFORM:
            return self.scale / np.sqrt(3.0)
        return 0.0

    def sample(self, rng: np.random.Generator, shape: tuple[int, ...]) -> NDArray[np.float64]:
        """Draws a block of noise vectors.

        Args:
            rng: The noise stream.
            shape: The output shape. The last axis indexes components.

        Returns:
            The noise array with the requested shape.
        """
        if self.kind == NoiseKinds.ZERO or self.scale == 0.0:
            return np.zeros(shape, dtype=np.float64)
        draw_shape = shape if self.independent else (*shape[:-1], 1)
        if self.kind == NoiseKinds.GAUSSIAN:
            draws = rng.standard_normal(draw_shape) * self.scale
            if self.truncation is not None:
                limit = self.truncation * self.scale
                draws = np.clip(draws, -limit, limit)
        else:
            draws = rng.uniform(-self.scale, self.scale, size=draw_shape)
        return np.broadcast_to(draws, shape).copy()


@dataclass(frozen=True)
class NoiseMeanCheck:
    """Stores the result of the statistical zero-mean check of a noise model."""

    largest_mean: float
    """The largest absolute component of the empirical mean."""
    threshold: float
    """The 4-standard-error acceptance threshold."""

    @property
    def passed(self) -> bool:
        """Returns True if the empirical mean is within the threshold."""
        return self.largest_mean <= self.threshold


def noise_mean_check(model: NoiseModel, rng: np.random.Generator, samples: int, dimension: int) -> NoiseMeanCheck:
    """Checks that the empirical mean of the noise shrinks at the O(m^-1/2) rate expected of zero-mean noise."""
    draws = model.sample(rng=rng, shape=(samples, dimension))
    largest = float(np.max(np.abs(np.mean(draws, axis=0))))
    return NoiseMeanCheck(largest_mean=largest, threshold=4.0 * model.standard_deviation / np.sqrt(samples))


@dataclass(frozen=True)
class BiasModel:
    """Defines the vanishing bias d_n = scale · n^-exponent · 1."""

    scale: float = 0.0
    """The bias magnitude at n = 1."""
    exponent: float = 1.0
    """The decay exponent. Must be positive whenever the scale is non-zero."""

    def __post_init__(self) -> None:
        """Verifies that the bias vanishes."""
        if self.scale != 0.0 and self.exponent <= 0.0:
            message = (
                f"Unable to create the bias model. The bias must converge to zero, so the exponent must be positive, "
                f"but got {self.exponent}."
            )
            console.error(message=message, error=ValueError)

    def values(self, iterations: NDArray[np.int64], dimension: int) -> NDArray[np.float64]:
        """Returns the (len(iterations), dimension) array of bias vectors d_n."""
        magnitude = self.scale * np.asarray(iterations, dtype=np.float64) ** -self.exponent
        return np.repeat(magnitude[:, np.newaxis], dimension, axis=1)

    def envelope(self, n: int, dimension: int) -> float:
        """Returns the bound on ‖d_m‖ for all m ≥ n."""
        return abs(self.scale) * float(n) ** -self.exponent * np.sqrt(dimension)


@dataclass(frozen=True)
class BoundingBox:
    """Defines the compact box C that the iterates must never leave."""

    lower: NDArray[np.float64]
    """The lower corner of the box."""
    upper: NDArray[np.float64]
    """The upper corner of the box."""

    def __post_init__(self) -> None:
        """Converts the corners to arrays and validates them."""
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=np.float64))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=np.float64))
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            message = "Unable to create the bounding box. The corners must have equal shapes and lower <= upper."
            console.error(message=message, error=ValueError)

    def contains(self, x: NDArray[np.float64]) -> bool:
        """Returns True if the point lies inside the box."""
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @classmethod
    def symmetric(cls, radius: float, dimension: int) -> BoundingBox:
        """Creates the box [-radius, radius]^dimension."""
        return cls(lower=np.full(dimension, -radius), upper=np.full(dimension, radius))


class TrajectoryLog:
    """Stores the dense, append-only record of an iterate's trajectory.

    Row k of the per-iteration arrays describes iteration n = k + 1, that is, the transition from x_k to x_{k+1}:
    the drawn subset, the update mask, ᾱ_{k+1}, μ_{k+1}, the selection f_k, the noise V_{k+1} and the bias d_{k+1}.
    The knot arrays (tau_bar and x) have one more row than the per-iteration arrays.

    Notes:
        Buffers grow by doubling. All public accessors return views trimmed to the logged length.

    Args:
        x0: The initial iterate.
        n_components: The number of scheduled components. Equals the dimension unless block_size exceeds 1.
        block_size: The number of coordinates that share each component's update.
        tau0: The timescale value of the initial iterate.
        capacity: The initial buffer capacity, in iterations.
    """

    def __init__(
        self,
        x0: NDArray[np.float64],
        n_components: int | None = None,
        block_size: int = 1,
        tau0: float = 0.0,
        capacity: int = _INITIAL_LOG_CAPACITY,
    ) -> None:
        initial = np.asarray(x0, dtype=np.float64)
        self.dimension = initial.size
        self.block_size = block_size
        self.n_components = self.dimension // block_size if n_components is None else n_components
        self.noise_logged = True
        self.length = 0
        self._allocate(capacity=max(capacity, 1))
        self._tau_bar[0] = tau0
        self._x[0] = initial

    def _allocate(self, capacity: int) -> None:
        """Allocates empty buffers for the requested number of iterations."""
        self._capacity = capacity
        self._tau_bar = np.zeros(capacity + 1, dtype=np.float64)
        self._x = np.zeros((capacity + 1, self.dimension), dtype=np.float64)
        self._alpha_bar = np.zeros(capacity, dtype=np.float64)
        self._mu = np.zeros((capacity, self.n_components), dtype=np.float64)
        self._f = np.zeros((capacity, self.dimension), dtype=np.float64)
        self._noise = np.zeros((capacity, self.dimension), dtype=np.float64)
        self._bias = np.zeros((capacity, self.dimension), dtype=np.float64)
        self._subsets = np.zeros(capacity, dtype=np.int64)

    def reserve(self, additional: int) -> None:
        """Grows the buffers so that at least `additional` more iterations fit without reallocation."""
        required = self.length + additional
        if required <= self._capacity:
            return
        capacity = max(required, 2 * self._capacity)
        old = (self._tau_bar, self._x, self._alpha_bar, self._mu, self._f, self._noise, self._bias, self._subsets)
        length = self.length
        self._allocate(capacity=capacity)
        self._tau_bar[: length + 1] = old[0][: length + 1]
        self._x[: length + 1] = old[1][: length + 1]
        self._alpha_bar[:length] = old[2][:length]
        self._mu[:length] = old[3][:length]
        self._f[:length] = old[4][:length]
        self._noise[:length] = old[5][:length]
        self._bias[:length] = old[6][:length]
        self._subsets[:length] = old[7][:length]

    def append(
        self,
        subset: int,
        alpha_bar: float,
        mu: NDArray[np.float64],
        f: NDArray[np.float64],
        noise: NDArray[np.float64],
        bias: NDArray[np.float64],
        x_next: NDArray[np.float64],
    ) -> None:
        """Records one iteration."""
        self.reserve(additional=1)
        row = self.length
        self._subsets[row] = subset
        self._alpha_bar[row] = alpha_bar
        self._mu[row] = mu
        self._f[row] = f
        self._noise[row] = noise
        self._bias[row] = bias
        self._tau_bar[row + 1] = self._tau_bar[row] + alpha_bar
        self._x[row + 1] = x_next
        self.length += 1

    def buffers(self) -> tuple[NDArray[np.float64], ...]:
        """Returns the raw buffers in the order used by the compiled kernels: tau_bar, x, alpha_bar, mu, f, noise,
        bias, subsets.
        """
        return (
            self._tau_bar,
            self._x,
            self._alpha_bar,
            self._mu,
            self._f,
            self._noise,
            self._bias,
            self._subsets,  # type: ignore[return-value]
        )

    @property
    def tau_bar(self) -> NDArray[np.float64]:
        """Returns the timescale knots τ̄_0, ..., τ̄_N."""
        return self._tau_bar[: self.length + 1]

    @property
    def x(self) -> NDArray[np.float64]:
        """Returns the iterates x_0, ..., x_N."""
        return self._x[: self.length + 1]

    @property
    def alpha_bar(self) -> NDArray[np.float64]:
        """Returns the asynchronous step sizes ᾱ_1, ..., ᾱ_N."""
        return self._alpha_bar[: self.length]

    @property
    def mu(self) -> NDArray[np.float64]:
        """Returns the relative step sizes μ_1, ..., μ_N, one column per component."""
        return self._mu[: self.length]

    @property
    def update(self) -> NDArray[np.bool_]:
        """Returns the update masks of the logged iterations, one column per component."""
        return self.mu > 0.0

    @property
    def f(self) -> NDArray[np.float64]:
        """Returns the mean-field selections f_0, ..., f_{N-1}."""
        return self._f[: self.length]

    @property
    def noise(self) -> NDArray[np.float64]:
        """Returns the noise draws V_1, ..., V_N."""
        return self._noise[: self.length]

    @property
    def bias(self) -> NDArray[np.float64]:
        """Returns the bias terms d_1, ..., d_N."""
        return self._bias[: self.length]

    @property
    def subsets(self) -> NDArray[np.int64]:
        """Returns the indices of the drawn update subsets."""
        return self._subsets[: self.length]

    def expanded_mu(self) -> NDArray[np.float64]:
        """Returns the relative step sizes expanded to one column per coordinate."""
        return np.repeat(self.mu, self.block_size, axis=1)

    @classmethod
    def from_knots(
        cls,
        tau_bar: NDArray[np.float64],
        x: NDArray[np.float64],
        mu: NDArray[np.float64] | None = None,
        block_size: int = 1,
        subsets: NDArray[np.int64] | None = None,
    ) -> TrajectoryLog:
        """Builds a log from externally produced knots, for example a flow path or an MDP learning run.

        Args:
            tau_bar: The strictly increasing knot times.
            x: The (len(tau_bar), dimension) knot values.
            mu: The optional relative step sizes, one row per iteration and one column per component. Defaults to
                all ones.
            block_size: The number of coordinates that share each component.
            subsets: The optional indices of the subsets drawn at each iteration.

        Returns:
            The log. Selections, noise and bias are zero and the log is marked as not carrying noise.
        """
        times = np.asarray(tau_bar, dtype=np.float64)
        values = np.asarray(x, dtype=np.float64)
        steps = np.diff(times)
        if np.any(steps <= 0.0):
            message = "Unable to build the trajectory log. The knot times must be strictly increasing."
            console.error(message=message, error=ValueError)
        n_components = values.shape[1] // block_size
        log = cls(
            x0=values[0], n_components=n_components, block_size=block_size, tau0=float(times[0]), capacity=steps.size
        )
        length = steps.size
        log._tau_bar[: length + 1] = times
        log._x[: length + 1] = values
        log._alpha_bar[:length] = steps
        log._mu[:length] = 1.0 if mu is None else mu
        if subsets is not None:
            log._subsets[:length] = subsets
        log.length = length
        log.noise_logged = False
        return log


@dataclass
class EngineState:
    """Stores the mutable state of a single-timescale asynchronous engine."""

    x: NDArray[np.float64]
    """The current iterate x_n."""
    counters: CounterVector
    """The per-component update counters ν_n(i)."""
    current_subset: int
    """The index of the subset drawn at the last iteration."""
    log: TrajectoryLog = field(repr=False)
    """The dense trajectory log."""

    @property
    def n(self) -> int:
        """Returns the number of completed iterations."""
        return self.counters.iterations

    @property
    def tau_bar(self) -> float:
        """Returns the current value of the intrinsic timescale τ̄_n."""
        return float(self.log.tau_bar[-1])

    @classmethod
    def initial(
        cls, x0: NDArray[np.float64] | list[float], initial_subset: int = 0, block_size: int = 1
    ) -> EngineState:
        """Creates the state of a fresh engine at x0. Each component owns block_size consecutive coordinates."""
        start = np.asarray(x0, dtype=np.float64).copy()
        if start.size % block_size != 0:
            message = (
                f"Unable to create the engine state. The dimension {start.size} is not a multiple of the block size "
                f"{block_size}."
            )
            console.error(message=message, error=ValueError)
        return cls(
            x=start,
            counters=CounterVector.zeros(size=start.size // block_size),
            current_subset=initial_subset,
            log=TrajectoryLog(x0=start, block_size=block_size),
        )


def _check_box(box: BoundingBox | None, x: NDArray[np.float64], n: int, assumption: str = "(A1)(a)") -> None:
    """Halts the run if the iterate left the compact box."""
    if box is not None and not box.contains(x):
        message = (
            f"The iterate left the compact box C at iteration {n}: x = {np.array2string(x, precision=4)}. This "
            f"violates the boundedness assumption {assumption}."
        )
        console.error(message=message, error=AssumptionViolationError)


def advance(
    state: EngineState,
    field: SetValuedField,
    schedule: Schedule,
    family: UpdateFamily,
    subset: int,
    noise: NDArray[np.float64],
    bias: NDArray[np.float64],
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    tie_rng: np.random.Generator | None = None,
    box: BoundingBox | None = None,
) -> EngineState:
    """Applies one iteration with an already drawn update subset, noise vector and bias vector.

    This is the shared core of the single-step `iterate` and of the bulk `run_engine` loop.

    Raises:
        AssumptionViolationError: If the updated iterate leaves the box.
    """
    selection = select(field, state.x, tie_policy, tie_rng)
    return apply_update(
        state=state,
        schedule=schedule,
        update=np.flatnonzero(family.membership[subset]),
        subset=subset,
        selection=selection,
        noise=noise,
        bias=bias,
        box=box,
    )


def apply_update(
    state: EngineState,
    schedule: Schedule,
    update: NDArray[np.intp],
    subset: int,
    selection: NDArray[np.float64],
    noise: NDArray[np.float64],
    bias: NDArray[np.float64],
    box: BoundingBox | None = None,
    assumption: str = "(A1)(a)",
) -> EngineState:
    """Applies the asynchronous update of the listed components with an already computed field selection.

    Increments the counters of the updated components first, so that each updated component i moves with its own step
    α(ν_{n+1}(i)). Components of block-structured iterates move all of their block's coordinates with the same step.

    Args:
        state: The engine state. Modified in place and returned.
        schedule: The step-size schedule.
        update: The indices of the updated components.
        subset: The index of the drawn subset, recorded in the log.
        selection: The field selection f_n, one entry per coordinate.
        noise: The noise vector V_{n+1}, one entry per coordinate.
        bias: The bias vector d_{n+1}, one entry per coordinate.
        box: The compact box the updated iterate must stay in.
        assumption: The boundedness assumption cited when the iterate leaves the box.

    Returns:
        The advanced engine state.

    Raises:
        AssumptionViolationError: If the updated iterate leaves the box.
    """
    log = state.log
    state.counters.increment(update_set=update)
    steps = schedule.values(state.counters.counts[update])
    bar_alpha = float(np.max(steps))
    mu = np.zeros(log.n_components, dtype=np.float64)
    mu[update] = steps / bar_alpha

    block = log.block_size
    coordinates = (update[:, np.newaxis] * block + np.arange(block)[np.newaxis, :]).ravel()
    x_next = state.x.copy()
    x_next[coordinates] += np.repeat(steps, block) * (selection[coordinates] + noise[coordinates] + bias[coordinates])
    log.append(subset=subset, alpha_bar=bar_alpha, mu=mu, f=selection, noise=noise, bias=bias, x_next=x_next)
    state.x = x_next
    state.current_subset = subset
    _check_box(box=box, x=x_next, n=state.n, assumption=assumption)
    return state


def iterate(
    state: EngineState,
    field: SetValuedField,
    schedule: Schedule,
    scheduler: UpdateScheduler,
    noise: NoiseModel,
    bias: BiasModel,
    streams: ReplicateStreams,
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    box: BoundingBox | None = None,
) -> EngineState:
    """Runs one iteration of the asynchronous stochastic approximation.

    Samples the next update subset from the scheduler at x_n, increments the counters of its components, selects
    f_n ∈ F(x_n), draws V_{n+1} and d_{n+1}, updates the scheduled components with their own step sizes
    α(ν_{n+1}(i)), advances τ̄ by ᾱ_{n+1} and appends the iteration to the log.

    Args:
        state: The engine state. Modified in place and returned.
        field: The set-valued mean field.
        schedule: The step-size schedule.
        scheduler: The update scheduler. Its own stream provides the subset draw.
        noise: The noise model. Draws come from the noise stream.
        bias: The bias model.
        streams: The replicate's named random streams.
        tie_policy: The selection rule of the mean field.
        box: The compact box C. Leaving it halts the run.

    Returns:
        The advanced engine state.

    Raises:
        AssumptionViolationError: If the iterate leaves the box.
    """
    subset = scheduler.advance(x=state.x)
    noise_vector = noise.sample(rng=streams.noise, shape=(state.x.size,))
    bias_vector = bias.values(iterations=np.asarray([state.n + 1]), dimension=state.x.size)[0]
    return advance(
        state=state,
        field=field,
        schedule=schedule,
        family=scheduler.family,
        subset=subset,
        noise=noise_vector,
        bias=bias_vector,
        tie_policy=tie_policy,
        tie_rng=streams.ties,
        box=box,
    )


@njit(cache=True)
def _run_linear_static(
    x0: NDArray[np.float64],
    counts: NDArray[np.int64],
    current: int,
    matrix: NDArray[np.float64],
    offset: NDArray[np.float64],
    cumulative: NDArray[np.float64],
    membership: NDArray[np.bool_],
    exponent: float,
    log_exponent: float,
    uniforms: NDArray[np.float64],
    noise: NDArray[np.float64],
    bias: NDArray[np.float64],
    lower: NDArray[np.float64],
    upper: NDArray[np.float64],
    start: int,
    tau_out: NDArray[np.float64],
    x_out: NDArray[np.float64],
    alpha_out: NDArray[np.float64],
    mu_out: NDArray[np.float64],
    f_out: NDArray[np.float64],
    subset_out: NDArray[np.int64],
) -> int:
    """Runs the asynchronous iteration for an affine mean field driven by a constant scheduling kernel.

    Notes:
        Uses numba-acceleration. Consumes exactly the same pre-drawn uniforms, noise and bias as the Python loop,
        applies the same inverse-CDF subset rule and the same step-size formula.

    Args:
        x0: The iterate at the start of the block.
        counts: The component counters. Updated in place.
        current: The index of the current subset.
        matrix: The matrix A of the field.
        offset: The offset b of the field.
        cumulative: The row-wise cumulative sums of the kernel matrix.
        membership: The (subsets, components) membership matrix.
        exponent: The schedule's polynomial exponent.
        log_exponent: The schedule's logarithmic exponent.
        uniforms: The pre-drawn scheduler uniforms, one per iteration.
        noise: The pre-drawn noise vectors.
        bias: The bias vectors.
        lower: The lower corner of the box.
        upper: The upper corner of the box.
        start: The log row that corresponds to the first iteration of the block.
        tau_out: The log's timescale buffer.
        x_out: The log's iterate buffer.
        alpha_out: The log's asynchronous step-size buffer.
        mu_out: The log's relative step-size buffer.
        f_out: The log's selection buffer.
        subset_out: The log's subset buffer.

    Returns:
        -1 if the block completed, or the offset of the iteration whose update left the box.
    """
    n_steps = uniforms.shape[0]
    dimension = x0.shape[0]
    n_subsets = cumulative.shape[0]
    x = x0.copy()
    x_next = x0.copy()
    steps = np.zeros(dimension)

    for step in range(n_steps):
        row = start + step

        # Draws the next subset with the inverse-CDF rule.
        chosen = n_subsets - 1
        for j in range(n_subsets):
            if uniforms[step] < cumulative[current, j]:
                chosen = j
                break
        current = chosen
        subset_out[row] = current

        # Evaluates the affine selection at the current iterate.
        for i in range(dimension):
            accumulator = 0.0
            for j in range(x.shape[0]):
                accumulator += matrix[i, j] * x[j]
            f_out[row, i] = accumulator + offset[i]

        # Increments the counters and computes the per-component step sizes.
        bar_alpha = 0.0
        for i in range(dimension):
            steps[i] = 0.0
            if membership[current, i]:
                counts[i] += 1
                value = float(counts[i])
                steps[i] = value**-exponent / max(np.log(value), 1.0) ** log_exponent
                bar_alpha = max(bar_alpha, steps[i])

        for i in range(dimension):
            x_next[i] = x[i]
            mu_out[row, i] = 0.0
            if membership[current, i]:
                mu_out[row, i] = steps[i] / bar_alpha
                x_next[i] = x[i] + steps[i] * (f_out[row, i] + noise[step, i] + bias[step, i])

        alpha_out[row] = bar_alpha
        tau_out[row + 1] = tau_out[row] + bar_alpha
        for i in range(dimension):
            x[i] = x_next[i]
            x_out[row + 1, i] = x[i]
            if x[i] < lower[i] or x[i] > upper[i]:
                return step
    return -1


def _compiled_eligible(field: SetValuedField, scheduler: UpdateScheduler) -> bool:
    """Determines whether the compiled kernel can run the requested configuration."""
    return (
        isinstance(field, LinearField)
        and isinstance(scheduler.kernel, StaticKernel)
        and field.matrix.shape == (field.dimension, field.dimension)
        and scheduler.family.n_components == field.dimension
    )


def run_engine(
    state: EngineState,
    field: SetValuedField,
    schedule: Schedule,
    scheduler: UpdateScheduler,
    noise: NoiseModel,
    bias: BiasModel,
    streams: ReplicateStreams,
    n_steps: int,
    tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,
    box: BoundingBox | None = None,
    compiled: bool | None = None,
) -> EngineState:
    """Runs the asynchronous iteration for a fixed number of steps.

    All randomness of the block is drawn up front: one scheduler uniform per iteration from the scheduler's stream and
    one noise vector per iteration from the noise stream. The compiled path (affine field and constant kernel) and the
    Python path consume the same draws.

    Args:
        state: The engine state. Modified in place and returned.
        field: The set-valued mean field.
        schedule: The step-size schedule.
        scheduler: The update scheduler.
        noise: The noise model.
        bias: The bias model.
        streams: The replicate's named random streams.
        n_steps: The number of iterations to run.
        tie_policy: The selection rule of the mean field.
        box: The compact box C.
        compiled: Forces (True) or forbids (False) the compiled path. By default, the compiled path is used whenever
            the configuration supports it.

    Returns:
        The advanced engine state.

    Raises:
        AssumptionViolationError: If the iterate leaves the box. The log keeps every iteration up to the violation.
    """
    dimension = state.x.size
    uniforms = scheduler.rng.random(n_steps)
    noise_block = noise.sample(rng=streams.noise, shape=(n_steps, dimension))
    bias_block = bias.values(iterations=np.arange(state.n + 1, state.n + n_steps + 1), dimension=dimension)

    use_compiled = _compiled_eligible(field=field, scheduler=scheduler) if compiled is None else compiled
    if use_compiled and not _compiled_eligible(field=field, scheduler=scheduler):
        message = "Unable to run the compiled engine. It requires an affine field and a static scheduling kernel."
        console.error(message=message, error=ValueError)

    if not use_compiled:
        for step in range(n_steps):
            subset = scheduler.advance_with(x=state.x, u=float(uniforms[step]))
            advance(
                state=state,
                field=field,
                schedule=schedule,
                family=scheduler.family,
                subset=subset,
                noise=noise_block[step],
                bias=bias_block[step],
                tie_policy=tie_policy,
                tie_rng=streams.ties,
                box=box,
            )
        return state

    linear = field
    assert isinstance(linear, LinearField)  # noqa: S101
    kernel = scheduler.kernel
    assert isinstance(kernel, StaticKernel)  # noqa: S101

    log = state.log
    log.reserve(additional=n_steps)
    start = log.length
    tau_out, x_out, alpha_out, mu_out, f_out, noise_out, bias_out, subset_out = log.buffers()
    noise_out[start : start + n_steps] = noise_block
    bias_out[start : start + n_steps] = bias_block
    lower = np.full(dimension, -np.inf) if box is None else box.lower
    upper = np.full(dimension, np.inf) if box is None else box.upper

    violation = _run_linear_static(
        state.x,
        state.counters.counts,
        scheduler.current,
        linear.matrix,
        linear.offset,
        np.cumsum(kernel.matrix, axis=1),
        scheduler.family.membership,
        schedule.exponent,
        schedule.log_exponent,
        uniforms,
        noise_block,
        bias_block,
        lower,
        upper,
        start,
        tau_out,
        x_out,
        alpha_out,
        mu_out,
        f_out,
        subset_out,
    )

    completed = n_steps if violation < 0 else violation + 1
    log.length = start + completed
    state.counters.iterations += completed
    state.x = log.x[-1].copy()
    state.current_subset = int(log.subsets[-1]) if log.length > 0 else state.current_subset
    scheduler.current = state.current_subset
    if violation >= 0:
        _check_box(box=box, x=state.x, n=state.n)
    return state


def m_bar(log: TrajectoryLog, t: float) -> int:
    """Returns the largest iteration index k with τ̄_k ≤ t.

    Raises:
        ValueError: If t is negative.
    """
    if t < 0.0:
        message = f"Unable to locate the iteration index. The time must be non-negative, but got {t}."
        console.error(message=message, error=ValueError)
    return int(np.searchsorted(log.tau_bar, t, side="right")) - 1


def interpolate_many(log: TrajectoryLog, times: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluates the piecewise-linear interpolation x̄(t) at every requested time.

    Raises:
        ValueError: If any time lies outside [τ̄_0, τ̄_N].
    """
    query = np.asarray(times, dtype=np.float64)
    knots = log.tau_bar
    if query.size > 0 and (np.min(query) < knots[0] or np.max(query) > knots[-1]):
        message = (
            f"Unable to interpolate the trajectory. Requested times must lie in [{knots[0]}, {knots[-1]}], but got "
            f"[{np.min(query)}, {np.max(query)}]."
        )
        console.error(message=message, error=ValueError)

    indices = np.searchsorted(knots, query, side="right") - 1
    values = log.x
    result = values[indices].copy()
    interior = indices < log.length
    if np.any(interior):
        rows = indices[interior]
        fraction = (query[interior] - knots[rows]) / log.alpha_bar[rows]
        result[interior] = values[rows] + fraction[:, np.newaxis] * (values[rows + 1] - values[rows])
    return result


def interpolate(log: TrajectoryLog, t: float) -> NDArray[np.float64]:
    """Evaluates x̄(t) = x_n + (t - τ̄_n) (x_{n+1} - x_n) / ᾱ_{n+1}. Exact at the knots."""
    return interpolate_many(log=log, times=np.asarray([t]))[0]


def decomposition_residual(log: TrajectoryLog) -> float:
    """Returns max |x_{n+1} - x_n - ᾱ_{n+1} M_{n+1} (f_n + V_{n+1} + d_{n+1})| over the logged iterations."""
    if log.length == 0:
        return 0.0
    scaled = log.alpha_bar[:, np.newaxis] * log.expanded_mu()
    predicted = scaled * (log.f + log.noise + log.bias)
    return float(np.max(np.abs(np.diff(log.x, axis=0) - predicted)))


@dataclass(frozen=True)
class EpsilonEstimate:
    """Stores the empirical lower bound ε̂ = η̂ · A_η^-1 on the weak limits of the relative step sizes."""

    eta: float
    """The estimated minimum update proportion."""
    ratio: float
    """The estimated ratio bound A_η."""
    epsilon: float
    """The resulting floor ε̂."""
    empirical: bool = True
    """Always True. The estimate is computed over a finite grid and horizon."""


def estimate_epsilon(
    kernel: TransitionKernel,
    family: UpdateFamily,
    schedule: Schedule,
    x_grid: Sequence[NDArray[np.float64]],
    n_max: int = 100_000,
) -> EpsilonEstimate:
    """Estimates the scaling-box floor ε̂ from the scheduler's stationary distributions and the schedule."""
    eta = min_update_proportion(kernel=kernel, family=family, x_grid=x_grid)
    ratio = 1.0 if eta >= 1.0 else ratio_bound(schedule=schedule, x=eta, n_max=n_max).value
    return EpsilonEstimate(eta=eta, ratio=ratio, epsilon=eta / ratio)


def thinned_rows(length: int, thinning: int) -> NDArray[np.int64]:
    """Returns every thinning-th knot index, always including the last one."""
    if thinning < 1:
        message = f"Unable to export the trajectory. The thinning factor must be positive, but got {thinning}."
        console.error(message=message, error=ValueError)
    rows = np.arange(0, length + 1, thinning, dtype=np.int64)
    if rows[-1] != length:
        rows = np.append(rows, length)
    return rows


def trajectory_frame(log: TrajectoryLog, thinning: int = 1) -> pl.DataFrame:
    """Converts the log to the (n, tau_bar, x_1..x_K, upd_1..upd_K, alpha_bar) table.

    Row n describes x_n and the update that produced it. Row 0 has no update: its mask is zero and alpha_bar is 0.
    """
    rows = thinned_rows(length=log.length, thinning=thinning)
    update = np.vstack([np.zeros((1, log.n_components), dtype=np.int64), log.update.astype(np.int64)])
    alpha = np.concatenate([[0.0], log.alpha_bar])
    columns: dict[str, Any] = {"n": rows, "tau_bar": log.tau_bar[rows]}
    for coordinate in range(log.dimension):
        columns[f"x_{coordinate + 1}"] = log.x[rows, coordinate]
    for component in range(log.n_components):
        columns[f"upd_{component + 1}"] = update[rows, component]
    columns["alpha_bar"] = alpha[rows]
    return pl.DataFrame(columns)


def write_trajectory_csv(log: TrajectoryLog, path: Path, thinning: int = 1) -> None:
    """Writes the trajectory table to a CSV file."""
    trajectory_frame(log=log, thinning=thinning).write_csv(path)


def write_run_metadata(path: Path, seed: int, config_hash: str, kind: str, extra: dict[str, Any] | None = None) -> None:
    """Writes the JSON run metadata (seed, configuration hash, experiment kind) next to a trajectory file."""
    payload: dict[str, Any] = {"seed": int(seed), "config_hash": config_hash, "kind": kind}
    if extra is not None:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
