"""Provides the deterministic step-size schedules used by the stochastic approximation engines, their regularity
checks, and the asynchronous (per-iteration) and relative step-size computations.
"""

from enum import StrEnum
from dataclasses import field, dataclass

import numpy as np
from numpy.typing import NDArray
from ataraxis_base_utilities import console

_MINIMUM_EXPONENT: float = 0.5
"""The exclusive lower bound on the polynomial exponent. Smaller exponents are not square-summable."""
_MAXIMUM_EXPONENT: float = 1.0
"""The inclusive upper bound on the polynomial exponent. Larger exponents make the step-size series converge."""


class ScheduleFamilies(StrEnum):
    """Defines the supported step-size schedule families."""

    POWER = "power"
    """The polynomial family α(n) = n^-p."""
    POWER_LOG = "power-log"
    """The polynomial-logarithmic family α(n) = n^-p / max(ln n, 1)^q."""


@dataclass(frozen=True)
class Schedule:
    """Defines a deterministic, monotone non-increasing step-size schedule α(n), n ≥ 1.

    Both families share the formula α(n) = n^-p / max(ln n, 1)^q, with q fixed to 0 for the power family. The
    logarithm is floored at 1 so that the schedule stays monotone for small n.

    Notes:
        The compiled simulation kernels evaluate the same formula. Any change here must be mirrored there.
    """

    family: ScheduleFamilies = ScheduleFamilies.POWER
    """The schedule family."""
    exponent: float = 1.0
    """The polynomial exponent p, in (0.5, 1]."""
    log_exponent: float = 0.0
    """The logarithmic exponent q ≥ 0. Only used by the power-log family."""

    def __post_init__(self) -> None:
        """Validates the schedule parameters."""
        # Resolves string family names passed from configuration files.
        object.__setattr__(self, "family", ScheduleFamilies(self.family))

        if not _MINIMUM_EXPONENT < self.exponent <= _MAXIMUM_EXPONENT:
            message = (
                f"Unable to create the {self.family} step-size schedule. The exponent must be in the interval "
                f"({_MINIMUM_EXPONENT}, {_MAXIMUM_EXPONENT}], but got {self.exponent}."
            )
            console.error(message=message, error=ValueError)

        if self.family == ScheduleFamilies.POWER and self.log_exponent != 0.0:
            message = (
                f"Unable to create the power step-size schedule. The power family does not use a logarithmic "
                f"exponent, but got {self.log_exponent}. Use the power-log family instead."
            )
            console.error(message=message, error=ValueError)

        if self.log_exponent < 0.0:
            message = (
                f"Unable to create the {self.family} step-size schedule. The logarithmic exponent must be "
                f"non-negative, but got {self.log_exponent}."
            )
            console.error(message=message, error=ValueError)

        # For p = 1, Σ 1/(n (ln n)^q) diverges only when q ≤ 1.
        if self.exponent == _MAXIMUM_EXPONENT and self.log_exponent > 1.0:
            message = (
                f"Unable to create the {self.family} step-size schedule. With exponent 1 the logarithmic exponent "
                f"must not exceed 1 for the step sizes to sum to infinity, but got {self.log_exponent}."
            )
            console.error(message=message, error=ValueError)

    def value(self, n: int) -> float:
        """Returns the step size α(n) for the input iteration (or counter) value.

        Args:
            n: The 1-indexed iteration or counter value.

        Returns:
            The step size α(n).

        Raises:
            ValueError: If n is smaller than 1.
        """
        return float(self.values(np.asarray([n], dtype=np.int64))[0])

    def values(self, n: NDArray[np.integer] | NDArray[np.floating]) -> NDArray[np.float64]:
        """Returns the step sizes α(n) for every element of the input array.

        Args:
            n: The array of 1-indexed iteration or counter values.

        Returns:
            The array of step sizes, with the same shape as the input array.

        Raises:
            ValueError: If any element of the input array is smaller than 1.
        """
        n_array = np.asarray(n, dtype=np.float64)
        if n_array.size > 0 and np.min(n_array) < 1:
            message = (
                f"Unable to evaluate the {self.family} step-size schedule. Schedules are 1-indexed, but got the "
                f"value {np.min(n_array)}."
            )
            console.error(message=message, error=ValueError)
        result: NDArray[np.float64] = n_array**-self.exponent / np.maximum(np.log(n_array), 1.0) ** self.log_exponent
        return result


@dataclass
class CounterVector:
    """Stores the per-component update counters ν_n(i) of an asynchronous iterate."""

    counts: NDArray[np.int64]
    """The number of times each component was updated so far."""
    iterations: int = 0
    """The number of completed iterations n. Every counter is bounded by this value."""

    @classmethod
    def zeros(cls, size: int) -> CounterVector:
        """Creates the counter vector of a fresh iterate with the requested number of components."""
        return cls(counts=np.zeros(size, dtype=np.int64), iterations=0)

    def increment(self, update_set: NDArray[np.intp] | list[int] | tuple[int, ...]) -> None:
        """Advances the iteration count and increments the counters of all components in the update set."""
        self.counts[np.asarray(update_set, dtype=np.intp)] += 1
        self.iterations += 1

    def fractions(self) -> NDArray[np.float64]:
        """Returns the empirical update proportions ν_n(i)/n."""
        if self.iterations == 0:
            return np.zeros(self.counts.size, dtype=np.float64)
        return self.counts / float(self.iterations)


@dataclass(frozen=True)
class AsyncStepRecord:
    """Stores the asynchronous step size ᾱ_n and the relative step sizes μ_n(i) of a single iteration."""

    bar_alpha: float
    """The largest step size applied to any component updated during the iteration."""
    mu: NDArray[np.float64] = field(repr=False)
    """The relative step sizes: α(ν_n(i))/ᾱ_n for updated components and 0 for all others."""


@dataclass(frozen=True)
class RatioBound:
    """Stores the finite-horizon empirical estimate of the (A2)(b) ratio bound A_x."""

    value: float
    """The largest observed ratio α([xn]) / α(n)."""
    argmax_n: int
    """The iteration n at which the largest ratio was observed."""


def async_step(
    schedule: Schedule,
    counters: CounterVector | NDArray[np.int64],
    update_set: NDArray[np.intp] | list[int] | tuple[int, ...],
) -> AsyncStepRecord:
    """Computes the asynchronous step size and the relative step sizes for the current iteration.

    Args:
        schedule: The step-size schedule used by the iterate.
        counters: The update counters, already incremented for the current iteration.
        update_set: The indices of the components updated during the current iteration.

    Returns:
        The AsyncStepRecord with ᾱ_n = max over the update set of α(ν_n(i)) and μ_n(i) = α(ν_n(i)) / ᾱ_n on the
        update set (0 elsewhere).

    Raises:
        ValueError: If the update set is empty or references a component whose counter is zero.
    """
    counts = counters.counts if isinstance(counters, CounterVector) else np.asarray(counters, dtype=np.int64)
    indices = np.asarray(update_set, dtype=np.intp)
    if indices.size == 0:
        message = (
            "Unable to compute the asynchronous step size. The update set is empty, but every iteration must update "
            "at least one component."
        )
        console.error(message=message, error=ValueError)
    if np.any(counts[indices] < 1):
        message = (
            "Unable to compute the asynchronous step size. The counters of the updated components must already "
            "include the current update."
        )
        console.error(message=message, error=ValueError)

    steps = schedule.values(counts[indices])
    bar_alpha = float(np.max(steps))
    mu = np.zeros(counts.size, dtype=np.float64)
    mu[indices] = steps / bar_alpha
    return AsyncStepRecord(bar_alpha=bar_alpha, mu=mu)


def ratio_bound(schedule: Schedule, x: float, n_max: int, n_min: int = 2) -> RatioBound:
    """Estimates the (A2)(b) ratio bound sup_n α([xn]) / α(n) over a finite horizon.

    The integer part [xn] is floored at 1 so that schedules stay 1-indexed. The estimate is a running supremum and is
    therefore non-decreasing in n_max.

    Notes:
        For small n the integer part dominates the ratio (for example n = 2 yields 2^p for any x < 1). Use n_min to
        exclude this transient when only the tail behavior is of interest.

    Args:
        schedule: The evaluated step-size schedule.
        x: The contraction factor in (0, 1).
        n_max: The last iteration included in the supremum. Must be at least n_min.
        n_min: The first iteration included in the supremum. Must be at least 2.

    Returns:
        The RatioBound instance that stores the supremum and the iteration at which it was attained.

    Raises:
        ValueError: If x is outside (0, 1) or the iteration range is invalid.
    """
    if not 0.0 < x < 1.0:
        message = f"Unable to estimate the step-size ratio bound. The factor x must be in (0, 1), but got {x}."
        console.error(message=message, error=ValueError)
    if n_min < 2 or n_max < n_min:  # noqa: PLR2004
        message = (
            f"Unable to estimate the step-size ratio bound. Expected 2 <= n_min <= n_max, but got n_min={n_min} and "
            f"n_max={n_max}."
        )
        console.error(message=message, error=ValueError)

    iterations = np.arange(n_min, n_max + 1, dtype=np.int64)
    reduced = np.maximum(np.floor(x * iterations).astype(np.int64), 1)
    ratios = schedule.values(reduced) / schedule.values(iterations)
    index = int(np.argmax(ratios))
    return RatioBound(value=float(ratios[index]), argmax_n=int(iterations[index]))


def analytic_ratio_bound(schedule: Schedule, x: float) -> float:
    """Returns a closed-form upper bound on A_x that holds for all n for the built-in schedule families.

    Uses [xn] ≥ xn/2 whenever xn ≥ 2 (and n < 2/x otherwise), which bounds the polynomial part by (2/x)^p and the
    logarithmic part by (1 + ln(2/x))^q.

    Args:
        schedule: The evaluated step-size schedule.
        x: The contraction factor in (0, 1).

    Returns:
        The certified bound on sup_n α([xn]) / α(n).
    """
    if not 0.0 < x < 1.0:
        message = f"Unable to certify the step-size ratio bound. The factor x must be in (0, 1), but got {x}."
        console.error(message=message, error=ValueError)
    return float((2.0 / x) ** schedule.exponent * (1.0 + np.log(2.0 / x)) ** schedule.log_exponent)


def partial_sum(schedule: Schedule, n: int) -> float:
    """Returns Σ_{k ≤ n} α(k), the finite-horizon witness of the divergence of the step-size series."""
    return float(np.sum(schedule.values(np.arange(1, n + 1, dtype=np.int64))))


def square_summable(schedule: Schedule, moment_order: float = 2.0) -> bool:
    """Determines whether Σ α(n)^(1 + q/2) is finite for the moment order q of the noise condition.

    Args:
        schedule: The evaluated step-size schedule.
        moment_order: The order q ≥ 2 of the noise moment bound.

    Returns:
        True if the series converges, False otherwise.
    """
    power = 1.0 + moment_order / 2.0
    polynomial = schedule.exponent * power
    if polynomial > 1.0:
        return True
    return bool(polynomial == 1.0 and schedule.log_exponent * power > 1.0)


def is_faster_timescale(slow: Schedule, fast: Schedule) -> bool:
    """Determines whether α(n)/γ(n) → 0 for the slow schedule α and the fast schedule γ."""
    if slow.exponent != fast.exponent:
        return slow.exponent > fast.exponent
    return slow.log_exponent > fast.log_exponent


def relative_step_floor(schedule: Schedule, eta: float, n_max: int = 100_000) -> float:
    """Returns the empirical lower bound ε̂ = η · A_η^-1 on the weak limits of the relative step sizes.

    Args:
        schedule: The schedule that drives the asynchronous iterate.
        eta: The minimum update proportion of the scheduler, in (0, 1].
        n_max: The horizon used to estimate A_η.

    Returns:
        The estimated floor ε̂. The value is a finite-horizon estimate, not a certificate.
    """
    if not 0.0 < eta <= 1.0:
        message = f"Unable to estimate the relative step-size floor. Eta must be in (0, 1], but got {eta}."
        console.error(message=message, error=ValueError)
    if eta == 1.0:
        return 1.0
    return eta / ratio_bound(schedule=schedule, x=eta, n_max=n_max).value
