"""Contains tests for the step-size schedules and the asynchronous step-size bookkeeping."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sl_async_sa.stepsize import (
    Schedule,
    CounterVector,
    ScheduleFamilies,
    async_step,
    partial_sum,
    ratio_bound,
    square_summable,
    is_faster_timescale,
    relative_step_floor,
    analytic_ratio_bound,
)

exponents = st.floats(min_value=0.51, max_value=1.0)
log_exponents = st.floats(min_value=0.0, max_value=1.0)


@pytest.mark.parametrize(
    ("schedule", "n", "expected"),
    [
        (Schedule(exponent=1.0), 1, 1.0),
        (Schedule(exponent=1.0), 4, 0.25),
        (Schedule(family=ScheduleFamilies.POWER_LOG, exponent=1.0, log_exponent=1.0), 7, 1.0 / (7.0 * math.log(7.0))),
        (Schedule(exponent=0.6), 32, 32.0**-0.6),
    ],
)
def test_schedule_value(schedule: Schedule, n: int, expected: float) -> None:
    """Verifies the closed-form step sizes of the built-in families."""
    assert schedule.value(n) == pytest.approx(expected, rel=1e-12)


def test_schedule_accepts_family_names() -> None:
    """Verifies that string family names from configuration files resolve to the enumeration."""
    schedule = Schedule(family="power-log", exponent=0.8, log_exponent=0.5)  # type: ignore[arg-type]
    assert schedule.family is ScheduleFamilies.POWER_LOG


@pytest.mark.parametrize(
    ("family", "exponent", "log_exponent"),
    [
        (ScheduleFamilies.POWER, 0.5, 0.0),
        (ScheduleFamilies.POWER, 1.2, 0.0),
        (ScheduleFamilies.POWER, 0.8, 0.5),
        (ScheduleFamilies.POWER_LOG, 0.8, -0.1),
        (ScheduleFamilies.POWER_LOG, 1.0, 1.5),
    ],
)
def test_schedule_rejects_invalid_parameters(family: ScheduleFamilies, exponent: float, log_exponent: float) -> None:
    """Verifies that schedules outside the supported parameter ranges are rejected."""
    with pytest.raises(ValueError):
        Schedule(family=family, exponent=exponent, log_exponent=log_exponent)


def test_schedule_is_one_indexed() -> None:
    """Verifies that evaluating a schedule at n = 0 fails."""
    with pytest.raises(ValueError):
        Schedule().value(0)


@given(exponent=exponents, log_exponent=log_exponents)
def test_schedule_is_positive_and_non_increasing(exponent: float, log_exponent: float) -> None:
    """Verifies that every schedule is positive and monotone non-increasing."""
    schedule = Schedule(family=ScheduleFamilies.POWER_LOG, exponent=exponent, log_exponent=log_exponent)
    values = schedule.values(np.arange(1, 5_001))
    assert np.all(values > 0.0)
    assert np.all(np.diff(values) <= 0.0)


@pytest.mark.parametrize(
    ("exponent", "x", "n_max", "n_min", "low", "high"),
    [
        (1.0, 0.5, 100_000, 2, 2.0, 3.0),
        (1.0, 0.999, 10_000, 3, 0.0, 1.51),
        (0.6, 0.5, 100_000, 10, 0.0, 2.0**0.6 + 0.1),
    ],
)
def test_ratio_bound(exponent: float, x: float, n_max: int, n_min: int, low: float, high: float) -> None:
    """Verifies the brute-force ratio supremum on the reference schedules."""
    bound = ratio_bound(schedule=Schedule(exponent=exponent), x=x, n_max=n_max, n_min=n_min)
    assert low <= bound.value <= high
    assert n_min <= bound.argmax_n <= n_max


def test_ratio_bound_is_non_decreasing_in_horizon() -> None:
    """Verifies that extending the horizon never lowers the running supremum."""
    schedule = Schedule(family=ScheduleFamilies.POWER_LOG, exponent=0.7, log_exponent=0.4)
    values = [ratio_bound(schedule=schedule, x=0.3, n_max=n_max).value for n_max in (10, 100, 1_000, 10_000)]
    assert values == sorted(values)


@pytest.mark.parametrize(("x", "n_max", "n_min"), [(0.0, 100, 2), (1.0, 100, 2), (0.5, 100, 1), (0.5, 5, 10)])
def test_ratio_bound_rejects_invalid_arguments(x: float, n_max: int, n_min: int) -> None:
    """Verifies the argument checks of the ratio bound estimator."""
    with pytest.raises(ValueError):
        ratio_bound(schedule=Schedule(), x=x, n_max=n_max, n_min=n_min)


@given(exponent=exponents, log_exponent=log_exponents, x=st.floats(min_value=0.05, max_value=0.95))
def test_analytic_ratio_bound_dominates_the_empirical_supremum(exponent: float, log_exponent: float, x: float) -> None:
    """Verifies that the closed-form bound is never below the observed supremum."""
    schedule = Schedule(family=ScheduleFamilies.POWER_LOG, exponent=exponent, log_exponent=log_exponent)
    empirical = ratio_bound(schedule=schedule, x=x, n_max=2_000).value
    assert empirical <= analytic_ratio_bound(schedule=schedule, x=x) * (1.0 + 1e-12)


@pytest.mark.parametrize(
    ("schedule", "counts", "update_set", "bar_alpha", "mu"),
    [
        (Schedule(exponent=1.0), [3, 5], [0, 1], 1.0 / 3.0, [1.0, 0.6]),
        (Schedule(exponent=1.0), [7, 2], [1], 0.5, [0.0, 1.0]),
        (Schedule(exponent=0.6), [16, 81], [0, 1], 16.0**-0.6, [1.0, (16.0 / 81.0) ** 0.6]),
    ],
)
def test_async_step(
    schedule: Schedule, counts: list[int], update_set: list[int], bar_alpha: float, mu: list[float]
) -> None:
    """Verifies the asynchronous step size and the relative step sizes on the reference counters."""
    record = async_step(schedule=schedule, counters=np.asarray(counts, dtype=np.int64), update_set=update_set)
    assert record.bar_alpha == pytest.approx(bar_alpha, rel=1e-12)
    np.testing.assert_allclose(record.mu, mu, rtol=1e-12)


def test_async_step_rejects_empty_and_stale_update_sets() -> None:
    """Verifies that the update set must be non-empty and already counted."""
    with pytest.raises(ValueError):
        async_step(schedule=Schedule(), counters=np.array([1, 1]), update_set=[])
    with pytest.raises(ValueError):
        async_step(schedule=Schedule(), counters=np.array([0, 1]), update_set=[0])


@given(
    counts=st.lists(st.integers(min_value=1, max_value=10_000), min_size=1, max_size=8),
    exponent=exponents,
    data=st.data(),
)
def test_relative_steps_lie_in_the_unit_interval(counts: list[int], exponent: float, data: st.DataObject) -> None:
    """Verifies that μ is 0 off the update set, in (0, 1] on it, and reaches 1 at the least-updated component."""
    update_set = data.draw(st.sets(st.integers(min_value=0, max_value=len(counts) - 1), min_size=1))
    ordered = sorted(update_set)
    record = async_step(schedule=Schedule(exponent=exponent), counters=np.asarray(counts), update_set=ordered)
    outside = np.setdiff1d(np.arange(len(counts)), ordered)
    assert np.all(record.mu[outside] == 0.0)
    assert np.all((record.mu[ordered] > 0.0) & (record.mu[ordered] <= 1.0))
    assert np.max(record.mu) == 1.0


def test_counter_vector_tracks_update_fractions() -> None:
    """Verifies the counter bookkeeping of an asynchronous iterate."""
    counters = CounterVector.zeros(size=3)
    np.testing.assert_array_equal(counters.fractions(), [0.0, 0.0, 0.0])
    for update_set in ([0], [0, 1], [2], [0]):
        counters.increment(update_set)
    assert counters.iterations == 4
    np.testing.assert_array_equal(counters.counts, [3, 1, 1])
    np.testing.assert_allclose(counters.fractions(), [0.75, 0.25, 0.25])


def test_partial_sums_diverge_slowly_for_the_harmonic_schedule() -> None:
    """Verifies that the harmonic partial sums grow like ln n."""
    assert partial_sum(schedule=Schedule(), n=100_000) == pytest.approx(math.log(100_000) + 0.5772, abs=1e-3)


@pytest.mark.parametrize(
    ("schedule", "moment_order", "expected"),
    [
        (Schedule(exponent=1.0), 2.0, True),
        (Schedule(exponent=0.6), 2.0, True),
        (Schedule(exponent=0.51), 2.0, True),
        (Schedule(family=ScheduleFamilies.POWER_LOG, exponent=0.6, log_exponent=1.0), 2.0, True),
    ],
)
def test_square_summable(schedule: Schedule, moment_order: float, expected: bool) -> None:  # noqa: FBT001
    """Verifies the summability of the step-size powers used by the noise condition."""
    assert square_summable(schedule=schedule, moment_order=moment_order) is expected


def test_timescale_ordering() -> None:
    """Verifies the comparison of slow and fast schedules."""
    slow = Schedule(exponent=1.0)
    fast = Schedule(exponent=0.6)
    assert is_faster_timescale(slow=slow, fast=fast)
    assert not is_faster_timescale(slow=fast, fast=slow)
    assert not is_faster_timescale(slow=slow, fast=slow)
    logged = Schedule(family=ScheduleFamilies.POWER_LOG, exponent=0.6, log_exponent=1.0)
    assert is_faster_timescale(slow=logged, fast=fast)


def test_relative_step_floor() -> None:
    """Verifies the relative step floor estimate ε̂ = η / A_η."""
    assert relative_step_floor(schedule=Schedule(), eta=1.0) == 1.0
    estimate = relative_step_floor(schedule=Schedule(exponent=1.0), eta=0.25, n_max=10_000)
    assert 0.0 < estimate <= 0.25
    with pytest.raises(ValueError):
        relative_step_floor(schedule=Schedule(), eta=0.0)
