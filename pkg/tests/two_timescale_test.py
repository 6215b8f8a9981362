"""Contains tests for the coupled two-timescale process and its tracking diagnostics."""

from pathlib import Path

import numpy as np
import pytest
import polars as pl

from sl_async_sa.errors import AssumptionViolationError
from sl_async_sa.streams import ReplicateStreams
from sl_async_sa.stepsize import Schedule
from sl_async_sa.sa_engine import BiasModel, NoiseKinds, NoiseModel, BoundingBox
from sl_async_sa.scheduler import StaticKernel, UpdateFamily, UpdateScheduler
from sl_async_sa.mean_field import LinearField, select
from sl_async_sa.two_timescale import (
    JointFamily,
    CoupledState,
    FastLimitOracle,
    run_coupled,
    ratio_trend,
    coupled_frame,
    iterate_coupled,
    tracking_error,
    tracking_errors,
    write_coupled_csv,
    linear_fast_limit,
    reduced_slow_field,
    check_schedule_pairing,
    windowed_tracking_error,
)

# z = (x_1, x_2, y_1, y_2). The fast iterate tracks Λ(x) = x and the reduced slow field is F(x, x) = -x.
_SLOW_FIELD = LinearField(matrix=[[-2.0, 0.0, 1.0, 0.0], [0.0, -2.0, 0.0, 1.0]])
_FAST_FIELD = LinearField(matrix=[[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]])
_SLOW = Schedule(exponent=1.0)
_FAST = Schedule(exponent=0.6)


def _joint() -> JointFamily:
    """Returns the joint family {x_1, y_1}, {x_2, y_2}, {x_1, x_2, y_1, y_2}."""
    family = UpdateFamily(subsets=((0, 2), (1, 3), (0, 1, 2, 3)), n_components=4)
    return JointFamily(family=family, n_slow=2)


def _run(seed: int, n_steps: int, boxes: tuple[BoundingBox | None, BoundingBox | None] = (None, None)) -> CoupledState:
    """Runs the reference coupled process with uniform joint scheduling and noisy fast updates."""
    joint = _joint()
    streams = ReplicateStreams.from_seed(seed=seed)
    scheduler = UpdateScheduler(
        kernel=StaticKernel(np.full((3, 3), 1.0 / 3.0)), family=joint.family, initial_subset=0, rng=streams.scheduler
    )
    state = CoupledState.initial(x0=[1.0, -0.5], y0=[0.0, 0.0])
    return run_coupled(
        state=state,
        slow_field=_SLOW_FIELD,
        fast_field=_FAST_FIELD,
        slow_schedule=_SLOW,
        fast_schedule=_FAST,
        scheduler=scheduler,
        joint=joint,
        noises=(NoiseModel(), NoiseModel(kind=NoiseKinds.GAUSSIAN, scale=0.1)),
        biases=(BiasModel(), BiasModel()),
        streams=streams,
        n_steps=n_steps,
        boxes=boxes,
    )


def test_joint_family_splits_slow_and_fast_parts() -> None:
    """Verifies the slow and fast index spaces of each joint subset."""
    joint = _joint()
    assert joint.n_fast == 2
    slow, fast = joint.parts(2)
    np.testing.assert_array_equal(slow, [0, 1])
    np.testing.assert_array_equal(fast, [0, 1])
    slow, fast = joint.parts(1)
    np.testing.assert_array_equal(slow, [1])
    np.testing.assert_array_equal(fast, [1])


@pytest.mark.parametrize(
    ("subsets", "n_slow"),
    [
        (((0,), (0, 1)), 1),
        (((0, 1),), 0),
        (((0, 1),), 2),
    ],
)
def test_joint_family_rejects_one_sided_subsets(subsets: tuple[tuple[int, ...], ...], n_slow: int) -> None:
    """Verifies that every joint subset must update both iterates."""
    with pytest.raises(ValueError):
        JointFamily(family=UpdateFamily(subsets=subsets, n_components=2), n_slow=n_slow)


def test_fast_iterate_tracks_its_equilibrium() -> None:
    """Verifies that y_n follows Λ(x_n) while x_n converges to the reduced equilibrium."""
    state = _run(seed=0, n_steps=20_000)
    oracle = linear_fast_limit(fast_field=_FAST_FIELD, n_slow=2, tolerance=0.05)
    assert tracking_error(state=state, oracle=oracle) <= oracle.tolerance
    assert np.max(np.abs(state.slow.x)) <= 0.1

    errors = tracking_errors(slow_path=state.slow.log.x, fast_path=state.fast.log.x, oracle=oracle)
    assert errors.shape == (20_001,)
    assert np.max(errors[-100:]) <= oracle.tolerance
    windowed = windowed_tracking_error(slow_path=state.slow.log.x, fast_path=state.fast.log.x, oracle=oracle)
    assert windowed <= oracle.tolerance


def test_windowed_tracking_error_takes_the_median_residual() -> None:
    """Verifies that symmetric fluctuations around a constant residual leave only the constant."""
    oracle = linear_fast_limit(fast_field=_FAST_FIELD, n_slow=2)
    offset = np.array([0.01, -0.005])
    swings = np.array([0.0] + [0.5 if k % 2 else -0.5 for k in range(1, 11)])
    slow_path = np.ones((11, 2))
    fast_path = 1.0 + offset + swings[:, None]

    assert tracking_errors(slow_path=slow_path, fast_path=fast_path, oracle=oracle)[-1] == pytest.approx(0.505)
    for window in (1.0, 0.5):
        error = windowed_tracking_error(slow_path=slow_path, fast_path=fast_path, oracle=oracle, window=window)
        assert error == pytest.approx(0.01)
    with pytest.raises(ValueError):
        windowed_tracking_error(slow_path=slow_path, fast_path=fast_path, oracle=oracle, window=0.0)


def test_step_size_ratio_vanishes() -> None:
    """Verifies that ᾱ_n / γ̄_n trends to zero for the paired schedules."""
    state = _run(seed=1, n_steps=10_000)
    trend = ratio_trend(state.ratios)
    assert trend.decreasing
    assert trend.terminal < 0.1
    assert trend.to_dict()["decreasing"] is True


def test_ratio_trend() -> None:
    """Verifies the decade comparison on a known sequence and the minimum length."""
    trend = ratio_trend(np.linspace(1.0, 0.1, 100))
    assert trend.first_decade_max == 1.0
    assert trend.terminal == pytest.approx(0.1)
    assert not ratio_trend(np.ones(20)).decreasing
    with pytest.raises(ValueError):
        ratio_trend(np.ones(9))


def test_schedule_pairing_is_enforced() -> None:
    """Verifies that a slow schedule that does not vanish faster than the fast one is rejected."""
    check_schedule_pairing(slow=_SLOW, fast=_FAST)
    with pytest.raises(AssumptionViolationError, match=r"\(B2\)\(c\)"):
        check_schedule_pairing(slow=_FAST, fast=_SLOW)


def test_fast_limit_requires_stable_fast_dynamics() -> None:
    """Verifies the equilibrium map of an affine fast field and the rejection of unstable fast blocks."""
    oracle = linear_fast_limit(fast_field=LinearField(matrix=[[2.0, -4.0]], offset=[1.0]), n_slow=1)
    np.testing.assert_allclose(oracle(np.array([1.5])), [1.0])
    with pytest.raises(AssumptionViolationError, match=r"\(B6\)"):
        linear_fast_limit(fast_field=LinearField(matrix=[[0.0, 1.0]]), n_slow=1)


def test_fast_limit_oracle() -> None:
    """Verifies the Lipschitz estimate of the fast limit and the tolerance check."""
    oracle = FastLimitOracle(function=lambda x: 2.0 * x)
    probes = [np.array([0.0]), np.array([1.0]), np.array([3.0])]
    assert oracle.lipschitz_estimate(probes) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        FastLimitOracle(function=lambda x: x, tolerance=0.0)


def test_reduced_slow_field_pins_the_fast_iterate() -> None:
    """Verifies F^Λ(x) = F(x, Λ(x)) = -x for the reference coupling."""
    oracle = linear_fast_limit(fast_field=_FAST_FIELD, n_slow=2)
    field = reduced_slow_field(slow_field=_SLOW_FIELD, oracle=oracle, n_slow=2)
    np.testing.assert_allclose(select(field, np.array([0.5, -2.0])), [-0.5, 2.0])
    np.testing.assert_allclose(field.vertices(np.array([0.5, -2.0])), [[-0.5, 2.0]])
    assert field.has_vertices


def test_reduced_slow_field_rejects_points_of_the_wrong_size() -> None:
    """Verifies that the reduced slow field only accepts slow points with n_slow entries."""
    oracle = linear_fast_limit(fast_field=_FAST_FIELD, n_slow=2)
    field = reduced_slow_field(slow_field=_SLOW_FIELD, oracle=oracle, n_slow=2)
    with pytest.raises(ValueError, match="2 entries"):
        select(field, np.zeros(3))
    with pytest.raises(ValueError, match="2 entries"):
        field.vertices(np.zeros(4))


def test_single_coupled_iteration() -> None:
    """Verifies that one iteration advances both iterates with their own schedules from the pre-update point."""
    joint = _joint()
    streams = ReplicateStreams.from_seed(seed=0)
    scheduler = UpdateScheduler(
        kernel=StaticKernel(np.ones((3, 3)) / 3.0), family=joint.family, initial_subset=0, rng=streams.scheduler
    )
    state = CoupledState.initial(x0=[1.0, 1.0], y0=[0.0, 0.0])
    iterate_coupled(
        state=state,
        slow_field=_SLOW_FIELD,
        fast_field=_FAST_FIELD,
        slow_schedule=_SLOW,
        fast_schedule=_FAST,
        scheduler=scheduler,
        joint=joint,
        noises=(NoiseModel(), NoiseModel()),
        biases=(BiasModel(), BiasModel()),
        streams=streams,
    )
    slow, fast = joint.parts(state.joint_subset)
    expected_x = np.array([1.0, 1.0])
    expected_x[slow] = -1.0
    expected_y = np.zeros(2)
    expected_y[fast] = 1.0
    np.testing.assert_allclose(state.slow.x, expected_x)
    np.testing.assert_allclose(state.fast.x, expected_y)
    assert state.n == 1


def test_coupled_runs_are_reproducible() -> None:
    """Verifies that equal seeds reproduce both logs."""
    first = _run(seed=4, n_steps=300)
    second = _run(seed=4, n_steps=300)
    np.testing.assert_array_equal(first.slow.log.x, second.slow.log.x)
    np.testing.assert_array_equal(first.fast.log.x, second.fast.log.x)


def test_leaving_a_box_halts_the_coupled_run() -> None:
    """Verifies that an escaping fast iterate cites the coupled boundedness assumption."""
    with pytest.raises(AssumptionViolationError, match=r"\(B1\)\(a\)"):
        _run(seed=0, n_steps=50, boxes=(None, BoundingBox.symmetric(radius=0.5, dimension=2)))


def test_coupled_table(tmp_path: Path) -> None:
    """Verifies the coupled trajectory table layout."""
    state = _run(seed=2, n_steps=30)
    frame = coupled_frame(state=state, thinning=10)
    assert frame.columns == ["n", "tau_bar", "rho_bar", "x_1", "x_2", "y_1", "y_2", "ratio"]
    assert frame["n"].to_list() == [0, 10, 20, 30]
    assert frame["ratio"][0] == 0.0
    assert np.all(frame["rho_bar"].to_numpy()[1:] >= frame["tau_bar"].to_numpy()[1:])

    path = tmp_path / "coupled.csv"
    write_coupled_csv(state=state, path=path)
    assert pl.read_csv(path).height == 31
