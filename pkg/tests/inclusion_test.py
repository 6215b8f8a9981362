"""Contains tests for the differential-inclusion flows and the trajectory diagnostics built on them."""

from pathlib import Path

import numpy as np
import pytest
import polars as pl

from sl_async_sa.streams import ReplicateStreams
from sl_async_sa.stepsize import Schedule
from sl_async_sa.inclusion import (
    FlowSampler,
    LyapunovCandidate,
    SelectionPolicies,
    euler_flow,
    apt_distance,
    write_apt_csv,
    lyapunov_check,
    kushner_clark_sup,
    central_difference,
    gradient_cross_check,
    kushner_clark_profile,
    relative_step_integral,
    relative_step_integrals,
    relative_step_floor_check,
)
from sl_async_sa.sa_engine import NoiseKinds, BiasModel, NoiseModel, EngineState, TrajectoryLog, run_engine
from sl_async_sa.scheduler import StaticKernel, UpdateFamily, UpdateScheduler
from sl_async_sa.mean_field import OmegaBox, SignField, LinearField, ScaledField


def _contraction(epsilon: float = 0.5) -> ScaledField:
    """Returns the scaled field of F(x) = -x on two components."""
    return ScaledField(base=LinearField(matrix=-np.eye(2)), box=OmegaBox(epsilon=epsilon, n_blocks=2))


def _scalar_run(seed: int, n_steps: int, family: UpdateFamily | None = None, exponent: float = 1.0) -> TrajectoryLog:
    """Runs F(x) = -x with unit Gaussian noise and returns the log."""
    members = UpdateFamily.full(n_components=1) if family is None else family
    streams = ReplicateStreams.from_seed(seed=seed)
    kernel = StaticKernel(np.full((members.size, members.size), 1.0 / members.size))
    state = EngineState.initial(x0=np.ones(members.n_components))
    run_engine(
        state=state,
        field=LinearField(matrix=-np.eye(members.n_components)),
        schedule=Schedule(exponent=exponent),
        scheduler=UpdateScheduler(kernel=kernel, family=members, initial_subset=0, rng=streams.scheduler),
        noise=NoiseModel(kind=NoiseKinds.GAUSSIAN, scale=1.0),
        bias=BiasModel(),
        streams=streams,
        n_steps=n_steps,
    )
    return state.log


@pytest.mark.parametrize(("dt", "horizon"), [(0.2, 1.0), (0.0, 1.0), (0.1, 1.05), (0.01, -1.0)])
def test_flow_sampler_rejects_invalid_grids(dt: float, horizon: float) -> None:
    """Verifies the time-step bound and the horizon grid check."""
    with pytest.raises(ValueError):
        FlowSampler(field=_contraction(), dt=dt, horizon=horizon)


def test_fixed_diagonal_paths_follow_the_scaled_linear_flow() -> None:
    """Verifies the Euler paths of ẋ = -ωx for the identity and the all-ε diagonals."""
    sampler = FlowSampler(field=_contraction(), dt=0.01, horizon=1.0)
    assert sampler.n_steps == 100
    bundle = euler_flow(sampler=sampler, x0=[1.0, -2.0], n_selections=6, rng=np.random.default_rng(0))
    assert bundle.size == 6
    np.testing.assert_allclose(bundle.times[-1], 1.0)
    np.testing.assert_allclose(bundle.omegas[0], [1.0, 1.0])
    np.testing.assert_allclose(bundle.omegas[1], [0.5, 0.5])
    np.testing.assert_allclose(bundle.terminal[0], 0.99**100 * np.array([1.0, -2.0]), rtol=1e-12)
    np.testing.assert_allclose(bundle.terminal[1], 0.995**100 * np.array([1.0, -2.0]), rtol=1e-12)
    np.testing.assert_allclose(bundle.terminal[0], np.exp(-1.0) * np.array([1.0, -2.0]), atol=5e-3)
    assert not np.any(bundle.blow_up)


@pytest.mark.parametrize("policy", [SelectionPolicies.RANDOM_OMEGA, SelectionPolicies.CORNER_SWEEP])
def test_varying_diagonal_policies_contract(policy: SelectionPolicies) -> None:
    """Verifies that every path of the contracting inclusion shrinks and carries no fixed diagonal."""
    sampler = FlowSampler(field=_contraction(), dt=0.05, horizon=2.0, policy=policy)
    bundle = euler_flow(sampler=sampler, x0=[1.0, 1.0], n_selections=5, rng=np.random.default_rng(3))
    assert np.all(np.isnan(bundle.omegas))
    norms = np.linalg.norm(bundle.paths, axis=2)
    assert np.all(np.diff(norms, axis=1) < 0.0)


def test_kink_selections_stay_inside_the_hull() -> None:
    """Verifies that bundles of the sign inclusion never leave the band around the kink."""
    field = ScaledField(base=SignField(dimension=1), box=OmegaBox(epsilon=0.5, n_blocks=1))
    sampler = FlowSampler(field=field, dt=0.01, horizon=2.0, policy=SelectionPolicies.RANDOM_OMEGA)
    bundle = euler_flow(sampler=sampler, x0=[0.3], n_selections=4, rng=np.random.default_rng(1))
    assert np.all(np.abs(bundle.terminal) <= 0.01 + 1e-12)


def test_diverging_paths_are_aborted() -> None:
    """Verifies that paths beyond the growth envelope are flagged and NaN-filled."""
    field = ScaledField(base=LinearField(matrix=[[1.0]]), box=OmegaBox(epsilon=0.5, n_blocks=1))
    sampler = FlowSampler(field=field, dt=0.01, horizon=10.0)
    bundle = euler_flow(sampler=sampler, x0=[1.0], n_selections=2, rng=np.random.default_rng(0))
    assert np.all(bundle.blow_up)
    assert np.all(np.isnan(bundle.terminal))
    with pytest.raises(ValueError):
        euler_flow(sampler=sampler, x0=[1.0], n_selections=0, rng=np.random.default_rng(0))


def test_exact_flow_logs_shadow_their_own_flow(tmp_path: Path) -> None:
    """Verifies that a log sampled from the exact flow of ẋ = -x has vanishing pseudo-trajectory distances."""
    times = np.linspace(0.0, 10.0, 1_001)
    log = TrajectoryLog.from_knots(tau_bar=times, x=np.outer(np.exp(-times), [1.0, -1.0]))
    sampler = FlowSampler(field=_contraction(), dt=0.01, horizon=2.0)
    report = apt_distance(log=log, sampler=sampler, probe_times=[0.0, 3.0, 6.0], rng=np.random.default_rng(0))
    assert report.bundle_size == 8
    assert report.blow_ups == [0, 0, 0]
    assert max(report.distances) <= 1e-2
    assert report.non_increasing

    path = tmp_path / "apt.csv"
    write_apt_csv(report=report, path=path)
    assert pl.read_csv(path)["probe_time"].to_list() == [0.0, 3.0, 6.0]
    with pytest.raises(ValueError):
        apt_distance(log=log, sampler=sampler, probe_times=[9.0], rng=np.random.default_rng(0))


def test_flow_diagnostics_are_reproducible_from_their_stream() -> None:
    """Verifies that equal flow streams give equal distances and that the stream cannot be omitted."""
    times = np.linspace(0.0, 10.0, 1_001)
    log = TrajectoryLog.from_knots(tau_bar=times, x=np.outer(np.exp(-times), [1.0, 0.0]))
    field = ScaledField(base=SignField(dimension=2), box=OmegaBox(epsilon=0.5, n_blocks=2))
    sampler = FlowSampler(field=field, dt=0.01, horizon=2.0)
    first = apt_distance(log=log, sampler=sampler, probe_times=[1.0, 4.0], rng=np.random.default_rng(3))
    second = apt_distance(log=log, sampler=sampler, probe_times=[1.0, 4.0], rng=np.random.default_rng(3))
    assert first.distances == second.distances
    with pytest.raises(TypeError):
        apt_distance(log=log, sampler=sampler, probe_times=[1.0])  # type: ignore[call-arg]

    candidate = LyapunovCandidate(function=lambda x: 0.5 * float(x @ x), target=lambda x: False)
    with pytest.raises(TypeError):
        lyapunov_check(candidate=candidate, sampler=sampler, probes=[np.ones(2)])  # type: ignore[call-arg]


def test_asynchronous_iterates_are_pseudo_trajectories() -> None:
    """Verifies that alternating singleton updates of F(x) = -x/2 shadow the ε-scaled flow ever more closely."""
    family = UpdateFamily.singletons(n_components=2)
    streams = ReplicateStreams.from_seed(seed=0)
    state = EngineState.initial(x0=[1.0, -1.0])
    run_engine(
        state=state,
        field=LinearField(matrix=-0.5 * np.eye(2)),
        schedule=Schedule(exponent=0.7),
        scheduler=UpdateScheduler(
            kernel=StaticKernel([[0.0, 1.0], [1.0, 0.0]]), family=family, initial_subset=0, rng=streams.scheduler
        ),
        noise=NoiseModel(),
        bias=BiasModel(),
        streams=streams,
        n_steps=20_000,
    )
    assert state.tau_bar > 30.0
    field = ScaledField(base=LinearField(matrix=-0.5 * np.eye(2)), box=OmegaBox(epsilon=0.5, n_blocks=2))
    sampler = FlowSampler(field=field, dt=0.01, horizon=5.0)
    report = apt_distance(log=state.log, sampler=sampler, probe_times=[4.0, 12.0, 24.0], rng=streams.flow)
    assert report.non_increasing
    assert report.distances[-1] <= 0.1 * report.distances[0]
    assert report.to_dict()["window"] == 5.0


def test_kushner_clark_supremum_shrinks_along_the_run() -> None:
    """Verifies that the windowed noise supremum is smaller late in the run than early in the run."""
    log = _scalar_run(seed=0, n_steps=30_000)
    early, late = kushner_clark_profile(log=log, window=1.0, starts=[100, 10_000])
    assert late.noise_sup < early.noise_sup
    assert late.end > late.start
    assert early.averaging_sup == 0.0
    assert not early.averaging_flagged


def test_averaging_term_flags_a_mis_chosen_floor() -> None:
    """Verifies that a floor above the idle relative steps produces a non-vanishing averaging supremum."""
    log = _scalar_run(seed=0, n_steps=5_000, family=UpdateFamily.singletons(n_components=2))
    report = kushner_clark_sup(log=log, window=1.0, start=0, epsilon=0.5)
    assert report.averaging_flagged
    assert report.to_dict()["epsilon"] == 0.5


def test_kushner_clark_requires_noise_and_a_valid_start() -> None:
    """Verifies that knot-only logs and out-of-range starts are rejected."""
    knots = TrajectoryLog.from_knots(tau_bar=np.array([0.0, 1.0, 2.0]), x=np.zeros((3, 1)))
    with pytest.raises(ValueError):
        kushner_clark_sup(log=knots, window=1.0, start=0)
    log = _scalar_run(seed=0, n_steps=10)
    with pytest.raises(ValueError):
        kushner_clark_sup(log=log, window=1.0, start=10)


def test_relative_step_integrals_are_exact() -> None:
    """Verifies the integrals of the piecewise-constant relative step sizes on a hand-built log."""
    log = TrajectoryLog.from_knots(
        tau_bar=np.array([0.0, 1.0, 2.0, 3.0]),
        x=np.zeros((4, 2)),
        mu=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
    )
    np.testing.assert_allclose(relative_step_integrals(log=log, t=0.5, length=2.0), [1.0, 1.5])
    assert relative_step_integral(log=log, component=1, t=0.0, length=3.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        relative_step_integral(log=log, component=2, t=0.0, length=1.0)
    with pytest.raises(ValueError):
        relative_step_integrals(log=log, t=2.5, length=1.0)


def test_relative_step_floor_check() -> None:
    """Verifies the v·ε̂/2 comparison and the flagging of components that are never updated."""
    steps = np.tile([1.0, 0.0], (10, 1))
    log = TrajectoryLog.from_knots(tau_bar=np.arange(11, dtype=np.float64), x=np.zeros((11, 2)), mu=steps)
    report = relative_step_floor_check(log=log, length=2.0, epsilon_hat=0.2, window_starts=[0.0, 4.0, 8.0])
    assert report.threshold == pytest.approx(0.2)
    assert not report.passed
    assert report.flagged_components == [1]

    balanced = _scalar_run(seed=1, n_steps=20_000, family=UpdateFamily.singletons(n_components=2))
    check = relative_step_floor_check(log=balanced, length=1.0, epsilon_hat=1.0 / 6.0, window_starts=[10.0, 12.0, 14.0])
    assert check.passed
    assert check.to_dict()["flagged_components"] == []


def test_quadratic_lyapunov_function_certifies_the_contraction() -> None:
    """Verifies the inner-product and flow-decrease checks of W(x) = ‖x‖²/2 for F(x) = -x."""
    candidate = LyapunovCandidate(
        function=lambda x: 0.5 * float(x @ x),
        target=lambda x: float(np.linalg.norm(x)) < 1e-6,
        gradient=lambda x: x,
    )
    sampler = FlowSampler(field=_contraction(), dt=0.05, horizon=1.0)
    rng = np.random.default_rng(0)
    probes = [rng.uniform(-2.0, 2.0, size=2) for _ in range(200)] + [np.zeros(2)]
    report = lyapunov_check(candidate=candidate, sampler=sampler, probes=probes, rng=rng, flow_selections=4)
    assert report.passed
    assert report.skipped == 1
    assert report.flow_paths == 800
    assert report.max_inner_product < 0.0
    assert gradient_cross_check(candidate=candidate, probes=probes[:10]) <= 1e-6


def test_expanding_field_fails_the_lyapunov_check() -> None:
    """Verifies that F(x) = x increases the quadratic function at every probe."""
    candidate = LyapunovCandidate(function=lambda x: 0.5 * float(x @ x), target=lambda x: False)
    field = ScaledField(base=LinearField(matrix=np.eye(2)), box=OmegaBox(epsilon=0.5, n_blocks=2))
    probes = [np.array([1.0, 0.0]), np.array([0.5, -0.5])]
    sampler = FlowSampler(field=field, dt=0.01, horizon=1.0)
    report = lyapunov_check(candidate=candidate, sampler=sampler, probes=probes, rng=np.random.default_rng(0))
    assert not report.passed
    assert report.failed_probes == 2
    assert report.to_dict()["flow_paths"] == 0


def test_gradient_fallbacks() -> None:
    """Verifies the central-difference gradient and the rejection of non-differentiable functions."""
    np.testing.assert_allclose(
        central_difference(function=lambda x: float(np.sum(x**3)), x=np.array([1.0, 2.0])), [3.0, 12.0], rtol=1e-6
    )
    kinked = LyapunovCandidate(
        function=lambda x: float(np.sum(np.abs(x))), target=lambda x: False, differentiable=False
    )
    with pytest.raises(ValueError):
        kinked.evaluate_gradient(np.ones(2))
    with pytest.raises(ValueError):
        gradient_cross_check(candidate=kinked, probes=[np.ones(2)])


@pytest.mark.slow
def test_kushner_clark_supremum_vanishes_across_seeds() -> None:
    """Verifies that the noise supremum at n = 1e5 lies below the one at n = 1e3 in at least 90% of 50 seeds."""
    successes = 0
    for seed in range(50):
        log = _scalar_run(seed=seed, n_steps=300_000)
        early, late = kushner_clark_profile(log=log, window=1.0, starts=[1_000, 100_000])
        successes += int(late.noise_sup < early.noise_sup)
    assert successes >= 45
