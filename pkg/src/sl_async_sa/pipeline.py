"""Provides the experiment runner: per-seed replicates fanned out across worker processes, each writing its own
trajectory, diagnostics and metadata files, followed by a single-writer summary of the replicate statistics.
"""

import json
from enum import StrEnum
from typing import Any
from pathlib import Path
from datetime import UTC, datetime
from concurrent.futures import ProcessPoolExecutor, as_completed

import numpy as np
from tqdm import tqdm
import polars as pl
from ataraxis_base_utilities import LogLevel, console

from .mdp import (
    strategy_box,
    strategy_field,
    value_iteration,
    run_actor_critic,
    actor_critic_report,
)
from .audit import audit
from .errors import AssumptionViolationError
from .streams import ReplicateStreams
from .inclusion import (
    FlowSampler,
    euler_flow,
    apt_distance,
    write_apt_csv,
    kushner_clark_profile,
    relative_step_floor_check,
)
from .sa_engine import (
    EngineState,
    TrajectoryLog,
    run_engine,
    estimate_epsilon,
    write_run_metadata,
    write_trajectory_csv,
    decomposition_residual,
)
from .scheduler import UpdateScheduler, occupancy
from .mean_field import OmegaBox, LinearField, ScaledField
from .configuration import ExperimentKinds, ExperimentConfig, configuration_hash, validate_configuration
from .two_timescale import (
    JointFamily,
    CoupledState,
    run_coupled,
    ratio_trend,
    tracking_error,
    linear_fast_limit,
    write_coupled_csv,
    windowed_tracking_error,
)

_RELATIVE_STEP_WINDOWS: int = 5
"""The number of windows of the relative step floor check."""
_RATIO_PROBE: int = 100_000
"""The iteration at which the step-size ratio of mdp-learn runs is reported."""


class ReplicateStatuses(StrEnum):
    """Defines the terminal status of one replicate."""

    COMPLETED = "completed"
    """The replicate ran to the horizon and produced all diagnostics."""
    VIOLATED = "violated"
    """The replicate stopped on a violated convergence assumption."""
    FAILED = "failed"
    """The replicate stopped on an unexpected error."""


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    """Writes a JSON file with sorted keys and two-space indentation."""
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def _probe_times(log: TrajectoryLog, probes: list[float], window: float) -> list[float]:
    """Returns the probe times whose windows fit inside the logged interpolated time."""
    end = float(log.tau_bar[-1])
    return [float(t) for t in probes if t + window <= end]


def _simulate_single(config: ExperimentConfig, streams: ReplicateStreams) -> tuple[EngineState, dict[str, Any]]:
    """Runs the single-timescale engine and evaluates its trajectory diagnostics."""
    x0 = np.asarray(config.initial_state, dtype=np.float64)
    family = config.kernel.build_family(n_components=x0.size)
    kernel = config.kernel.build_kernel(family=family)
    schedule = config.schedule.build()
    scheduler = UpdateScheduler(
        kernel=kernel, family=family, initial_subset=config.kernel.initial_subset, rng=streams.scheduler
    )
    state = run_engine(
        state=EngineState.initial(x0=x0, initial_subset=config.kernel.initial_subset),
        field=config.mean_field.build(),
        schedule=schedule,
        scheduler=scheduler,
        noise=config.noise.build(),
        bias=config.bias.build(),
        streams=streams,
        n_steps=config.horizon,
        tie_policy=config.ties,
        box=config.box.build(),
        compiled=None if config.compiled else False,
    )
    log = state.log
    estimate = estimate_epsilon(
        kernel=kernel, family=family, schedule=schedule, x_grid=[x0, state.x], n_max=min(config.horizon, 100_000)
    )
    metrics: dict[str, Any] = {
        "terminal_norm": float(np.linalg.norm(state.x)),
        "terminal_tau_bar": float(log.tau_bar[-1]),
        "decomposition_residual": decomposition_residual(log),
        "min_update_fraction": float(np.min(occupancy(subset_sequence=log.subsets, family=family).nu_fraction)),
        "epsilon_hat": estimate.epsilon,
    }
    checks: dict[str, bool] = {"decomposition": metrics["decomposition_residual"] <= 1e-9}

    diagnostics = config.diagnostics
    starts = [start for start in diagnostics.noise_starts if start < log.length]
    if starts and log.noise_logged:
        profile = kushner_clark_profile(
            log=log, window=diagnostics.noise_window, starts=starts, epsilon=estimate.epsilon
        )
        for report in profile:
            metrics[f"noise_sup_{report.start}"] = report.noise_sup
            metrics[f"averaging_sup_{report.start}"] = report.averaging_sup
        if len(profile) > 1:
            checks["kushner_clark_decay"] = profile[-1].noise_sup < profile[0].noise_sup

    span = float(log.tau_bar[-1]) - diagnostics.relative_step_window
    if span > 0.0:
        floor = relative_step_floor_check(
            log=log,
            length=diagnostics.relative_step_window,
            epsilon_hat=estimate.epsilon,
            window_starts=list(np.linspace(span / _RELATIVE_STEP_WINDOWS, span, _RELATIVE_STEP_WINDOWS)),
        )
        checks["relative_step_floor"] = floor.passed
    return state, {"metrics": metrics, "checks": checks}


def _run_single(config: ExperimentConfig, streams: ReplicateStreams, directory: Path) -> dict[str, Any]:
    """Runs one single-sa replicate."""
    state, diagnostics = _simulate_single(config=config, streams=streams)
    write_trajectory_csv(log=state.log, path=directory.joinpath("trajectory.csv"), thinning=config.diagnostics.thinning)
    return diagnostics


def _run_flow(config: ExperimentConfig, streams: ReplicateStreams, directory: Path) -> dict[str, Any]:
    """Runs one di-flow replicate: the engine trajectory, a flow bundle from x_0 and the pseudo-trajectory distances."""
    state, diagnostics = _simulate_single(config=config, streams=streams)
    x0 = np.asarray(config.initial_state, dtype=np.float64)
    box = OmegaBox(epsilon=config.flow.epsilon, n_blocks=x0.size)
    sampler = FlowSampler(
        field=ScaledField(base=config.mean_field.build(), box=box),
        dt=config.flow.dt,
        horizon=config.flow.horizon,
        policy=config.flow.policy,
        levels=config.flow.levels,
    )
    bundle = euler_flow(sampler=sampler, x0=x0, n_selections=config.flow.selections, rng=streams.flow)
    n_paths, n_times, dimension = bundle.paths.shape
    columns: dict[str, Any] = {
        "path": np.repeat(np.arange(n_paths), n_times),
        "t": np.tile(bundle.times, n_paths),
    }
    flattened = bundle.paths.reshape(n_paths * n_times, dimension)
    columns.update({f"x_{index + 1}": flattened[:, index] for index in range(dimension)})
    pl.DataFrame(columns).write_csv(directory.joinpath("flows.csv"))
    write_trajectory_csv(log=state.log, path=directory.joinpath("trajectory.csv"), thinning=config.diagnostics.thinning)

    diagnostics["metrics"]["flow_blow_ups"] = int(np.sum(bundle.blow_up))
    probes = _probe_times(log=state.log, probes=config.diagnostics.probe_times, window=config.flow.horizon)
    if probes:
        report = apt_distance(
            log=state.log,
            sampler=sampler,
            probe_times=probes,
            n_selections=config.flow.selections,
            rng=streams.flow,
        )
        write_apt_csv(report=report, path=directory.joinpath("apt.csv"))
        diagnostics["metrics"].update({f"apt_distance_{t:g}": d for t, d in zip(probes, report.distances, strict=True)})
        diagnostics["checks"]["apt_non_increasing"] = report.non_increasing
    return diagnostics


def _run_two_timescale(config: ExperimentConfig, streams: ReplicateStreams, directory: Path) -> dict[str, Any]:
    """Runs one two-timescale replicate."""
    x0 = np.asarray(config.initial_state, dtype=np.float64)
    y0 = np.asarray(config.fast_initial_state, dtype=np.float64)
    family = config.kernel.build_family(n_components=x0.size + y0.size)
    joint = JointFamily(family=family, n_slow=x0.size)
    scheduler = UpdateScheduler(
        kernel=config.kernel.build_kernel(family=family),
        family=family,
        initial_subset=config.kernel.initial_subset,
        rng=streams.scheduler,
    )
    fast_field = config.fast_field.build()
    state = run_coupled(
        state=CoupledState.initial(x0=x0, y0=y0, initial_subset=config.kernel.initial_subset),
        slow_field=config.mean_field.build(),
        fast_field=fast_field,
        slow_schedule=config.schedule.build(),
        fast_schedule=config.fast_schedule.build(),
        scheduler=scheduler,
        joint=joint,
        noises=(config.noise.build(), config.fast_noise.build()),
        biases=(config.bias.build(), config.fast_bias.build()),
        streams=streams,
        n_steps=config.horizon,
        tie_policy=config.ties,
        boxes=(config.box.build(), config.fast_box.build()),
    )
    write_coupled_csv(state=state, path=directory.joinpath("trajectory.csv"), thinning=config.diagnostics.thinning)

    trend = ratio_trend(ratios=state.ratios)
    metrics: dict[str, Any] = {f"ratio_{key}": value for key, value in trend.to_dict().items()}
    checks: dict[str, bool] = {"ratio_decreasing": trend.decreasing}
    if isinstance(fast_field, LinearField):
        oracle = linear_fast_limit(
            fast_field=fast_field, n_slow=x0.size, tolerance=config.diagnostics.tracking_tolerance
        )
        windowed = windowed_tracking_error(
            slow_path=state.slow.log.x,
            fast_path=state.fast.log.x,
            oracle=oracle,
            window=config.diagnostics.tracking_window,
        )
        metrics["tracking_error"] = tracking_error(state=state, oracle=oracle)
        metrics["windowed_tracking_error"] = windowed
        checks["tracking"] = windowed <= oracle.tolerance
    return {"metrics": metrics, "checks": checks}


def _run_mdp(config: ExperimentConfig, streams: ReplicateStreams, directory: Path) -> dict[str, Any]:
    """Runs one mdp-learn replicate."""
    model = config.mdp.build_model()
    settings = config.mdp.build_settings(tie_policy=config.ties)
    solution = value_iteration(model=model, tolerance=config.mdp.value_tolerance)
    run = run_actor_critic(
        model=model,
        settings=settings,
        streams=streams,
        n_iterations=config.horizon,
        freeze_policy=config.mdp.freeze_policy,
        compiled=config.compiled,
    )
    report = actor_critic_report(
        run=run,
        model=model,
        settings=settings,
        optimal_values=solution.values,
        checkpoint_every=config.checkpoint_every,
        occupancy_from=config.diagnostics.occupancy_from,
        ratio_probe=min(_RATIO_PROBE, config.horizon),
        tracking_window=config.diagnostics.tracking_window,
    )
    report.checkpoints.write_csv(directory.joinpath("checkpoints.csv"))
    slow_log = run.slow_log()
    write_trajectory_csv(log=slow_log, path=directory.joinpath("trajectory.csv"), thinning=config.diagnostics.thinning)

    summary = report.to_dict()
    metrics: dict[str, Any] = {
        key: value for key, value in summary.items() if isinstance(value, (int, float)) and not isinstance(value, bool)
    }
    metrics["terminal_q"] = run.q_table(run.n_iterations).tolist()
    metrics["optimal_values"] = solution.values.tolist()
    checks: dict[str, bool] = {
        "occupancy": report.occupancy_passed,
        "ratio_decreasing": report.ratio.decreasing,
    }
    if config.mdp.freeze_policy:
        checks["tracking"] = report.windowed_tracking_error <= config.diagnostics.tracking_tolerance
    else:
        checks["value_gap"] = report.terminal_value_gap <= config.diagnostics.value_gap_tolerance

    probes = _probe_times(log=slow_log, probes=config.diagnostics.probe_times, window=config.flow.horizon)
    if probes and not config.mdp.freeze_policy:
        sampler = FlowSampler(
            field=ScaledField(base=strategy_field(model), box=strategy_box(model=model, epsilon=config.flow.epsilon)),
            dt=config.flow.dt,
            horizon=config.flow.horizon,
            policy=config.flow.policy,
            levels=config.flow.levels,
        )
        apt = apt_distance(
            log=slow_log, sampler=sampler, probe_times=probes, n_selections=config.flow.selections, rng=streams.flow
        )
        write_apt_csv(report=apt, path=directory.joinpath("apt.csv"))
        metrics.update({f"apt_distance_{t:g}": d for t, d in zip(probes, apt.distances, strict=True)})
        checks["apt_non_increasing"] = apt.non_increasing
    return {"metrics": metrics, "checks": checks}


def run_replicate(config: ExperimentConfig, seed: int, output_directory: Path) -> dict[str, Any]:
    """Runs one replicate of the configured experiment and writes its files into the 'seed_<seed>' folder.

    Args:
        config: The validated experiment configuration.
        seed: The replicate's root seed.
        output_directory: The experiment's output directory.

    Returns:
        The replicate record: seed, status and, for completed replicates, the metrics and checks.
    """
    directory = output_directory.joinpath(f"seed_{seed}")
    directory.mkdir(parents=True, exist_ok=True)
    kind = config.experiment_kind
    write_run_metadata(
        path=directory.joinpath("metadata.json"),
        seed=seed,
        config_hash=configuration_hash(config),
        kind=str(kind),
        extra={"horizon": config.horizon},
    )
    streams = ReplicateStreams.from_seed(seed=seed)
    runners = {
        ExperimentKinds.SINGLE_SA: _run_single,
        ExperimentKinds.DI_FLOW: _run_flow,
        ExperimentKinds.TWO_TIMESCALE: _run_two_timescale,
        ExperimentKinds.MDP_LEARN: _run_mdp,
    }

    record: dict[str, Any] = {"seed": int(seed)}
    try:
        record.update(runners[kind](config, streams, directory))
        record["status"] = str(ReplicateStatuses.COMPLETED)
    except AssumptionViolationError as error:
        record["status"] = str(ReplicateStatuses.VIOLATED)
        record["message"] = str(error)
        console.echo(message=f"Replicate {seed} stopped on a violated assumption: {error}", level=LogLevel.WARNING)
    except Exception as error:
        record["status"] = str(ReplicateStatuses.FAILED)
        record["message"] = f"{type(error).__name__}: {error}"
        console.echo(message=f"Replicate {seed} failed: {record['message']}", level=LogLevel.ERROR)
    _write_json(path=directory.joinpath("diagnostics.json"), payload=record)
    return record


def summarize(records: list[dict[str, Any]], config: ExperimentConfig) -> dict[str, Any]:
    """Aggregates replicate records into medians of the scalar metrics and pass counts of the checks."""
    ordered = sorted(records, key=lambda record: record["seed"])
    completed = [record for record in ordered if record["status"] == ReplicateStatuses.COMPLETED]

    metric_names = sorted({name for record in completed for name in record.get("metrics", {})})
    medians: dict[str, Any] = {}
    for name in metric_names:
        values = [record["metrics"][name] for record in completed if name in record["metrics"]]
        array = np.asarray(values, dtype=np.float64)
        medians[name] = np.median(array, axis=0).tolist()

    check_names = sorted({name for record in completed for name in record.get("checks", {})})
    checks = {
        name: {
            "passed": sum(bool(record["checks"].get(name, False)) for record in completed),
            "total": sum(name in record["checks"] for record in completed),
        }
        for name in check_names
    }
    return {
        "kind": str(config.experiment_kind),
        "configuration_hash": configuration_hash(config),
        "seeds": [record["seed"] for record in ordered],
        "completed": len(completed),
        "medians": medians,
        "checks": checks,
        "failures": [
            {"seed": record["seed"], "status": record["status"], "message": record.get("message", "")}
            for record in ordered
            if record["status"] != ReplicateStatuses.COMPLETED
        ],
        "created": datetime.now(tz=UTC).isoformat(),
    }


def run_experiment(
    config: ExperimentConfig,
    seeds: list[int] | None = None,
    output_directory: Path | None = None,
    threads: int = 1,
) -> int:
    """Runs every replicate of the configured experiment and writes the summary.

    Args:
        config: The experiment configuration.
        seeds: The seeds that override the configured seed list.
        output_directory: The directory that overrides the configured output directory.
        threads: The number of worker processes. Setting this to a value less than 1 uses all available CPU cores.
            Setting this to 1 runs the replicates sequentially.

    Returns:
        The process exit status: 0 when at least one replicate completed (or the audit found no violation), 1 when
        every replicate failed (or the audit found a violation), and 2 when the configuration is invalid.
    """
    if seeds:
        config.seeds = list(seeds)
    if output_directory is not None:
        config.output_directory = str(output_directory)

    messages = validate_configuration(config)
    if messages:
        for message in messages:
            console.echo(message=f"Invalid configuration: {message}", level=LogLevel.ERROR)
        return 2

    directory = Path(config.output_directory)
    directory.mkdir(parents=True, exist_ok=True)

    if config.experiment_kind == ExperimentKinds.AUDIT:
        report = audit(config=config)
        _write_json(path=directory.joinpath("audit.json"), payload=report.to_dict())
        return 0 if report.passed else 1

    config.to_yaml(file_path=directory.joinpath("configuration.yaml"))
    console.echo(message=f"Running {len(config.seeds)} {config.experiment_kind} replicate(s)...")

    records: list[dict[str, Any]] = []
    if threads == 1 or len(config.seeds) == 1:
        for seed in tqdm(config.seeds, desc="Running replicates", unit="replicate"):
            records.append(run_replicate(config=config, seed=seed, output_directory=directory))
    else:
        n_workers = threads if threads > 0 else None  # None uses all available cores
        with ProcessPoolExecutor(max_workers=n_workers) as executor:
            futures = [executor.submit(run_replicate, config, seed, directory) for seed in config.seeds]
            with tqdm(total=len(futures), desc="Running replicates", unit="replicate") as pbar:
                for future in as_completed(futures):
                    try:
                        records.append(future.result())
                    except Exception:
                        pbar.close()  # Closes progress bar before raising error
                        raise
                    pbar.update(1)

    summary = summarize(records=records, config=config)
    _write_json(path=directory.joinpath("summary.json"), payload=summary)
    if summary["completed"] == 0:
        console.echo(message="Every replicate failed. See summary.json for the recorded causes.", level=LogLevel.ERROR)
        return 1
    console.echo(message=f"Completed {summary['completed']} of {len(records)} replicate(s).", level=LogLevel.SUCCESS)
    return 0
