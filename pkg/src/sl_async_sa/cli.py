"""Provides the Command-Line Interface (CLI) for running asynchronous stochastic approximation experiments."""

import json
from pathlib import Path

import click
import numpy as np
from ataraxis_base_utilities import LogLevel, console

from .mdp import Policy, q_values, value_function, value_iteration
from .audit import audit as audit_assumptions
from .pipeline import run_experiment
from .configuration import ExperimentConfig, validate_configuration

# Ensures that displayed CLICK help messages are formatted according to the lab standard.
CONTEXT_SETTINGS = {"max_content_width": 120}

_CONFIG_PATH = click.Path(exists=True, file_okay=True, dir_okay=False, path_type=Path)
"""The click type of every --config option."""


def _load_configuration(config_path: Path) -> ExperimentConfig:
    """Loads the experiment configuration stored at the target path."""
    return ExperimentConfig.from_yaml(file_path=config_path)


@click.group("sl-async-sa", context_settings=CONTEXT_SETTINGS)
def cli() -> None:
    """Command-line tools for asynchronous stochastic approximation experiments."""


@cli.command("run")
@click.option(
    "-c",
    "--config",
    "config_path",
    type=_CONFIG_PATH,
    required=True,
    help="The path to the experiment configuration .yaml file.",
)
@click.option(
    "-s",
    "--seed",
    "seeds",
    type=int,
    multiple=True,
    help="The replicate seed. Repeat the option to run several seeds. Overrides the configured seed list.",
)
@click.option(
    "-o",
    "--out",
    "output_directory",
    type=click.Path(file_okay=False, dir_okay=True, path_type=Path),
    default=None,
    help="The directory that receives the experiment data. Overrides the configured output directory.",
)
@click.option(
    "-t",
    "--threads",
    type=int,
    default=1,
    show_default=True,
    help="The number of worker processes. Set to -1 to use all available CPU cores.",
)
def run(config_path: Path, seeds: tuple[int, ...], output_directory: Path | None, threads: int) -> None:
    """Runs every replicate of the configured experiment.

    Each replicate writes its trajectory, diagnostics and metadata files into its own seed_<seed> directory. The
    summary.json file aggregates the replicate statistics. Exits with status 2 when the configuration is invalid and
    with status 1 when every replicate fails.
    """
    config = _load_configuration(config_path=config_path)
    status = run_experiment(config=config, seeds=list(seeds), output_directory=output_directory, threads=threads)
    if status != 0:
        raise SystemExit(status)


@cli.command("audit")
@click.option(
    "-c",
    "--config",
    "config_path",
    type=_CONFIG_PATH,
    required=True,
    help="The path to the experiment configuration .yaml file.",
)
@click.option(
    "-o",
    "--out",
    "output_directory",
    type=click.Path(file_okay=False, dir_okay=True, path_type=Path),
    default=None,
    help="The directory that receives the audit.json report. If not provided, the report is only printed.",
)
def audit(config_path: Path, output_directory: Path | None) -> None:
    """Audits the convergence assumptions of the configured experiment.

    Reports each assumption as verified, empirically-supported, unverifiable or violated, together with the evidence
    behind the status. Exits with a non-zero status when any assumption is violated.
    """
    config = _load_configuration(config_path=config_path)
    messages = validate_configuration(config)
    if messages:
        for message in messages:
            console.echo(message=f"Invalid configuration: {message}", level=LogLevel.ERROR)
        raise SystemExit(2)

    report = audit_assumptions(config=config)
    for check in report.checks:
        evidence = json.dumps(check.evidence, sort_keys=True, default=str)
        console.echo(message=f"{check.tag}: {check.status}. Evidence: {evidence}")

    if output_directory is not None:
        output_directory.mkdir(parents=True, exist_ok=True)
        with output_directory.joinpath("audit.json").open("w") as file:
            json.dump(report.to_dict(), file, indent=2, sort_keys=True)

    if not report.passed:
        tags = ", ".join(check.tag for check in report.violations)
        console.echo(message=f"Violated assumptions: {tags}.", level=LogLevel.ERROR)
        raise SystemExit(1)


@cli.command("oracle")
@click.option(
    "-c",
    "--config",
    "config_path",
    type=_CONFIG_PATH,
    required=True,
    help="The path to the experiment configuration .yaml file. Only the mdp section is used.",
)
@click.option(
    "-p",
    "--policy",
    "policy_path",
    type=_CONFIG_PATH,
    default=None,
    help='The path to a .json file of the form {"policy": [[...], ...]}. Defaults to the uniform policy.',
)
def oracle(config_path: Path, policy_path: Path | None) -> None:
    """Prints the exact optimal values V* and the exact policy values V^π and Q^π of the configured MDP model."""
    config = _load_configuration(config_path=config_path)
    model = config.mdp.build_model()

    if policy_path is None:
        policy = Policy.uniform(n_states=model.n_states, n_actions=model.n_actions)
    else:
        with policy_path.open() as file:
            stored = json.load(file)
        policy = Policy(pi=np.asarray(stored["policy"], dtype=np.float64))
        if policy.pi.shape != (model.n_states, model.n_actions):
            message = (
                f"Unable to evaluate the policy stored in {policy_path}. Expected a {model.n_states} x "
                f"{model.n_actions} table, but got shape {policy.pi.shape}."
            )
            console.error(message=message, error=ValueError)

    solution = value_iteration(model=model, tolerance=config.mdp.value_tolerance)
    values = value_function(model=model, policy=policy)
    table = q_values(model=model, policy=policy)

    payload = {
        "optimal_values": solution.values.tolist(),
        "optimal_actions": [list(actions) for actions in solution.optimal_actions],
        "policy_values": values.tolist(),
        "policy_q": table.q.tolist(),
        "iterations": solution.iterations,
        "residual": solution.residual,
    }
    click.echo(json.dumps(payload, indent=2))
