"""Contains tests for the experiment configuration, its validation and its builders."""

from pathlib import Path

import numpy as np
import pytest

from sl_async_sa.stepsize import ScheduleFamilies
from sl_async_sa.sa_engine import NoiseKinds
from sl_async_sa.scheduler import StaticKernel
from sl_async_sa.mdp import MdpModel
from sl_async_sa.mean_field import SignField, LinearField, TiePolicies, ProjectionField
from sl_async_sa.configuration import (
    BoxConfig,
    MdpConfig,
    FieldConfig,
    NoiseConfig,
    KernelConfig,
    ScheduleConfig,
    ExperimentKinds,
    ExperimentConfig,
    DiagnosticsConfig,
    configuration_hash,
    validate_configuration,
)


def _single(**overrides: object) -> ExperimentConfig:
    """Returns a valid two-component single-sa configuration with the input fields replaced."""
    config = ExperimentConfig(
        kind=ExperimentKinds.SINGLE_SA.value,
        initial_state=[1.0, -1.0],
        mean_field=FieldConfig(matrix=[[-1.0, 0.0], [0.0, -1.0]]),
    )
    for name, value in overrides.items():
        setattr(config, name, value)
    return config


def _coupled(**overrides: object) -> ExperimentConfig:
    """Returns a valid two-timescale configuration with the input fields replaced."""
    config = ExperimentConfig(
        kind=ExperimentKinds.TWO_TIMESCALE.value,
        initial_state=[1.0, -0.5],
        fast_initial_state=[0.0, 0.0],
        schedule=ScheduleConfig(exponent=1.0),
        fast_schedule=ScheduleConfig(exponent=0.6),
        mean_field=FieldConfig(matrix=[[-2.0, 0.0, 1.0, 0.0], [0.0, -2.0, 0.0, 1.0]]),
        fast_field=FieldConfig(matrix=[[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]]),
        kernel=KernelConfig(subsets=[[0, 2], [1, 3], [0, 1, 2, 3]]),
    )
    for name, value in overrides.items():
        setattr(config, name, value)
    return config


def test_valid_configurations_have_no_messages() -> None:
    """Verifies that the reference single-sa, two-timescale and mdp-learn configurations validate."""
    assert validate_configuration(_single()) == []
    assert validate_configuration(_coupled()) == []
    assert validate_configuration(ExperimentConfig(kind=ExperimentKinds.MDP_LEARN.value)) == []


def test_yaml_round_trip(tmp_path: Path) -> None:
    """Verifies that a configuration written to YAML loads back equal and with the same hash."""
    config = _coupled(seeds=[3, 5], horizon=2_500)
    config.mdp = MdpConfig(states=4, epsilon=0.1)
    path = tmp_path / "experiment.yaml"
    config.to_yaml(file_path=path)
    loaded = ExperimentConfig.from_yaml(file_path=path)
    assert loaded == config
    assert configuration_hash(loaded) == configuration_hash(config)


def test_configuration_hash_tracks_the_computation() -> None:
    """Verifies that equal configurations share a hash, that computational changes alter it and that the output
    directory and seed list do not.
    """
    assert configuration_hash(_single()) == configuration_hash(_single())
    assert configuration_hash(_single()) != configuration_hash(_single(horizon=123))
    assert configuration_hash(_single()) == configuration_hash(_single(output_directory="elsewhere/runs"))
    assert configuration_hash(_single()) == configuration_hash(_single(seeds=[1, 7]))
    assert len(configuration_hash(_single())) == 64


@pytest.mark.parametrize(
    ("config", "fragment"),
    [
        (_single(kind="sde"), "kind: 'sde'"),
        (_single(tie_policy="first"), "tie_policy"),
        (_single(seeds=[]), "seeds: at least one seed"),
        (_single(seeds=[-1]), "seeds: -1"),
        (_single(horizon=0), "horizon"),
        (_single(mean_field=FieldConfig(matrix=[[-1.0, 0.0]])), "mean_field.matrix: expected shape (2, 2)"),
        (_single(mean_field=FieldConfig()), "mean_field.matrix: linear fields require a matrix"),
        (_single(mean_field=FieldConfig(kind="sign", dimension=3)), "mean_field.dimension"),
        (_single(kernel=KernelConfig(matrix=[[0.5, 0.4], [0.5, 0.5]])), "kernel"),
        (_single(kernel=KernelConfig(initial_subset=2)), "kernel.initial_subset"),
        (_single(box=BoxConfig(lower=[-0.5, -0.5], upper=[0.5, 0.5])), "box: the box does not contain"),
        (_single(box=BoxConfig(lower=[-2.0, -2.0])), "box: both corners"),
        (_single(schedule=ScheduleConfig(exponent=0.4)), "schedule"),
        (_single(diagnostics=DiagnosticsConfig(tracking_window=0.0)), "diagnostics.tracking_window"),
        (_coupled(fast_schedule=ScheduleConfig(exponent=1.0), schedule=ScheduleConfig(exponent=0.6)), "(B2)(c)"),
        (_coupled(kernel=KernelConfig(subsets=[[0], [1, 3], [0, 1, 2, 3]])), "kernel.subsets"),
        (_coupled(kernel=KernelConfig()), "kernel.subsets"),
        (_coupled(fast_initial_state=None), "fast_initial_state"),
    ],
)
def test_validation_messages(config: ExperimentConfig, fragment: str) -> None:
    """Verifies that each invalid field produces a message naming it."""
    messages = validate_configuration(config)
    assert messages
    assert any(fragment in message for message in messages)


def test_mdp_validation_messages() -> None:
    """Verifies the exploration floor and discount checks of random models."""
    config = ExperimentConfig(kind=ExperimentKinds.MDP_LEARN.value)
    config.mdp = MdpConfig(epsilon=0.6, beta=1.0)
    messages = validate_configuration(config)
    assert any(message.startswith("mdp.epsilon") for message in messages)
    assert any(message.startswith("mdp.beta") for message in messages)


def test_section_builders() -> None:
    """Verifies that every section builds the matching library object."""
    schedule = ScheduleConfig(family="power-log", exponent=1.0, log_exponent=1.0).build()
    assert schedule.family == ScheduleFamilies.POWER_LOG
    assert isinstance(FieldConfig(matrix=[[-1.0]]).build(), LinearField)
    assert isinstance(FieldConfig(kind="sign", dimension=2).build(), SignField)
    projected = FieldConfig(kind="projected-linear", matrix=[[-1.0]], lower=[-1.0], upper=[1.0])
    assert isinstance(projected.build(), ProjectionField)
    assert projected.output_dimension == 1

    family = KernelConfig().build_family(n_components=3)
    kernel = KernelConfig().build_kernel(family=family)
    assert isinstance(kernel, StaticKernel)
    np.testing.assert_allclose(kernel.matrix, np.full((3, 3), 1.0 / 3.0))

    assert BoxConfig().build() is None
    assert BoxConfig(lower=[-1.0], upper=[1.0]).build().contains(np.array([0.5]))
    assert NoiseConfig(kind="zero", scale=0.0).build().kind == NoiseKinds.ZERO


def test_mdp_section_builds_a_reproducible_model(tmp_path: Path, single_state_model: MdpModel) -> None:
    """Verifies that the random model depends only on its seed and that model files are loaded."""
    first = MdpConfig(model_seed=4, reward_noise=0.2).build_model()
    second = MdpConfig(model_seed=4, reward_noise=0.2).build_model()
    np.testing.assert_array_equal(first.transitions, second.transitions)
    assert first.reward_noise.scale == 0.2
    assert not np.array_equal(first.rewards, MdpConfig(model_seed=5).build_model().rewards)

    path = tmp_path / "model.json"
    single_state_model.to_json(path)
    loaded = MdpConfig(model_path=str(path)).build_model()
    assert loaded.n_states == 1
    settings = MdpConfig(epsilon=0.1).build_settings(tie_policy=TiePolicies.RANDOM)
    assert settings.epsilon == 0.1
    assert settings.fast_schedule.exponent == 0.6
    assert settings.tie_policy == TiePolicies.RANDOM
