"""Provides the experiment configuration: a YAML-backed dataclass tree, its cross-field validation and the builders that
turn configuration sections into library objects.
"""

import json
from enum import StrEnum
import hashlib
from pathlib import Path
from dataclasses import field, asdict, dataclass

import numpy as np
from ataraxis_data_structures import YamlConfig

from .mdp import MdpModel, LearnerSettings, random_model
from .stepsize import Schedule, ScheduleFamilies, is_faster_timescale
from .sa_engine import BiasModel, NoiseKinds, NoiseModel, BoundingBox
from .errors import KernelValidityError
from .scheduler import StaticKernel, UpdateFamily
from .inclusion import SelectionPolicies
from .two_timescale import JointFamily
from .mean_field import SignField, LinearField, TiePolicies, SetValuedField, ProjectionField

_MAXIMUM_SEED: int = 2**64 - 1
"""The largest admissible replicate seed."""
_UNHASHED_FIELDS: frozenset[str] = frozenset({"output_directory", "seeds"})
"""The fields that place a run without changing what any of its replicates compute."""


class ExperimentKinds(StrEnum):
    """Defines the experiment kinds supported by the runner."""

    SINGLE_SA = "single-sa"
    """A single-timescale asynchronous stochastic approximation run."""
    TWO_TIMESCALE = "two-timescale"
    """A coupled two-timescale asynchronous run."""
    MDP_LEARN = "mdp-learn"
    """An actor-critic learning run on a discounted MDP."""
    DI_FLOW = "di-flow"
    """A differential inclusion flow bundle together with the asymptotic pseudo-trajectory diagnostic."""
    AUDIT = "audit"
    """An assumption audit without simulation."""


class FieldKinds(StrEnum):
    """Defines the mean fields that can be declared in configuration files."""

    LINEAR = "linear"
    """The affine field A x + b."""
    SIGN = "sign"
    """The set-valued field -sign(x)."""
    PROJECTED_LINEAR = "projected-linear"
    """The affine field projected onto a box."""


@dataclass
class ScheduleConfig:
    """Declares one step-size schedule."""

    family: str = ScheduleFamilies.POWER.value
    """The schedule family: 'power' or 'power-log'."""
    exponent: float = 1.0
    """The polynomial exponent p."""
    log_exponent: float = 0.0
    """The logarithmic exponent q."""

    def build(self) -> Schedule:
        """Returns the Schedule instance."""
        return Schedule(family=ScheduleFamilies(self.family), exponent=self.exponent, log_exponent=self.log_exponent)


@dataclass
class FieldConfig:
    """Declares one mean field."""

    kind: str = FieldKinds.LINEAR.value
    """The field kind."""
    matrix: list[list[float]] | None = None
    """The matrix A of linear fields. Two-timescale fields read the concatenated (x, y)."""
    offset: list[float] | None = None
    """The offset b of linear fields."""
    dimension: int = 1
    """The dimension of the sign field."""
    lower: list[float] | None = None
    """The lower corner of the projection box."""
    upper: list[float] | None = None
    """The upper corner of the projection box."""

    def build(self) -> SetValuedField:
        """Returns the SetValuedField instance."""
        kind = FieldKinds(self.kind)
        if kind == FieldKinds.SIGN:
            return SignField(dimension=self.dimension)
        linear = LinearField(matrix=self.matrix if self.matrix is not None else [[-1.0]], offset=self.offset)
        if kind == FieldKinds.PROJECTED_LINEAR:
            return ProjectionField(base=linear, lower=np.asarray(self.lower), upper=np.asarray(self.upper))
        return linear

    @property
    def output_dimension(self) -> int:
        """Returns the number of coordinates the field produces."""
        if FieldKinds(self.kind) == FieldKinds.SIGN:
            return self.dimension
        return 1 if self.matrix is None else len(self.matrix)


@dataclass
class KernelConfig:
    """Declares the update family and its static scheduling kernel."""

    subsets: list[list[int]] | None = None
    """The subsets of the update family. Defaults to one singleton per component."""
    matrix: list[list[float]] | None = None
    """The transition matrix over subsets. Defaults to independent uniform draws."""
    initial_subset: int = 0
    """The subset the scheduling chain starts from."""

    def build_family(self, n_components: int) -> UpdateFamily:
        """Returns the UpdateFamily over the input number of components."""
        if self.subsets is None:
            return UpdateFamily.singletons(n_components=n_components)
        return UpdateFamily(subsets=tuple(tuple(subset) for subset in self.subsets), n_components=n_components)

    def build_kernel(self, family: UpdateFamily) -> StaticKernel:
        """Returns the StaticKernel of the declared matrix, or the uniform kernel."""
        if self.matrix is None:
            return StaticKernel(np.full((family.size, family.size), 1.0 / family.size))
        return StaticKernel(self.matrix)


@dataclass
class NoiseConfig:
    """Declares the martingale-difference noise."""

    kind: str = NoiseKinds.GAUSSIAN.value
    """The noise kind: 'gaussian', 'bounded-uniform' or 'zero'."""
    scale: float = 1.0
    """The standard deviation (gaussian) or half-width (bounded-uniform)."""
    independent: bool = True
    """Determines whether components draw independent noise."""
    truncation: float | None = None
    """The optional symmetric clipping of gaussian noise, in standard deviations."""

    def build(self) -> NoiseModel:
        """Returns the NoiseModel instance."""
        return NoiseModel(
            kind=NoiseKinds(self.kind), scale=self.scale, independent=self.independent, truncation=self.truncation
        )


@dataclass
class BiasConfig:
    """Declares the vanishing bias d_n = scale · n^-exponent."""

    scale: float = 0.0
    """The bias magnitude at n = 1."""
    exponent: float = 1.0
    """The decay exponent."""

    def build(self) -> BiasModel:
        """Returns the BiasModel instance."""
        return BiasModel(scale=self.scale, exponent=self.exponent)


@dataclass
class BoxConfig:
    """Declares the compact set C the iterates must stay inside. No box is enforced when both corners are unset."""

    lower: list[float] | None = None
    """The lower corner."""
    upper: list[float] | None = None
    """The upper corner."""

    def build(self) -> BoundingBox | None:
        """Returns the BoundingBox, or None when no box is declared."""
        if self.lower is None or self.upper is None:
            return None
        return BoundingBox(lower=np.asarray(self.lower), upper=np.asarray(self.upper))


@dataclass
class MdpConfig:
    """Declares the MDP model and the actor-critic learner."""

    model_path: str | None = None
    """The path to a JSON model file. When unset, a random model is drawn from model_seed."""
    states: int = 3
    """The number of states of the random model."""
    actions: int = 2
    """The number of actions of the random model."""
    beta: float = 0.8
    """The discount factor of the random model."""
    model_seed: int = 0
    """The seed of the random model."""
    reward_noise: float = 0.5
    """The standard deviation of the gaussian reward noise of the random model."""
    epsilon: float = 0.05
    """The exploration floor of the behavior policy."""
    fast_schedule: ScheduleConfig = field(default_factory=lambda: ScheduleConfig(exponent=0.6))
    """The critic schedule γ."""
    slow_schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    """The actor schedule μ̂."""
    freeze_policy: bool = False
    """Determines whether the actor is frozen, leaving a pure critic run."""
    value_tolerance: float = 1e-10
    """The value iteration tolerance of the V* oracle."""

    def build_model(self, validate: bool = True) -> MdpModel:
        """Loads the model file or draws the random model.

        Args:
            validate: Determines whether a loaded model must have an irreducible and aperiodic state chain. The audit
                disables this to report the violation instead of raising it.

        Raises:
            AssumptionViolationError: If validation is enabled and the loaded model's state chain is reducible or
                periodic.
        """
        if self.model_path is not None:
            if validate:
                return MdpModel.from_json(Path(self.model_path))
            return MdpModel.from_dict(json.loads(Path(self.model_path).read_text()))
        model = random_model(
            rng=np.random.default_rng(self.model_seed), n_states=self.states, n_actions=self.actions, beta=self.beta
        )
        return MdpModel(
            transitions=model.transitions,
            rewards=model.rewards,
            beta=model.beta,
            reward_noise=NoiseModel(kind=NoiseKinds.GAUSSIAN, scale=self.reward_noise, truncation=4.0),
        )

    def build_settings(self, tie_policy: TiePolicies) -> LearnerSettings:
        """Returns the LearnerSettings instance."""
        return LearnerSettings(
            fast_schedule=self.fast_schedule.build(),
            slow_schedule=self.slow_schedule.build(),
            epsilon=self.epsilon,
            tie_policy=tie_policy,
        )


@dataclass
class FlowConfig:
    """Declares the differential inclusion flow sampler."""

    dt: float = 0.01
    """The Euler time step."""
    horizon: float = 5.0
    """The integration horizon T."""
    policy: str = SelectionPolicies.CORNER_SWEEP.value
    """The selection policy of the bundle."""
    epsilon: float = 0.1
    """The floor ε of the scaling box."""
    levels: int = 3
    """The number of uniform diagonal levels in fixed-omega bundles."""
    selections: int = 8
    """The number of flows in each bundle."""


@dataclass
class DiagnosticsConfig:
    """Declares the diagnostics evaluated after each replicate."""

    probe_times: list[float] = field(default_factory=lambda: [4.0, 12.0, 24.0])
    """The interpolated times at which the pseudo-trajectory distance is probed."""
    noise_window: float = 1.0
    """The window length T of the Kushner-Clark noise sup."""
    noise_starts: list[int] = field(default_factory=lambda: [1_000, 100_000])
    """The iterations at which the Kushner-Clark windows start."""
    relative_step_window: float = 1.0
    """The window length v of the relative step floor check."""
    thinning: int = 1
    """The row thinning of trajectory CSV files."""
    tracking_tolerance: float = 0.02
    """The largest accepted fast-tracking error."""
    tracking_window: float = 0.5
    """The trailing fraction of the run over which the median tracking residual is taken."""
    value_gap_tolerance: float = 0.05
    """The largest accepted terminal value gap of mdp-learn runs."""
    occupancy_from: int = 10_000
    """The first checkpoint included in the occupancy check."""


@dataclass
class ExperimentConfig(YamlConfig):
    """Defines one experiment: its kind, replicate seeds, horizon and every model section."""

    kind: str = ExperimentKinds.SINGLE_SA.value
    """The experiment kind."""
    seeds: list[int] = field(default_factory=lambda: [0])
    """The replicate seeds. Every (configuration, seed) pair fully determines its replicate."""
    horizon: int = 10_000
    """The number of iterations n_max of each replicate."""
    checkpoint_every: int = 1_000
    """The checkpoint cadence of mdp-learn runs."""
    output_directory: str = "results"
    """The directory that receives the replicate folders and the summary."""
    initial_state: list[float] = field(default_factory=lambda: [1.0])
    """The initial (slow) iterate x_0."""
    fast_initial_state: list[float] | None = None
    """The initial fast iterate y_0 of two-timescale runs."""
    tie_policy: str = TiePolicies.LOWEST_INDEX.value
    """The tie-breaking rule of set-valued selections."""
    compiled: bool = True
    """Determines whether compiled simulation kernels are used when the model is eligible."""
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    """The (slow) schedule α."""
    fast_schedule: ScheduleConfig = field(default_factory=lambda: ScheduleConfig(exponent=0.6))
    """The fast schedule γ of two-timescale runs."""
    mean_field: FieldConfig = field(default_factory=FieldConfig)
    """The (slow) mean field F."""
    fast_field: FieldConfig = field(default_factory=FieldConfig)
    """The fast mean field G of two-timescale runs."""
    kernel: KernelConfig = field(default_factory=KernelConfig)
    """The update family and scheduling kernel. Two-timescale families index the concatenated components."""
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    """The (slow) noise model."""
    fast_noise: NoiseConfig = field(default_factory=NoiseConfig)
    """The fast noise model."""
    bias: BiasConfig = field(default_factory=BiasConfig)
    """The (slow) bias model."""
    fast_bias: BiasConfig = field(default_factory=BiasConfig)
    """The fast bias model."""
    box: BoxConfig = field(default_factory=BoxConfig)
    """The compact set of the (slow) iterate."""
    fast_box: BoxConfig = field(default_factory=BoxConfig)
    """The compact set of the fast iterate."""
    mdp: MdpConfig = field(default_factory=MdpConfig)
    """The MDP model and learner."""
    flow: FlowConfig = field(default_factory=FlowConfig)
    """The flow sampler."""
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    """The diagnostics."""

    @property
    def experiment_kind(self) -> ExperimentKinds:
        """Returns the resolved experiment kind."""
        return ExperimentKinds(self.kind)

    @property
    def ties(self) -> TiePolicies:
        """Returns the resolved tie policy."""
        return TiePolicies(self.tie_policy)

    @property
    def n_slow(self) -> int:
        """Returns the dimension of the (slow) iterate."""
        return len(self.initial_state)

    @property
    def n_fast(self) -> int:
        """Returns the dimension of the fast iterate."""
        return 0 if self.fast_initial_state is None else len(self.fast_initial_state)


def _choice_message(name: str, value: str, choices: type[StrEnum]) -> str | None:
    """Returns the field-level message for an unknown enumerated value, or None if the value is valid."""
    if value in {str(member) for member in choices}:
        return None
    return f"{name}: '{value}' is not one of {[str(member) for member in choices]}."


def _schedule_messages(name: str, section: ScheduleConfig) -> list[str]:
    """Validates one schedule section by building it."""
    message = _choice_message(name=f"{name}.family", value=section.family, choices=ScheduleFamilies)
    if message is not None:
        return [message]
    try:
        section.build()
    except ValueError as error:
        return [f"{name}: {error}"]
    return []


def _field_messages(name: str, section: FieldConfig, input_dimension: int, output_dimension: int) -> list[str]:
    """Validates one field section against the dimensions it must read and produce."""
    message = _choice_message(name=f"{name}.kind", value=section.kind, choices=FieldKinds)
    if message is not None:
        return [message]
    messages: list[str] = []
    if FieldKinds(section.kind) == FieldKinds.SIGN:
        if section.dimension != output_dimension:
            messages.append(f"{name}.dimension: expected {output_dimension}, but got {section.dimension}.")
        return messages
    if section.matrix is None:
        messages.append(f"{name}.matrix: linear fields require a matrix.")
        return messages
    shape = (len(section.matrix), {len(row) for row in section.matrix})
    if shape[0] != output_dimension or shape[1] != {input_dimension}:
        messages.append(
            f"{name}.matrix: expected shape ({output_dimension}, {input_dimension}), but got rows of lengths "
            f"{sorted(shape[1])} in {shape[0]} rows."
        )
    if section.offset is not None and len(section.offset) != output_dimension:
        messages.append(f"{name}.offset: expected {output_dimension} entries, but got {len(section.offset)}.")
    if FieldKinds(section.kind) == FieldKinds.PROJECTED_LINEAR and (
        section.lower is None or section.upper is None or len(section.lower) != output_dimension
    ):
        messages.append(f"{name}.lower/upper: projected fields require both corners with {output_dimension} entries.")
    return messages


def _box_messages(name: str, section: BoxConfig, start: list[float]) -> list[str]:
    """Validates one box section and verifies that it contains the initial iterate."""
    if (section.lower is None) != (section.upper is None):
        return [f"{name}: both corners must be set to enforce a box."]
    if section.lower is None or section.upper is None:
        return []
    if len(section.lower) != len(start) or len(section.upper) != len(start):
        return [f"{name}: the corners must have {len(start)} entries."]
    try:
        box = section.build()
    except ValueError as error:
        return [f"{name}: {error}"]
    if box is not None and not box.contains(np.asarray(start, dtype=np.float64)):
        return [f"{name}: the box does not contain the initial iterate {start}."]
    return []


def _kernel_messages(section: KernelConfig, n_components: int) -> list[str]:
    """Validates the update family and the kernel rows."""
    try:
        family = section.build_family(n_components=n_components)
        kernel = section.build_kernel(family=family)
    except (ValueError, KernelValidityError) as error:
        return [f"kernel: {error}"]
    if kernel.matrix.shape != (family.size, family.size):
        return [f"kernel.matrix: expected shape ({family.size}, {family.size}), but got {kernel.matrix.shape}."]
    if not 0 <= section.initial_subset < family.size:
        return [f"kernel.initial_subset: expected a value in [0, {family.size - 1}], but got {section.initial_subset}."]
    return []


def validate_configuration(config: ExperimentConfig) -> list[str]:
    """Validates the configuration and returns the field-level messages. An empty list means the configuration is valid.

    Checks the enumerated values, schedule parameters, the (B2)(c) timescale ordering of two-timescale runs, matrix and
    vector shapes against the declared dimensions, kernel row stochasticity, boxes containing the initial iterates and
    the seed range.
    """
    messages: list[str] = []
    for name, value, choices in (
        ("kind", config.kind, ExperimentKinds),
        ("tie_policy", config.tie_policy, TiePolicies),
        ("flow.policy", config.flow.policy, SelectionPolicies),
        ("noise.kind", config.noise.kind, NoiseKinds),
        ("fast_noise.kind", config.fast_noise.kind, NoiseKinds),
    ):
        message = _choice_message(name=name, value=value, choices=choices)
        if message is not None:
            messages.append(message)
    if messages:
        return messages

    if not config.seeds:
        messages.append("seeds: at least one seed is required.")
    messages.extend(
        f"seeds: {seed} is not a non-negative 64-bit integer."
        for seed in config.seeds
        if not 0 <= seed <= _MAXIMUM_SEED
    )
    if config.horizon < 1:
        messages.append(f"horizon: expected a positive iteration count, but got {config.horizon}.")
    if config.checkpoint_every < 1:
        messages.append(f"checkpoint_every: expected a positive cadence, but got {config.checkpoint_every}.")
    if config.diagnostics.thinning < 1:
        messages.append(f"diagnostics.thinning: expected a positive value, but got {config.diagnostics.thinning}.")
    if not 0.0 < config.diagnostics.tracking_window <= 1.0:
        messages.append(
            f"diagnostics.tracking_window: expected a fraction in (0, 1], but got {config.diagnostics.tracking_window}."
        )
    messages.extend(_schedule_messages(name="schedule", section=config.schedule))

    kind = config.experiment_kind
    if kind in {ExperimentKinds.SINGLE_SA, ExperimentKinds.DI_FLOW, ExperimentKinds.AUDIT}:
        n = config.n_slow
        messages.extend(
            _field_messages(name="mean_field", section=config.mean_field, input_dimension=n, output_dimension=n)
        )
        messages.extend(_kernel_messages(section=config.kernel, n_components=n))
        messages.extend(_box_messages(name="box", section=config.box, start=config.initial_state))

    if kind == ExperimentKinds.TWO_TIMESCALE:
        if config.fast_initial_state is None:
            messages.append("fast_initial_state: two-timescale runs require the initial fast iterate.")
            return messages
        n_slow, n_fast = config.n_slow, config.n_fast
        total = n_slow + n_fast
        messages.extend(_schedule_messages(name="fast_schedule", section=config.fast_schedule))
        if not messages and not is_faster_timescale(slow=config.schedule.build(), fast=config.fast_schedule.build()):
            messages.append(
                "fast_schedule: the slow step sizes must vanish relative to the fast ones, so the fast exponent must "
                "be smaller than the slow exponent. This violates (B2)(c)."
            )
        messages.extend(
            _field_messages(
                name="mean_field", section=config.mean_field, input_dimension=total, output_dimension=n_slow
            )
        )
        messages.extend(
            _field_messages(
                name="fast_field", section=config.fast_field, input_dimension=total, output_dimension=n_fast
            )
        )
        messages.extend(_kernel_messages(section=config.kernel, n_components=total))
        if config.kernel.subsets is None:
            messages.append("kernel.subsets: two-timescale runs require joint subsets that update both iterates.")
        else:
            try:
                JointFamily(family=config.kernel.build_family(n_components=total), n_slow=n_slow)
            except ValueError as error:
                messages.append(f"kernel.subsets: {error}")
        messages.extend(_box_messages(name="box", section=config.box, start=config.initial_state))
        messages.extend(_box_messages(name="fast_box", section=config.fast_box, start=config.fast_initial_state))

    if kind == ExperimentKinds.MDP_LEARN:
        messages.extend(_schedule_messages(name="mdp.fast_schedule", section=config.mdp.fast_schedule))
        messages.extend(_schedule_messages(name="mdp.slow_schedule", section=config.mdp.slow_schedule))
        actions = config.mdp.actions
        if config.mdp.model_path is None and not 0.0 < config.mdp.epsilon < 1.0 / actions:
            messages.append(f"mdp.epsilon: expected a value in (0, {1.0 / actions}), but got {config.mdp.epsilon}.")
        if config.mdp.model_path is None and not 0.0 < config.mdp.beta < 1.0:
            messages.append(f"mdp.beta: expected a value in (0, 1), but got {config.mdp.beta}.")
    return messages


def configuration_hash(config: ExperimentConfig) -> str:
    """Returns the SHA-256 digest of the canonical sorted-key JSON rendering of the configuration.

    The output directory and the seed list are left out, so a replicate run with a given seed carries the same hash
    wherever it is written and whichever other seeds run beside it.
    """
    content = {key: value for key, value in asdict(config).items() if key not in _UNHASHED_FIELDS}
    rendering = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(rendering.encode("utf-8")).hexdigest()
