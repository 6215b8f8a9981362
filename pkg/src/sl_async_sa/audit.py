"""Provides the assumption audit: one status per convergence assumption, with the numerical evidence behind it.

Every check is reported, never raised. Closed-form facts (built-in schedule families, static kernels, contraction
constants) are marked verified; probe-based facts are marked empirically supported; facts no finite computation can
establish are marked unverifiable.
"""

from enum import StrEnum
from typing import Any
from dataclasses import field, dataclass

import numpy as np
from numpy.typing import NDArray
from ataraxis_base_utilities import LogLevel, console

from .mdp import (
    Policy,
    joint_kernel,
    strategy_field,
    state_action_family,
)
from .errors import AssumptionViolationError
from .stepsize import Schedule, ratio_bound, partial_sum, square_summable, is_faster_timescale, analytic_ratio_bound
from .sa_engine import NoiseKinds, NoiseModel, estimate_epsilon, noise_mean_check
from .scheduler import TransitionKernel, UpdateFamily, lipschitz_probe, support_graph_report, min_update_proportion
from .mean_field import LinearField, SetValuedField, check_sa_map
from .configuration import ExperimentKinds, ExperimentConfig
from .two_timescale import JointFamily, linear_fast_limit

_RATIO_PROBES: tuple[float, ...] = (0.1, 0.5, 0.9)
"""The fractions x at which the schedule ratio bounds A_x are reported."""
_NOISE_SAMPLES: int = 20_000
"""The number of draws used by the zero-mean noise check."""
_PROBE_SCALES: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.0)
"""The shrinking offsets of the probe sequence used by the mean-field checks. The last probe is the limit point."""


class AssumptionStatus(StrEnum):
    """Defines the outcome of one assumption check."""

    VERIFIED = "verified"
    """The assumption holds by a closed-form argument or an exact computation."""
    EMPIRICAL = "empirically-supported"
    """Finite probes are consistent with the assumption, but cannot prove it."""
    UNVERIFIABLE = "unverifiable"
    """No finite computation can decide the assumption for this configuration."""
    VIOLATED = "violated"
    """The assumption demonstrably fails."""


@dataclass(frozen=True)
class AssumptionCheck:
    """Stores the status of one assumption together with its evidence."""

    tag: str
    """The assumption tag, such as '(A4)(b)'."""
    status: AssumptionStatus
    """The outcome of the check."""
    evidence: dict[str, Any] = field(default_factory=dict)
    """The numerical evidence supporting the status."""

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the check."""
        return {"tag": self.tag, "status": str(self.status), "evidence": self.evidence}


@dataclass
class AuditReport:
    """Stores the checks of one audit."""

    kind: str
    """The experiment kind the audit was computed for."""
    checks: list[AssumptionCheck] = field(default_factory=list)
    """The assumption checks, in audit order."""

    @property
    def violations(self) -> list[AssumptionCheck]:
        """Returns the violated checks."""
        return [check for check in self.checks if check.status == AssumptionStatus.VIOLATED]

    @property
    def passed(self) -> bool:
        """Returns True if no assumption is violated."""
        return not self.violations

    def status(self, tag: str) -> AssumptionStatus:
        """Returns the status of the first check with the input tag.

        Raises:
            KeyError: If the audit has no check with the tag.
        """
        for check in self.checks:
            if check.tag == tag:
                return check.status
        message = f"The audit has no check tagged {tag}."
        raise KeyError(message)

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the report."""
        return {
            "kind": self.kind,
            "passed": self.passed,
            "violations": [check.tag for check in self.violations],
            "checks": [check.to_dict() for check in self.checks],
        }


def _schedule_check(schedules: dict[str, Schedule], horizon: int) -> AssumptionCheck:
    """Reports (A2): divergent partial sums and bounded step-size ratios, closed-form for the built-in families."""
    evidence: dict[str, Any] = {}
    for name, schedule in schedules.items():
        evidence[name] = {
            "family": str(schedule.family),
            "exponent": schedule.exponent,
            "log_exponent": schedule.log_exponent,
            "partial_sum": partial_sum(schedule=schedule, n=horizon),
            "analytic_ratio_bounds": {str(x): analytic_ratio_bound(schedule=schedule, x=x) for x in _RATIO_PROBES},
            "empirical_ratio_bounds": {
                str(x): ratio_bound(schedule=schedule, x=x, n_max=min(horizon, 100_000)).value for x in _RATIO_PROBES
            },
        }
    return AssumptionCheck(tag="(A2)", status=AssumptionStatus.VERIFIED, evidence=evidence)


def _summability_check(tag: str, schedules: dict[str, Schedule], noise: NoiseModel) -> AssumptionCheck:
    """Reports the square summability of the step sizes against the noise moments."""
    moment = 0.0 if noise.kind == NoiseKinds.ZERO else 2.0
    results = {name: square_summable(schedule=schedule, moment_order=moment) for name, schedule in schedules.items()}
    status = AssumptionStatus.VERIFIED if all(results.values()) else AssumptionStatus.VIOLATED
    return AssumptionCheck(tag=tag, status=status, evidence={"moment_order": moment, "square_summable": results})


def _noise_check(noise: NoiseModel, dimension: int, seed: int) -> AssumptionCheck:
    """Reports (A3): the martingale-difference noise has zero mean and bounded second moments."""
    if noise.kind == NoiseKinds.ZERO or noise.scale == 0.0:
        return AssumptionCheck(tag="(A3)", status=AssumptionStatus.VERIFIED, evidence={"kind": str(noise.kind)})
    check = noise_mean_check(
        model=noise, rng=np.random.default_rng(seed), samples=_NOISE_SAMPLES, dimension=dimension
    )
    evidence = {
        "kind": str(noise.kind),
        "standard_deviation": noise.standard_deviation,
        "largest_sample_mean": check.largest_mean,
        "threshold": check.threshold,
    }
    status = AssumptionStatus.EMPIRICAL if check.passed else AssumptionStatus.VIOLATED
    return AssumptionCheck(tag="(A3)", status=status, evidence=evidence)


def _probe_points(
    center: NDArray[np.float64], rng: np.random.Generator, radius: float = 1.0
) -> list[NDArray[np.float64]]:
    """Builds a probe sequence that approaches the center along a random direction, starting at the input radius."""
    direction = rng.standard_normal(center.size)
    direction /= max(float(np.linalg.norm(direction)), 1e-12)
    return [center + radius * scale * direction for scale in _PROBE_SCALES]


def _field_check(
    mean_field: SetValuedField, center: NDArray[np.float64], seed: int, radius: float = 1.0
) -> AssumptionCheck:
    """Reports (A1)(b): the mean field is a stochastic approximation map."""
    probes = _probe_points(center=center, rng=np.random.default_rng(seed), radius=radius)
    if not mean_field.has_vertices:
        ratios = [
            float(np.linalg.norm(mean_field.select(point)) / (1.0 + np.linalg.norm(point))) for point in probes
        ]
        evidence = {
            "vertex_description": False,
            "max_growth_ratio": max(ratios),
            "growth_constant": mean_field.growth_constant,
        }
        status = (
            AssumptionStatus.EMPIRICAL
            if max(ratios) <= mean_field.growth_constant + 1e-12
            else AssumptionStatus.VIOLATED
        )
        return AssumptionCheck(tag="(A1)(b)", status=status, evidence=evidence)

    report = check_sa_map(field=mean_field, probe_points=probes)
    evidence = {"vertex_description": True, **report.to_dict()}
    described_passed = report.growth_passed and report.usc_passed and all(size > 0 for size in report.hull_sizes)
    if not described_passed:
        status = AssumptionStatus.VIOLATED
    elif report.truncated_probes > 0:
        status = AssumptionStatus.EMPIRICAL
    else:
        status = AssumptionStatus.VERIFIED if report.convexity_passed else AssumptionStatus.VIOLATED
    return AssumptionCheck(tag="(A1)(b)", status=status, evidence=evidence)


def _chain_checks(
    kernel: TransitionKernel,
    family: UpdateFamily,
    x_grid: list[NDArray[np.float64]],
    schedule: Schedule,
    tags: tuple[str, str] = ("(A4)(b)", "(A4)(c)"),
) -> list[AssumptionCheck]:
    """Reports the irreducibility and aperiodicity of the scheduling chain, η̂, ε̂ and the Lipschitz probe."""
    checks = [
        AssumptionCheck(
            tag="(A4)(a)",
            status=AssumptionStatus.VERIFIED,
            evidence={"subsets": family.size, "components": family.n_components},
        )
    ]
    reports = [support_graph_report(kernel=kernel, family=family, x=x) for x in x_grid]
    failing = [report for report in reports if not (report.irreducible and report.aperiodic)]
    if failing:
        evidence: dict[str, Any] = {
            "strong_components": failing[0].n_strong_components,
            "period": failing[0].period,
            "message": "The update-scheduling chain is not irreducible and aperiodic.",
        }
        checks.append(AssumptionCheck(tag=tags[0], status=AssumptionStatus.VIOLATED, evidence=evidence))
        console.echo(
            message=f"The update-scheduling chain violates {tags[0]}: {evidence}.", level=LogLevel.WARNING
        )
    else:
        eta = min_update_proportion(kernel=kernel, family=family, x_grid=x_grid)
        estimate = estimate_epsilon(kernel=kernel, family=family, schedule=schedule, x_grid=x_grid)
        evidence = {
            "state_dependent": kernel.depends_on_state,
            "grid_points": len(x_grid),
            "eta_hat": eta,
            "ratio_bound": estimate.ratio,
            "epsilon_hat": estimate.epsilon,
            "epsilon_empirical": estimate.empirical,
        }
        # A static kernel is checked exactly; a state-dependent one only on the grid.
        status = AssumptionStatus.EMPIRICAL if kernel.depends_on_state else AssumptionStatus.VERIFIED
        checks.append(AssumptionCheck(tag=tags[0], status=status, evidence=evidence))

    constant = lipschitz_probe(kernel=kernel, family=family, x_grid=x_grid)
    status = AssumptionStatus.EMPIRICAL if kernel.depends_on_state else AssumptionStatus.VERIFIED
    checks.append(AssumptionCheck(tag=tags[1], status=status, evidence={"lipschitz_estimate": constant}))
    return checks


def _box_check(config: ExperimentConfig) -> AssumptionCheck:
    """Reports (A1)(a): the iterates stay inside a compact set."""
    if config.box.lower is None or config.box.upper is None:
        return AssumptionCheck(
            tag="(A1)(a)",
            status=AssumptionStatus.UNVERIFIABLE,
            evidence={"message": "No compact box is declared. Boundedness cannot be decided without simulation."},
        )
    return AssumptionCheck(
        tag="(A1)(a)",
        status=AssumptionStatus.EMPIRICAL,
        evidence={"lower": config.box.lower, "upper": config.box.upper, "enforced": True},
    )


def _audit_single(config: ExperimentConfig, seed: int) -> list[AssumptionCheck]:
    """Audits a single-timescale configuration."""
    x0 = np.asarray(config.initial_state, dtype=np.float64)
    family = config.kernel.build_family(n_components=x0.size)
    kernel = config.kernel.build_kernel(family=family)
    schedule = config.schedule.build()
    noise = config.noise.build()
    return [
        _box_check(config=config),
        _field_check(mean_field=config.mean_field.build(), center=x0, seed=seed),
        _schedule_check(schedules={"alpha": schedule}, horizon=config.horizon),
        _noise_check(noise=noise, dimension=x0.size, seed=seed),
        *_chain_checks(kernel=kernel, family=family, x_grid=[x0], schedule=schedule),
        _summability_check(tag="(A5)", schedules={"alpha": schedule}, noise=noise),
    ]


def _audit_coupled(config: ExperimentConfig, seed: int) -> list[AssumptionCheck]:
    """Audits a two-timescale configuration."""
    x0 = np.asarray(config.initial_state, dtype=np.float64)
    y0 = np.asarray(config.fast_initial_state, dtype=np.float64)
    z0 = np.concatenate([x0, y0])
    family = config.kernel.build_family(n_components=z0.size)
    JointFamily(family=family, n_slow=x0.size)
    kernel = config.kernel.build_kernel(family=family)
    slow, fast = config.schedule.build(), config.fast_schedule.build()
    schedules = {"alpha": slow, "gamma": fast}
    noise = config.noise.build()

    checks = [
        _box_check(config=config),
        _field_check(mean_field=config.mean_field.build(), center=z0, seed=seed),
        _schedule_check(schedules=schedules, horizon=config.horizon),
        _noise_check(noise=noise, dimension=z0.size, seed=seed),
        *_chain_checks(kernel=kernel, family=family, x_grid=[z0], schedule=fast, tags=("(B4)", "(A4)(c)")),
        _summability_check(tag="(B5)", schedules=schedules, noise=noise),
    ]
    faster = is_faster_timescale(slow=slow, fast=fast)
    checks.append(
        AssumptionCheck(
            tag="(B2)(c)",
            status=AssumptionStatus.VERIFIED if faster else AssumptionStatus.VIOLATED,
            evidence={"slow_exponent": slow.exponent, "fast_exponent": fast.exponent},
        )
    )

    fast_field = config.fast_field.build()
    if not isinstance(fast_field, LinearField):
        checks.append(
            AssumptionCheck(
                tag="(B6)",
                status=AssumptionStatus.UNVERIFIABLE,
                evidence={"message": "The fast field is not affine, so its equilibrium map has no closed form."},
            )
        )
        return checks
    try:
        oracle = linear_fast_limit(fast_field=fast_field, n_slow=x0.size)
    except AssumptionViolationError as error:
        checks.append(AssumptionCheck(tag="(B6)", status=AssumptionStatus.VIOLATED, evidence={"message": str(error)}))
        return checks
    probes = _probe_points(center=x0, rng=np.random.default_rng(seed))
    eigenvalues = np.linalg.eigvals(fast_field.matrix[:, x0.size :])
    evidence = {
        "largest_real_part": float(np.max(np.real(eigenvalues))),
        "lipschitz_estimate": oracle.lipschitz_estimate(probes=probes),
    }
    checks.append(AssumptionCheck(tag="(B6)", status=AssumptionStatus.VERIFIED, evidence=evidence))
    return checks


def _audit_mdp(config: ExperimentConfig, seed: int) -> list[AssumptionCheck]:
    """Audits an actor-critic configuration."""
    model = config.mdp.build_model(validate=False)
    settings = config.mdp.build_settings(tie_policy=config.ties)
    slow, fast = settings.slow_schedule, settings.fast_schedule
    schedules = {"mu_hat": slow, "gamma": fast}
    rng = np.random.default_rng(seed)

    checks = [
        AssumptionCheck(
            tag="(A1)(a)",
            status=AssumptionStatus.VERIFIED,
            evidence={"policy": "simplex", "q_box_half_width": model.q_bound},
        )
    ]
    policies = [Policy.uniform(model.n_states, model.n_actions).pi]
    policies.extend(rng.dirichlet(np.ones(model.n_actions), size=model.n_states) for _ in range(3))
    checks.append(_field_check(mean_field=strategy_field(model), center=policies[0].ravel(), seed=seed, radius=0.05))
    checks.append(_schedule_check(schedules=schedules, horizon=config.horizon))
    checks.append(_noise_check(noise=model.reward_noise, dimension=1, seed=seed))

    try:
        model.check_ergodicity()
    except AssumptionViolationError as error:
        checks.append(
            AssumptionCheck(tag="(A4)(b)", status=AssumptionStatus.VIOLATED, evidence={"message": str(error)})
        )
        return checks

    # The ε-floor fixes the support of the joint chain, so every policy shares the grid's structure.
    chain = _chain_checks(
        kernel=joint_kernel(model=model, epsilon=settings.epsilon),
        family=state_action_family(model=model),
        x_grid=[policy.ravel() for policy in policies],
        schedule=fast,
        tags=("(B4)", "(A4)(c)"),
    )
    checks.extend(
        AssumptionCheck(tag=check.tag, status=AssumptionStatus.VERIFIED, evidence=check.evidence)
        if check.tag == "(B4)" and check.status == AssumptionStatus.EMPIRICAL
        else check
        for check in chain
    )
    checks.append(_summability_check(tag="(B5)", schedules=schedules, noise=model.reward_noise))
    faster = is_faster_timescale(slow=slow, fast=fast)
    checks.append(
        AssumptionCheck(
            tag="(B2)(c)",
            status=AssumptionStatus.VERIFIED if faster else AssumptionStatus.VIOLATED,
            evidence={"slow_exponent": slow.exponent, "fast_exponent": fast.exponent},
        )
    )
    checks.append(
        AssumptionCheck(
            tag="(B6)",
            status=AssumptionStatus.VERIFIED,
            evidence={"contraction_constant": model.beta, "message": "The critic target is a β-contraction in Q."},
        )
    )
    return checks


def audit(config: ExperimentConfig, seed: int | None = None) -> AuditReport:
    """Audits the convergence assumptions of the configured experiment.

    Args:
        config: The experiment configuration.
        seed: The seed of the probe draws. Defaults to the first configured seed.

    Returns:
        The AuditReport. Violations are reported as checks, never raised.
    """
    probe_seed = config.seeds[0] if seed is None else seed
    kind = config.experiment_kind
    console.echo(message=f"Auditing the convergence assumptions of the {kind} experiment...")
    if kind == ExperimentKinds.TWO_TIMESCALE:
        checks = _audit_coupled(config=config, seed=probe_seed)
    elif kind == ExperimentKinds.MDP_LEARN:
        checks = _audit_mdp(config=config, seed=probe_seed)
    else:
        checks = _audit_single(config=config, seed=probe_seed)
    report = AuditReport(kind=str(kind), checks=checks)
    if report.passed:
        console.echo(message=f"Audit completed: {len(checks)} checks, no violations.", level=LogLevel.SUCCESS)
    else:
        tags = ", ".join(check.tag for check in report.violations)
        console.echo(message=f"Audit completed with violated assumptions: {tags}.", level=LogLevel.WARNING)
    return report
