"""Contains tests for the convergence assumption audit."""

import json
from pathlib import Path

from sl_async_sa.mdp import MdpModel
from sl_async_sa.audit import AssumptionCheck, AssumptionStatus, audit
from sl_async_sa.configuration import (
    BoxConfig,
    MdpConfig,
    FieldConfig,
    NoiseConfig,
    KernelConfig,
    ScheduleConfig,
    ExperimentKinds,
    ExperimentConfig,
)


def _single(kernel: KernelConfig | None = None) -> ExperimentConfig:
    """Returns a two-component single-sa configuration with the input kernel."""
    return ExperimentConfig(
        kind=ExperimentKinds.SINGLE_SA.value,
        initial_state=[1.0, -1.0],
        mean_field=FieldConfig(matrix=[[-1.0, 0.0], [0.0, -1.0]]),
        noise=NoiseConfig(scale=0.5),
        kernel=KernelConfig() if kernel is None else kernel,
    )


def test_single_timescale_audit_passes() -> None:
    """Verifies the status of every assumption of a well-posed single-timescale configuration."""
    report = audit(_single())
    assert report.passed
    assert report.status("(A1)(a)") == AssumptionStatus.UNVERIFIABLE
    assert report.status("(A1)(b)") == AssumptionStatus.VERIFIED
    assert report.status("(A2)") == AssumptionStatus.VERIFIED
    assert report.status("(A3)") == AssumptionStatus.EMPIRICAL
    assert report.status("(A4)(b)") == AssumptionStatus.VERIFIED
    assert report.status("(A5)") == AssumptionStatus.VERIFIED

    summary = report.to_dict()
    assert summary["passed"] is True
    assert summary["violations"] == []
    json.dumps(summary)


def test_declared_box_is_reported() -> None:
    """Verifies that a declared compact box is reported as enforced."""
    config = _single()
    config.box = BoxConfig(lower=[-2.0, -2.0], upper=[2.0, 2.0])
    assert audit(config).status("(A1)(a)") == AssumptionStatus.EMPIRICAL


def test_reducible_kernel_violates_the_scheduling_assumption() -> None:
    """Verifies that a kernel that never leaves its first subset is reported, not raised."""
    report = audit(_single(kernel=KernelConfig(matrix=[[1.0, 0.0], [0.0, 1.0]])))
    assert not report.passed
    assert report.status("(A4)(b)") == AssumptionStatus.VIOLATED
    assert report.to_dict()["violations"] == ["(A4)(b)"]


def test_periodic_kernel_violates_the_scheduling_assumption() -> None:
    """Verifies that an alternating kernel is flagged as periodic."""
    report = audit(_single(kernel=KernelConfig(matrix=[[0.0, 1.0], [1.0, 0.0]])))
    assert report.status("(A4)(b)") == AssumptionStatus.VIOLATED
    assert next(check for check in report.checks if check.tag == "(A4)(b)").evidence["period"] == 2


def test_coupled_audit_reports_the_timescale_ordering() -> None:
    """Verifies the (B2)(c) and (B6) checks of two-timescale configurations."""
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
    report = audit(config)
    assert report.status("(B2)(c)") == AssumptionStatus.VERIFIED
    assert report.status("(B6)") == AssumptionStatus.VERIFIED
    assert report.status("(B4)") == AssumptionStatus.VERIFIED

    config.schedule, config.fast_schedule = config.fast_schedule, config.schedule
    report = audit(config)
    assert report.status("(B2)(c)") == AssumptionStatus.VIOLATED

    config.fast_field = FieldConfig(matrix=[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    assert audit(config).status("(B6)") == AssumptionStatus.VIOLATED


def test_mdp_audit(tmp_path: Path) -> None:
    """Verifies the actor-critic audit on a random model and on a model whose state chain is reducible."""
    report = audit(ExperimentConfig(kind=ExperimentKinds.MDP_LEARN.value))
    assert report.status("(A1)(a)") == AssumptionStatus.VERIFIED
    assert report.status("(B4)") == AssumptionStatus.VERIFIED
    assert report.status("(B2)(c)") == AssumptionStatus.VERIFIED
    assert report.status("(B6)") == AssumptionStatus.VERIFIED

    path = tmp_path / "model.json"
    MdpModel(transitions=[[[1.0, 0.0]], [[0.0, 1.0]]], rewards=[[1.0], [0.0]], beta=0.5).to_json(path)
    config = ExperimentConfig(kind=ExperimentKinds.MDP_LEARN.value, mdp=MdpConfig(model_path=str(path)))
    report = audit(config)
    assert not report.passed
    assert report.status("(A4)(b)") == AssumptionStatus.VIOLATED


def test_assumption_check_serialization() -> None:
    """Verifies the dictionary form of one check."""
    check = AssumptionCheck(tag="(A2)", status=AssumptionStatus.EMPIRICAL, evidence={"x": 1})
    assert check.to_dict() == {"tag": "(A2)", "status": "empirically-supported", "evidence": {"x": 1}}
