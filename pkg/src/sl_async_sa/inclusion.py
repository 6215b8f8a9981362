"""Provides numerical flows of the differential inclusion ẋ ∈ Ω^ε F(x) and the diagnostics that compare logged
stochastic approximation trajectories with them.

Flows are approximated by finite bundles of explicit Euler paths, each following one selection policy. The
asymptotic pseudo-trajectory distance uses the optimistic min-over-bundle surrogate for the distance to the set-valued
flow, so it is reported together with the bundle size. The Kushner–Clark monitors, relative step-size integrals and
Lyapunov checks are pure reductions of logs and probes.
"""

from enum import StrEnum
from typing import TYPE_CHECKING, Any
from pathlib import Path  # noqa: TC003
from dataclasses import field, dataclass

import numpy as np
import polars as pl
from numpy.typing import NDArray
from ataraxis_base_utilities import console

from .sa_engine import TrajectoryLog, m_bar, interpolate, interpolate_many
from .mean_field import ScaledField, TiePolicies, select, clamp_relative_steps

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

_MAXIMUM_TIME_STEP: float = 0.1
"""The largest Euler time step accepted by flow samplers."""
_GRID_TOLERANCE: float = 1e-9
"""The relative slack used when checking that the horizon is a multiple of the time step."""
_BLOW_UP_FACTOR: float = 10.0
"""The multiple of the growth bound c(1 + ‖x0‖) beyond which an Euler path is aborted."""
_INNER_PRODUCT_TOLERANCE: float = 1e-8
"""The largest inner product ⟨∇W(x), ω f⟩ accepted by the Lyapunov check."""
_FINITE_DIFFERENCE_STEP: float = 1e-6
"""The central finite-difference step used when a Lyapunov function provides no gradient."""
_FLOW_DECREASE_TOLERANCE: float = 1e-9
"""The slack tolerated when checking that W does not increase along a flow path."""


class SelectionPolicies(StrEnum):
    """Defines the rules that choose the scaling diagonal ω and the field element f at every Euler step."""

    FIXED_OMEGA = "fixed-omega"
    """Each path keeps one diagonal for its whole horizon."""
    RANDOM_OMEGA = "per-step-random-omega"
    """Each path draws a fresh interior diagonal and a random field vertex at every step."""
    CORNER_SWEEP = "corner-sweep"
    """Each path cycles through the box corners, one corner per step, starting at its own offset."""


@dataclass(frozen=True)
class FlowSampler:
    """Defines how finite bundles of Euler paths approximate the flow of ẋ ∈ Ω^ε F(x)."""

    field: ScaledField
    """The scaled field Ω^ε F."""
    dt: float = 0.01
    """The Euler time step. Must not exceed 0.1."""
    horizon: float = 10.0
    """The integration horizon T. Must be a multiple of dt."""
    policy: SelectionPolicies = SelectionPolicies.FIXED_OMEGA
    """The selection policy of the bundle."""
    levels: int = 3
    """The number of uniform diagonal levels c·1 added to fixed-omega bundles after the corners."""

    def __post_init__(self) -> None:
        """Resolves the policy and validates the time grid."""
        object.__setattr__(self, "policy", SelectionPolicies(self.policy))
        if not 0.0 < self.dt <= _MAXIMUM_TIME_STEP:
            message = (
                f"Unable to create the flow sampler. The time step must be in (0, {_MAXIMUM_TIME_STEP}], but got "
                f"{self.dt}."
            )
            console.error(message=message, error=ValueError)
        if self.horizon < 0.0:
            message = f"Unable to create the flow sampler. The horizon must be non-negative, but got {self.horizon}."
            console.error(message=message, error=ValueError)
        if abs(round(self.horizon / self.dt) * self.dt - self.horizon) > _GRID_TOLERANCE * max(1.0, self.horizon):
            message = (
                f"Unable to create the flow sampler. The horizon {self.horizon} is not a multiple of the time step "
                f"{self.dt}."
            )
            console.error(message=message, error=ValueError)

    @property
    def n_steps(self) -> int:
        """Returns the number of Euler steps per path."""
        return round(self.horizon / self.dt)

    def with_horizon(self, horizon: float) -> FlowSampler:
        """Returns a copy of the sampler with a different horizon."""
        return FlowSampler(field=self.field, dt=self.dt, horizon=horizon, policy=self.policy, levels=self.levels)


@dataclass
class FlowBundle:
    """Stores a finite bundle of Euler paths started at a common point."""

    times: NDArray[np.float64]
    """The time grid 0, dt, ..., T shared by all paths."""
    paths: NDArray[np.float64] = field(repr=False)
    """The (paths, steps + 1, dimension) array of path values. Aborted paths are NaN after the blow-up."""
    omegas: NDArray[np.float64] = field(repr=False)
    """The fixed block diagonal of every path. NaN rows mark paths whose diagonal changes every step."""
    vertices: NDArray[np.int64] = field(repr=False)
    """The field vertex followed by every path, or -1 when the path follows the field's selection."""
    blow_up: NDArray[np.bool_] = field(repr=False)
    """Marks the paths that were aborted by the growth-bound check."""

    @property
    def size(self) -> int:
        """Returns the number of paths."""
        return int(self.paths.shape[0])

    @property
    def terminal(self) -> NDArray[np.float64]:
        """Returns the (paths, dimension) array of terminal values."""
        return self.paths[:, -1, :]


def _configurations(
    sampler: FlowSampler, n_selections: int, rng: np.random.Generator
) -> tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Builds the fixed diagonals and vertex choices of a bundle.

    Diagonals are taken in order: the identity, the all-ε diagonal, the remaining box corners, the uniform levels, and
    random interior draws. Vertex choices cycle through -1 (the field's selection) and the vertex indices 0, 1, ...
    once the diagonal list is exhausted.
    """
    box = sampler.field.box
    ordered = [np.ones(box.n_blocks), np.full(box.n_blocks, box.epsilon), *box.corners(), *box.levels(sampler.levels)]
    candidates: list[NDArray[np.float64]] = []
    for candidate in ordered:
        if not any(np.allclose(candidate, kept) for kept in candidates):
            candidates.append(candidate)
    omegas = np.empty((n_selections, box.n_blocks), dtype=np.float64)
    vertices = np.full(n_selections, -1, dtype=np.int64)
    for path in range(n_selections):
        if path < len(candidates):
            omegas[path] = candidates[path]
        else:
            omegas[path] = box.sample(rng)
            vertices[path] = (path - len(candidates)) % 4 - 1
    if sampler.policy != SelectionPolicies.FIXED_OMEGA:
        omegas[:] = np.nan
    return omegas, vertices


def _element(
    sampler: FlowSampler,
    x: NDArray[np.float64],
    vertex: int,
    rng: np.random.Generator,
    randomize: bool,
) -> NDArray[np.float64]:
    """Returns the unscaled field element followed at x."""
    base = sampler.field.base
    candidates = base.vertices(x) if base.has_vertices else None
    if candidates is None:
        policy = TiePolicies.RANDOM if randomize else TiePolicies.LOWEST_INDEX
        return select(base, x, policy, rng)
    if randomize:
        return candidates[int(rng.integers(candidates.shape[0]))]
    if vertex < 0:
        return select(base, x, TiePolicies.LOWEST_INDEX, None)
    return candidates[vertex % candidates.shape[0]]


def euler_flow(
    sampler: FlowSampler, x0: NDArray[np.float64] | list[float], n_selections: int, rng: np.random.Generator
) -> FlowBundle:
    """Integrates a bundle of Euler paths x ← x + dt·ω·f of the scaled inclusion from x0.

    Args:
        sampler: The flow sampler.
        x0: The common starting point.
        n_selections: The number of paths in the bundle.
        rng: The flow stream. Provides the interior diagonals and the random selections.

    Returns:
        The FlowBundle. Paths whose norm exceeds 10·c(1 + ‖x0‖) are aborted, flagged and NaN-filled from that
        step on.
    """
    if n_selections < 1:
        message = f"Unable to integrate the flow bundle. At least one path is required, but got {n_selections}."
        console.error(message=message, error=ValueError)
    start = np.asarray(x0, dtype=np.float64)
    box = sampler.field.box
    steps = sampler.n_steps
    times = np.arange(steps + 1, dtype=np.float64) * sampler.dt
    paths = np.full((n_selections, steps + 1, start.size), np.nan, dtype=np.float64)
    paths[:, 0, :] = start
    omegas, vertices = _configurations(sampler=sampler, n_selections=n_selections, rng=rng)
    blow_up = np.zeros(n_selections, dtype=np.bool_)
    bound = _BLOW_UP_FACTOR * max(sampler.field.base.growth_constant, 1.0) * (1.0 + float(np.linalg.norm(start)))
    corners = box.corners()

    for path in range(n_selections):
        x = start.copy()
        for step in range(steps):
            if sampler.policy == SelectionPolicies.FIXED_OMEGA:
                omega = omegas[path]
            elif sampler.policy == SelectionPolicies.RANDOM_OMEGA:
                omega = box.sample(rng)
            else:
                omega = corners[(path + step) % corners.shape[0]]
            randomize = sampler.policy == SelectionPolicies.RANDOM_OMEGA
            f = _element(sampler=sampler, x=x, vertex=int(vertices[path]), rng=rng, randomize=randomize)
            x = x + sampler.dt * box.expand(omega) * f
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > bound:
                blow_up[path] = True
                break
            paths[path, step + 1] = x
    return FlowBundle(times=times, paths=paths, omegas=omegas, vertices=vertices, blow_up=blow_up)


@dataclass
class AptReport:
    """Stores the asymptotic pseudo-trajectory distances of a logged trajectory to sampled flow bundles."""

    window: float
    """The window length T."""
    probe_times: list[float]
    """The probe times t_1, ..., t_m."""
    distances: list[float]
    """The distances δ_j = max over the s-grid of the min over paths of ‖x̄(t_j + s) - path(s)‖."""
    bundle_size: int
    """The number of paths in every bundle."""
    blow_ups: list[int] = field(default_factory=list)
    """The number of aborted paths in the bundle of each probe."""

    @property
    def non_increasing(self) -> bool:
        """Returns True if the distances do not increase across probes."""
        return all(later <= earlier for earlier, later in zip(self.distances, self.distances[1:], strict=False))

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the report."""
        return {
            "window": self.window,
            "probe_times": self.probe_times,
            "distances": self.distances,
            "bundle_size": self.bundle_size,
            "blow_ups": self.blow_ups,
            "non_increasing": self.non_increasing,
        }


def apt_distance(
    log: TrajectoryLog,
    sampler: FlowSampler,
    probe_times: Sequence[float],
    rng: np.random.Generator,
    window: float | None = None,
    n_selections: int = 8,
) -> AptReport:
    """Measures how closely the interpolated trajectory shadows the sampled flow over windows [t_j, t_j + T].

    Every probe integrates a bundle with the same configuration (the same diagonals, vertex choices and random draws)
    from x̄(t_j) and compares it with x̄(t_j + s) on the Euler time grid.

    Args:
        log: The trajectory log.
        sampler: The flow sampler.
        probe_times: The probe times t_j.
        rng: The flow stream. A single seed drawn from it fixes the bundle configuration of all probes.
        window: The window length T. Defaults to the sampler horizon.
        n_selections: The bundle size.

    Returns:
        The AptReport.

    Raises:
        ValueError: If a probe window extends beyond the logged horizon.
    """
    length = sampler.horizon if window is None else window
    bundle_sampler = sampler.with_horizon(length)
    final_time = float(log.tau_bar[-1])
    if len(probe_times) == 0 or max(probe_times) + length > final_time or min(probe_times) < log.tau_bar[0]:
        message = (
            f"Unable to compute the pseudo-trajectory distance. Every probe window [t, t + {length}] must lie inside "
            f"the logged horizon [{log.tau_bar[0]}, {final_time}]."
        )
        console.error(message=message, error=ValueError)

    configuration_seed = int(rng.integers(np.iinfo(np.int64).max))
    report = AptReport(
        window=length, probe_times=[float(t) for t in probe_times], distances=[], bundle_size=n_selections
    )
    for probe in probe_times:
        bundle = euler_flow(
            sampler=bundle_sampler,
            x0=interpolate(log=log, t=float(probe)),
            n_selections=n_selections,
            rng=np.random.default_rng(configuration_seed),
        )
        trajectory = interpolate_many(log=log, times=np.minimum(float(probe) + bundle.times, final_time))
        gaps = np.linalg.norm(bundle.paths - trajectory[np.newaxis, :, :], axis=2)
        gaps = np.where(np.isnan(gaps), np.inf, gaps)
        report.distances.append(float(np.max(np.min(gaps, axis=0))))
        report.blow_ups.append(int(np.sum(bundle.blow_up)))
    return report


def write_apt_csv(report: AptReport, path: Path) -> None:
    """Writes the (probe_time, distance) trace of the report to a CSV file."""
    pl.DataFrame({"probe_time": report.probe_times, "distance": report.distances}).write_csv(path)


@dataclass(frozen=True)
class KushnerClarkReport:
    """Stores the windowed noise and averaging supremums that start at one iteration."""

    start: int
    """The first iteration n of the window."""
    end: int
    """The last iteration m̄(τ̄_n + T) of the window."""
    window: float
    """The window length T."""
    noise_sup: float
    """The sup over k of ‖Σ_{i=n}^{k-1} ᾱ_{i+1} M_{i+1} V_{i+1}‖."""
    averaging_sup: float
    """The sup over k of ‖Σ_{i=n}^{k-1} ᾱ_{i+1} (M_{i+1} - M̃_{i+1}) f_i‖ with M̃ = max(M, ε)."""
    epsilon: float
    """The floor ε used to build M̃."""
    tolerance: float
    """The averaging supremum above which the choice of ε is flagged."""

    @property
    def averaging_flagged(self) -> bool:
        """Returns True if the averaging supremum does not vanish, which indicates a mis-chosen ε."""
        return self.averaging_sup > self.tolerance

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the report."""
        return {
            "start": self.start,
            "end": self.end,
            "window": self.window,
            "noise_sup": self.noise_sup,
            "averaging_sup": self.averaging_sup,
            "epsilon": self.epsilon,
            "averaging_flagged": self.averaging_flagged,
        }


def _windowed_sup(increments: NDArray[np.float64]) -> float:
    """Returns the largest Euclidean norm of the partial sums of the increments (0 for empty windows)."""
    if increments.shape[0] == 0:
        return 0.0
    return float(np.max(np.linalg.norm(np.cumsum(increments, axis=0), axis=1)))


def kushner_clark_sup(
    log: TrajectoryLog, window: float, start: int, epsilon: float = 0.0, tolerance: float = 0.05
) -> KushnerClarkReport:
    """Computes the windowed Kushner–Clark noise supremum and its averaging companion from a log.

    Args:
        log: The trajectory log. Must carry the noise draws.
        window: The window length T in the intrinsic timescale.
        start: The first iteration n.
        epsilon: The floor ε of M̃. With 0 the averaging term vanishes identically.
        tolerance: The averaging supremum above which ε is flagged.

    Returns:
        The KushnerClarkReport of the window.

    Raises:
        ValueError: If the log carries no noise or the start is outside the log.
    """
    if not log.noise_logged:
        message = "Unable to compute the Kushner-Clark supremum. The trajectory log does not carry the noise draws."
        console.error(message=message, error=ValueError)
    if not 0 <= start < log.length:
        message = f"Unable to compute the Kushner-Clark supremum. The start {start} is outside [0, {log.length - 1}]."
        console.error(message=message, error=ValueError)

    end = min(m_bar(log=log, t=float(log.tau_bar[start]) + window), log.length)
    rows = slice(start, end)
    scaled = log.alpha_bar[rows, np.newaxis] * log.expanded_mu()[rows]
    noise_sup = _windowed_sup(scaled * log.noise[rows])

    mu = log.mu[rows]
    gap = mu - clamp_relative_steps(mu=mu, epsilon=epsilon)
    averaging = log.alpha_bar[rows, np.newaxis] * np.repeat(gap, log.block_size, axis=1) * log.f[rows]
    return KushnerClarkReport(
        start=start,
        end=end,
        window=window,
        noise_sup=noise_sup,
        averaging_sup=_windowed_sup(averaging),
        epsilon=epsilon,
        tolerance=tolerance,
    )


def kushner_clark_profile(
    log: TrajectoryLog, window: float, starts: Sequence[int], epsilon: float = 0.0, tolerance: float = 0.05
) -> list[KushnerClarkReport]:
    """Computes the Kushner–Clark reports of several windows of the same log."""
    return [
        kushner_clark_sup(log=log, window=window, start=start, epsilon=epsilon, tolerance=tolerance) for start in starts
    ]


def _cumulative_relative_steps(log: TrajectoryLog, t: float) -> NDArray[np.float64]:
    """Returns ∫_{τ̄_0}^{t} u_i(s) ds for every component, where u_i(s) = μ_{m̄(s)+1}(i)."""
    index = m_bar(log=log, t=t)
    weighted = log.alpha_bar[:index, np.newaxis] * log.mu[:index]
    total = np.sum(weighted, axis=0)
    if index < log.length:
        total = total + (t - float(log.tau_bar[index])) * log.mu[index]
    return total


def relative_step_integrals(log: TrajectoryLog, t: float, length: float) -> NDArray[np.float64]:
    """Returns ∫_t^{t+v} u_i(s) ds for every component, computed exactly from the piecewise-constant steps.

    Raises:
        ValueError: If the window is not inside the logged horizon.
    """
    if length < 0.0 or t < log.tau_bar[0] or t + length > log.tau_bar[-1]:
        message = (
            f"Unable to integrate the relative step sizes. The window [{t}, {t + length}] must lie inside "
            f"[{log.tau_bar[0]}, {log.tau_bar[-1]}]."
        )
        console.error(message=message, error=ValueError)
    return _cumulative_relative_steps(log=log, t=t + length) - _cumulative_relative_steps(log=log, t=t)


def relative_step_integral(log: TrajectoryLog, component: int, t: float, length: float) -> float:
    """Returns ∫_t^{t+v} u_i(s) ds for one component."""
    if not 0 <= component < log.n_components:
        message = (
            f"Unable to integrate the relative step sizes. The component {component} is outside "
            f"[0, {log.n_components - 1}]."
        )
        console.error(message=message, error=ValueError)
    return float(relative_step_integrals(log=log, t=t, length=length)[component])


@dataclass
class RelativeStepReport:
    """Stores the relative step-size integrals of several windows and their comparison with v·ε̂/2."""

    window_starts: list[float]
    """The window start times."""
    length: float
    """The window length v."""
    epsilon_hat: float
    """The empirical floor ε̂."""
    integrals: NDArray[np.float64] = field(repr=False)
    """The (windows, components) array of integrals."""

    @property
    def threshold(self) -> float:
        """Returns the acceptance threshold v·ε̂/2."""
        return 0.5 * self.length * self.epsilon_hat

    @property
    def passed(self) -> bool:
        """Returns True if every component reaches the threshold in every window."""
        return bool(np.all(self.integrals >= self.threshold))

    @property
    def flagged_components(self) -> list[int]:
        """Returns the components that stay below the threshold in every window, which signals an η-violation."""
        return [int(index) for index in np.flatnonzero(np.all(self.integrals < self.threshold, axis=0))]

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the report."""
        return {
            "window_starts": self.window_starts,
            "length": self.length,
            "epsilon_hat": self.epsilon_hat,
            "threshold": self.threshold,
            "minimum_integral": float(np.min(self.integrals)) if self.integrals.size else None,
            "passed": self.passed,
            "flagged_components": self.flagged_components,
        }


def relative_step_floor_check(
    log: TrajectoryLog, length: float, epsilon_hat: float, window_starts: Sequence[float]
) -> RelativeStepReport:
    """Integrates every component's relative step sizes over windows [t, t + v] and compares them with v·ε̂/2."""
    integrals = np.asarray(
        [relative_step_integrals(log=log, t=float(start), length=length) for start in window_starts], dtype=np.float64
    ).reshape(len(window_starts), log.n_components)
    return RelativeStepReport(
        window_starts=[float(start) for start in window_starts],
        length=length,
        epsilon_hat=epsilon_hat,
        integrals=integrals,
    )


@dataclass(frozen=True)
class LyapunovCandidate:
    """Defines a candidate Lyapunov function W for the scaled inclusion together with its target set."""

    function: Callable[[NDArray[np.float64]], float]
    """The function W."""
    target: Callable[[NDArray[np.float64]], bool]
    """The membership test of the target set. Probes inside it are skipped."""
    gradient: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None
    """The analytic gradient of W. Differentiable functions without it fall back to central differences."""
    differentiable: bool = True
    """Determines whether W is differentiable at the probes. The inner-product condition needs a gradient."""

    def evaluate_gradient(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Returns the analytic gradient or its central finite-difference approximation with step 1e-6.

        Raises:
            ValueError: If W is declared non-differentiable and provides no gradient.
        """
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=np.float64)
        if not self.differentiable:
            message = (
                "Unable to verify the Lyapunov condition. The function is declared non-differentiable and provides no "
                "gradient."
            )
            console.error(message=message, error=ValueError)
        return central_difference(function=self.function, x=x)


def central_difference(
    function: Callable[[NDArray[np.float64]], float], x: NDArray[np.float64], step: float = _FINITE_DIFFERENCE_STEP
) -> NDArray[np.float64]:
    """Returns the central finite-difference gradient of the function at x."""
    point = np.asarray(x, dtype=np.float64)
    gradient = np.empty(point.size, dtype=np.float64)
    for coordinate in range(point.size):
        shift = np.zeros(point.size)
        shift[coordinate] = step
        gradient[coordinate] = (function(point + shift) - function(point - shift)) / (2.0 * step)
    return gradient


@dataclass
class LyapunovReport:
    """Stores the results of the Lyapunov inner-product and flow-decrease checks."""

    inner_products: list[float] = field(default_factory=list)
    """The largest ⟨∇W(x), ω f⟩ over corners and vertices at each probe outside the target set."""
    flow_violations: int = 0
    """The number of bundle paths along which W increased."""
    flow_paths: int = 0
    """The number of bundle paths checked for decrease."""
    skipped: int = 0
    """The number of probes inside the target set."""

    @property
    def max_inner_product(self) -> float:
        """Returns the largest inner product over all probes."""
        return max(self.inner_products, default=float("-inf"))

    @property
    def inner_product_passed(self) -> bool:
        """Returns True if every inner product is at most 1e-8."""
        return self.max_inner_product <= _INNER_PRODUCT_TOLERANCE

    @property
    def failed_probes(self) -> int:
        """Returns the number of probes with a positive inner product above the tolerance."""
        return sum(value > _INNER_PRODUCT_TOLERANCE for value in self.inner_products)

    @property
    def passed(self) -> bool:
        """Returns True if both checks passed."""
        return self.inner_product_passed and self.flow_violations == 0

    def to_dict(self) -> dict[str, Any]:
        """Returns the JSON-serializable form of the report."""
        return {
            "probes": len(self.inner_products),
            "skipped": self.skipped,
            "max_inner_product": self.max_inner_product if self.inner_products else None,
            "failed_probes": self.failed_probes,
            "flow_paths": self.flow_paths,
            "flow_violations": self.flow_violations,
            "passed": self.passed,
        }


def lyapunov_check(
    candidate: LyapunovCandidate,
    sampler: FlowSampler,
    probes: Sequence[NDArray[np.float64]],
    rng: np.random.Generator,
    flow_selections: int = 0,
) -> LyapunovReport:
    """Verifies the Lyapunov inner-product condition and, optionally, the decrease of W along flow bundles.

    At every probe outside the target set computes the largest ⟨∇W(x), ω f⟩ over the box corners ω and the field
    vertices f (or the field's selection for black-box fields). With flow_selections > 0, also integrates a bundle from
    every such probe and counts the paths along which W rises above its starting value.

    Args:
        candidate: The candidate Lyapunov function.
        sampler: The flow sampler, whose field and box define the inclusion.
        probes: The probe points.
        rng: The flow stream used by the flow-decrease check.
        flow_selections: The bundle size of the flow-decrease check. 0 disables it.

    Returns:
        The LyapunovReport.
    """
    scaled = sampler.field
    corners = np.asarray([scaled.box.expand(corner) for corner in scaled.box.corners()])
    report = LyapunovReport()
    for probe in probes:
        x = np.asarray(probe, dtype=np.float64)
        if candidate.target(x):
            report.skipped += 1
            continue
        gradient = candidate.evaluate_gradient(x)
        elements = scaled.base.vertices(x) if scaled.base.has_vertices else None
        if elements is None:
            elements = select(scaled.base, x)[np.newaxis, :]
        inner = (corners * gradient[np.newaxis, :]) @ elements.T
        report.inner_products.append(float(np.max(inner)))

        if flow_selections > 0:
            bundle = euler_flow(sampler=sampler, x0=x, n_selections=flow_selections, rng=rng)
            start_value = candidate.function(x)
            for path in range(bundle.size):
                if bundle.blow_up[path]:
                    continue
                report.flow_paths += 1
                values = [candidate.function(point) for point in bundle.paths[path]]
                if max(values) > start_value + _FLOW_DECREASE_TOLERANCE * max(1.0, abs(start_value)):
                    report.flow_violations += 1
    return report


def gradient_cross_check(candidate: LyapunovCandidate, probes: Sequence[NDArray[np.float64]]) -> float:
    """Returns the largest relative gap ‖g - g_fd‖∞ / ‖g‖∞ between analytic and finite-difference gradients.

    Raises:
        ValueError: If the function provides no analytic gradient.
    """
    if candidate.gradient is None:
        message = "Unable to cross-check the Lyapunov gradient. The function provides no analytic gradient."
        console.error(message=message, error=ValueError)
    largest = 0.0
    for probe in probes:
        x = np.asarray(probe, dtype=np.float64)
        analytic = candidate.evaluate_gradient(x)
        numeric = central_difference(function=candidate.function, x=x)
        scale = max(float(np.max(np.abs(analytic))), 1e-12)
        largest = max(largest, float(np.max(np.abs(analytic - numeric))) / scale)
    return largest
