"""Provides the controlled Markov chain that schedules which components of an asynchronous iterate are updated at each
iteration, together with the stationary-distribution analytics used to bound the minimum update proportion η.
"""

from abc import ABC, abstractmethod
from math import gcd
from typing import TYPE_CHECKING
from functools import reduce
from dataclasses import field, dataclass

import numpy as np
from scipy import linalg
from numpy.typing import NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from ataraxis_base_utilities import console

from .errors import KernelValidityError, AssumptionViolationError

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

_ROW_SUM_TOLERANCE: float = 1e-9
"""The largest deviation of a sampled kernel row's sum from 1 tolerated during a run."""
_DECLARED_ROW_TOLERANCE: float = 1e-12
"""The largest deviation of a declared (constant) kernel row's sum from 1 tolerated at construction."""
_STATIONARY_RESIDUAL: float = 1e-10
"""The largest fixed-point residual accepted for a computed stationary distribution."""


@dataclass(frozen=True)
class UpdateFamily:
    """Defines the family of component subsets that can be updated together during a single iteration.

    Notes:
        Subsets are normalized to sorted tuples. The family is validated at construction: subsets must be distinct,
        non-empty and inside {0, ..., K-1}, and every component must belong to at least one subset.
    """

    subsets: tuple[tuple[int, ...], ...]
    """The ordered subsets that the scheduler chooses from. Subset indices refer to positions in this tuple."""
    n_components: int
    """The number of components K of the scheduled iterate."""
    component_cover: tuple[tuple[int, ...], ...] = field(init=False)
    """For each component, the indices of the subsets that contain it."""
    membership: NDArray[np.bool_] = field(init=False, repr=False, compare=False)
    """The (subsets, components) boolean matrix whose entry is True when the subset contains the component."""

    def __post_init__(self) -> None:
        """Normalizes and validates the family and derives the component cover."""
        normalized = tuple(tuple(sorted(int(index) for index in subset)) for subset in self.subsets)
        object.__setattr__(self, "subsets", normalized)

        if len(normalized) == 0:
            message = "Unable to create the update family. The family must contain at least one subset."
            console.error(message=message, error=ValueError)

        for position, subset in enumerate(normalized):
            if len(subset) == 0:
                message = f"Unable to create the update family. Subset {position} is empty."
                console.error(message=message, error=ValueError)
            if len(set(subset)) != len(subset):
                message = f"Unable to create the update family. Subset {position} lists a component twice."
                console.error(message=message, error=ValueError)
            if subset[0] < 0 or subset[-1] >= self.n_components:
                message = (
                    f"Unable to create the update family. Subset {position} references components outside "
                    f"[0, {self.n_components - 1}]."
                )
                console.error(message=message, error=ValueError)

        if len(set(normalized)) != len(normalized):
            message = "Unable to create the update family. Subsets must be distinct."
            console.error(message=message, error=ValueError)

        membership = np.zeros((len(normalized), self.n_components), dtype=np.bool_)
        for position, subset in enumerate(normalized):
            membership[position, list(subset)] = True
        object.__setattr__(self, "membership", membership)

        uncovered = np.flatnonzero(~membership.any(axis=0))
        if uncovered.size > 0:
            message = (
                f"Unable to create the update family. Components {uncovered.tolist()} do not belong to any subset, so "
                f"they would never be updated. This violates (A4)(b)."
            )
            console.error(message=message, error=AssumptionViolationError)

        cover = tuple(tuple(int(index) for index in np.flatnonzero(membership[:, i])) for i in range(self.n_components))
        object.__setattr__(self, "component_cover", cover)

    @property
    def size(self) -> int:
        """Returns the number of subsets in the family."""
        return len(self.subsets)

    @classmethod
    def singletons(cls, n_components: int) -> UpdateFamily:
        """Creates the family in which every subset contains exactly one component."""
        return cls(subsets=tuple((i,) for i in range(n_components)), n_components=n_components)

    @classmethod
    def full(cls, n_components: int) -> UpdateFamily:
        """Creates the family with a single subset that contains all components (synchronous updates)."""
        return cls(subsets=(tuple(range(n_components)),), n_components=n_components)


class TransitionKernel(ABC):
    """Defines the interface of the kernel P(x) that drives the update-subset Markov chain.

    The next subset depends only on the current subset and the current iterate.
    """

    lipschitz_probe_step: float = 1e-4
    """The perturbation used when probing the Lipschitz continuity of x ↦ P(x)."""

    @abstractmethod
    def row(self, current: int, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Returns the probability row over subset indices for the input current subset and iterate."""
        raise NotImplementedError

    @property
    def depends_on_state(self) -> bool:
        """Returns True if the kernel rows depend on the iterate."""
        return True


class StaticKernel(TransitionKernel):
    """Wraps a constant row-stochastic matrix declared in the experiment configuration.

    Args:
        matrix: The (subsets, subsets) transition matrix.

    Raises:
        KernelValidityError: If the matrix is not square, has negative entries, or has rows that do not sum to 1.
    """

    def __init__(self, matrix: NDArray[np.float64] | list[list[float]]) -> None:
        array = np.asarray(matrix, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:  # noqa: PLR2004
            message = f"Unable to create the static kernel. The matrix must be square, but got shape {array.shape}."
            console.error(message=message, error=KernelValidityError)
        for index in range(array.shape[0]):
            _validate_row(row=array[index], n_subsets=array.shape[0], tolerance=_DECLARED_ROW_TOLERANCE)
        self._matrix = array
        self._matrix.setflags(write=False)

    @property
    def matrix(self) -> NDArray[np.float64]:
        """Returns the read-only transition matrix."""
        return self._matrix

    @property
    def depends_on_state(self) -> bool:
        """Returns False, as static kernels ignore the iterate."""
        return False

    def row(self, current: int, x: NDArray[np.float64]) -> NDArray[np.float64]:  # noqa: ARG002
        """Returns the matrix row of the current subset."""
        return self._matrix[current]


class CallableKernel(TransitionKernel):
    """Wraps a function (current subset, iterate) → probability row, such as the policy-dependent MDP scheduler.

    Args:
        function: The function that computes the probability row.
        n_subsets: The number of subsets in the scheduled family.
        lipschitz_probe_step: The perturbation used by the Lipschitz probe.
    """

    def __init__(
        self,
        function: Callable[[int, NDArray[np.float64]], NDArray[np.float64]],
        n_subsets: int,
        lipschitz_probe_step: float = 1e-4,
    ) -> None:
        self._function = function
        self.n_subsets = n_subsets
        self.lipschitz_probe_step = lipschitz_probe_step

    def row(self, current: int, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluates the wrapped function."""
        return np.asarray(self._function(current, x), dtype=np.float64)


@dataclass(frozen=True)
class OccupancyRecord:
    """Stores the empirical subset frequencies w_n(I)/n and component update proportions ν_n(i)/n of a run."""

    subset_counts: NDArray[np.int64]
    """The number of iterations in which each subset was drawn."""
    component_counts: NDArray[np.int64]
    """The number of iterations in which each component was updated."""
    iterations: int
    """The run length n."""

    @property
    def w(self) -> NDArray[np.float64]:
        """Returns the empirical subset frequencies."""
        return self.subset_counts / float(self.iterations)

    @property
    def nu_fraction(self) -> NDArray[np.float64]:
        """Returns the empirical component update proportions."""
        return self.component_counts / float(self.iterations)


@dataclass(frozen=True)
class SupportGraphReport:
    """Stores the structural properties of the support graph of a kernel evaluated at a single iterate."""

    n_strong_components: int
    """The number of strongly connected components. Irreducible chains have exactly one."""
    period: int
    """The period of the chain. Aperiodic chains have period 1. Only meaningful for irreducible chains."""

    @property
    def irreducible(self) -> bool:
        """Returns True if the chain is irreducible."""
        return self.n_strong_components == 1

    @property
    def aperiodic(self) -> bool:
        """Returns True if the chain is aperiodic."""
        return self.period == 1


def _validate_row(row: NDArray[np.float64], n_subsets: int, tolerance: float = _ROW_SUM_TOLERANCE) -> None:
    """Verifies that the input row is a probability vector over the subset family.

    Raises:
        KernelValidityError: If the row has the wrong size, negative or non-finite entries, or does not sum to 1.
    """
    if row.shape != (n_subsets,):
        message = f"Invalid kernel row. Expected {n_subsets} entries, but got shape {row.shape}."
        console.error(message=message, error=KernelValidityError)
    if not np.all(np.isfinite(row)) or np.min(row) < 0.0:
        message = f"Invalid kernel row. Entries must be finite and non-negative, but got {row.tolist()}."
        console.error(message=message, error=KernelValidityError)
    total = float(np.sum(row))
    if abs(total - 1.0) > tolerance:
        message = f"Invalid kernel row. Entries must sum to 1 within {tolerance}, but they sum to {total!r}."
        console.error(message=message, error=KernelValidityError)


def sample_index(cumulative: NDArray[np.float64], u: float) -> int:
    """Returns the first index whose cumulative probability exceeds the uniform draw u.

    Notes:
        The compiled simulation kernels implement the same inverse-CDF rule. The result is clamped to the last index
        to absorb rounding in the final cumulative entry.
    """
    return min(int(np.searchsorted(cumulative, u, side="right")), cumulative.size - 1)


def kernel_matrix(kernel: TransitionKernel, family: UpdateFamily, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Evaluates the full (subsets, subsets) transition matrix of the kernel at the input iterate.

    Raises:
        KernelValidityError: If any row is not a probability vector.
    """
    matrix = np.empty((family.size, family.size), dtype=np.float64)
    for current in range(family.size):
        row = kernel.row(current, x)
        _validate_row(row=row, n_subsets=family.size)
        matrix[current] = row
    return matrix


def step(
    kernel: TransitionKernel,
    family: UpdateFamily,
    current: int,
    x: NDArray[np.float64],
    rng: np.random.Generator,
) -> int:
    """Samples the next update subset of the scheduling chain.

    Args:
        kernel: The transition kernel of the chain.
        family: The update family whose subsets the chain moves between.
        current: The index of the current subset.
        x: The current iterate.
        rng: The scheduler stream. Exactly one uniform draw is consumed.

    Returns:
        The index of the next subset.

    Raises:
        KernelValidityError: If the sampled row is not a probability vector.
    """
    if not 0 <= current < family.size:
        message = f"Unable to advance the scheduler. Subset index {current} is outside [0, {family.size - 1}]."
        console.error(message=message, error=ValueError)
    row = kernel.row(current, x)
    _validate_row(row=row, n_subsets=family.size)
    return sample_index(cumulative=np.cumsum(row), u=float(rng.random()))


class UpdateScheduler:
    """Owns the state of one update-scheduling chain: its kernel, family, current subset and random stream.

    Notes:
        Each scheduler instance is confined to a single worker. Independent replicates use independently seeded
        schedulers.

    Args:
        kernel: The transition kernel of the chain.
        family: The update family.
        initial_subset: The index of the subset the chain starts from.
        rng: The scheduler random stream.
    """

    def __init__(
        self, kernel: TransitionKernel, family: UpdateFamily, initial_subset: int, rng: np.random.Generator
    ) -> None:
        if not 0 <= initial_subset < family.size:
            message = (
                f"Unable to create the update scheduler. The initial subset {initial_subset} is outside "
                f"[0, {family.size - 1}]."
            )
            console.error(message=message, error=ValueError)
        self.kernel = kernel
        self.family = family
        self.current = initial_subset
        self.rng = rng

    def advance(self, x: NDArray[np.float64]) -> int:
        """Draws the next subset using the scheduler's own stream and returns its index."""
        self.current = step(kernel=self.kernel, family=self.family, current=self.current, x=x, rng=self.rng)
        return self.current

    def advance_with(self, x: NDArray[np.float64], u: float) -> int:
        """Draws the next subset using a pre-drawn uniform variate and returns its index."""
        row = self.kernel.row(self.current, x)
        _validate_row(row=row, n_subsets=self.family.size)
        self.current = sample_index(cumulative=np.cumsum(row), u=u)
        return self.current


def support_graph_report(kernel: TransitionKernel, family: UpdateFamily, x: NDArray[np.float64]) -> SupportGraphReport:
    """Analyzes the support graph of the kernel evaluated at the input iterate.

    Counts strongly connected components and computes the period as the gcd of level(u) + 1 - level(v) over all edges
    u → v, where levels are breadth-first distances from subset 0. For an irreducible chain this gcd equals the gcd of
    all cycle lengths.
    """
    matrix = kernel_matrix(kernel=kernel, family=family, x=x)
    graph = csr_matrix(matrix > 0.0)
    n_strong, _ = connected_components(graph, directed=True, connection="strong")
    if n_strong != 1:
        return SupportGraphReport(n_strong_components=int(n_strong), period=0)

    order, predecessors = breadth_first_order(graph, i_start=0, directed=True, return_predecessors=True)
    levels = np.zeros(family.size, dtype=np.int64)
    for node in order[1:]:
        levels[node] = levels[predecessors[node]] + 1

    sources, targets = np.nonzero(matrix > 0.0)
    differences = np.abs(levels[sources] + 1 - levels[targets])
    period = reduce(gcd, (int(value) for value in differences), 0)
    return SupportGraphReport(n_strong_components=1, period=period)


def validate_chain(kernel: TransitionKernel, family: UpdateFamily, x: NDArray[np.float64]) -> None:
    """Verifies that the scheduling chain is irreducible and aperiodic at the input iterate.

    Raises:
        AssumptionViolationError: If the chain is reducible or periodic, citing (A4)(b).
    """
    report = support_graph_report(kernel=kernel, family=family, x=x)
    if not report.irreducible:
        message = (
            f"The update-scheduling chain is reducible: its support graph has {report.n_strong_components} strongly "
            f"connected components. This violates (A4)(b)."
        )
        console.error(message=message, error=AssumptionViolationError)
    if not report.aperiodic:
        message = f"The update-scheduling chain is periodic with period {report.period}. This violates (A4)(b)."
        console.error(message=message, error=AssumptionViolationError)


def stationary_distribution(
    kernel: TransitionKernel, family: UpdateFamily, x: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Computes the stationary distribution π_x of the scheduling chain at the input iterate.

    Solves the balance equations π (P_x - I) = 0 with the normalization Σ π = 1 by a dense linear solve.

    Args:
        kernel: The transition kernel of the chain.
        family: The update family.
        x: The iterate at which the kernel is evaluated.

    Returns:
        The stationary distribution over subset indices.

    Raises:
        AssumptionViolationError: If the chain is reducible or periodic at x.
        RuntimeError: If the solve does not reach the required fixed-point residual.
    """
    validate_chain(kernel=kernel, family=family, x=x)
    matrix = kernel_matrix(kernel=kernel, family=family, x=x)
    size = family.size

    # Replaces the last balance equation with the normalization constraint.
    system = matrix.T - np.eye(size)
    system[-1, :] = 1.0
    rhs = np.zeros(size, dtype=np.float64)
    rhs[-1] = 1.0
    distribution = linalg.solve(system, rhs)
    distribution = np.maximum(distribution, 0.0)
    distribution /= np.sum(distribution)

    residual = float(np.max(np.abs(distribution @ matrix - distribution)))
    if residual > _STATIONARY_RESIDUAL:
        message = (
            f"Unable to compute the stationary distribution of the update-scheduling chain. The fixed-point residual "
            f"{residual:.3e} exceeds {_STATIONARY_RESIDUAL:.0e}."
        )
        console.error(message=message, error=RuntimeError)
    return distribution


def component_masses(kernel: TransitionKernel, family: UpdateFamily, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Returns, for every component i, the stationary mass Σ_{I ∈ I(i)} π_x(I) of the subsets that contain it."""
    distribution = stationary_distribution(kernel=kernel, family=family, x=x)
    masses: NDArray[np.float64] = distribution @ family.membership.astype(np.float64)
    return masses


def min_update_proportion(
    kernel: TransitionKernel, family: UpdateFamily, x_grid: Sequence[NDArray[np.float64]]
) -> float:
    """Estimates the minimum update proportion η over a finite grid of iterates.

    Args:
        kernel: The transition kernel of the chain.
        family: The update family.
        x_grid: The iterates at which the stationary distributions are evaluated. Typically, this combines a
            user-supplied grid with iterates sampled from a run.

    Returns:
        The minimum over grid points and components of the stationary mass of the subsets covering the component.

    Raises:
        ValueError: If the grid is empty.
        AssumptionViolationError: If the chain is reducible or periodic at any grid point.
    """
    if len(x_grid) == 0:
        message = "Unable to estimate the minimum update proportion. The iterate grid is empty."
        console.error(message=message, error=ValueError)
    return float(min(np.min(component_masses(kernel=kernel, family=family, x=x)) for x in x_grid))


def occupancy(subset_sequence: Sequence[int] | NDArray[np.integer], family: UpdateFamily) -> OccupancyRecord:
    """Computes the empirical subset frequencies and component update proportions of a run.

    Args:
        subset_sequence: The indices of the subsets drawn at each iteration.
        family: The update family.

    Returns:
        The OccupancyRecord of the run. Counts are integers, so the bookkeeping identities hold exactly.
    """
    sequence = np.asarray(subset_sequence, dtype=np.int64)
    if sequence.size == 0:
        message = "Unable to compute the occupancy record. The run must contain at least one iteration."
        console.error(message=message, error=ValueError)
    subset_counts = np.bincount(sequence, minlength=family.size).astype(np.int64)
    component_counts = subset_counts @ family.membership.astype(np.int64)
    return OccupancyRecord(
        subset_counts=subset_counts, component_counts=component_counts, iterations=int(sequence.size)
    )


def lipschitz_probe(
    kernel: TransitionKernel,
    family: UpdateFamily,
    x_grid: Sequence[NDArray[np.float64]],
    step_size: float | None = None,
) -> float:
    """Estimates the Lipschitz constant of x ↦ P(x) by coordinate perturbations around each grid point.

    Returns:
        The largest ratio of the entrywise sup-norm change of the kernel matrix to the perturbation size. Static
        kernels return 0.
    """
    if not kernel.depends_on_state:
        return 0.0
    step_value = kernel.lipschitz_probe_step if step_size is None else step_size
    constant = 0.0
    for x in x_grid:
        base = kernel_matrix(kernel=kernel, family=family, x=x)
        for coordinate in range(x.size):
            shifted = x.copy()
            shifted[coordinate] += step_value
            change = float(np.max(np.abs(kernel_matrix(kernel=kernel, family=family, x=shifted) - base)))
            constant = max(constant, change / step_value)
    return constant
