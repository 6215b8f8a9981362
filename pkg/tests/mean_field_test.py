"""Contains tests for the set-valued mean fields, the scaling box and the stochastic-approximation-map probes."""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.typing import NDArray

from sl_async_sa.mean_field import (
    OmegaBox,
    SignField,
    ScaledField,
    LinearField,
    TiePolicies,
    CallableField,
    SetValuedField,
    ProjectionField,
    BestResponseField,
    DisplacementField,
    scale,
    select,
    check_sa_map,
    hull_distance,
    best_response_set,
    clamp_relative_steps,
)


class _DoubledField(SetValuedField):
    """The polytopal field F(x) = conv{x, 2x}."""

    def __init__(self, dimension: int, growth_constant: float) -> None:
        self.dimension = dimension
        self.growth_constant = growth_constant

    def select(
        self,
        x: NDArray[np.float64],
        tie_policy: TiePolicies = TiePolicies.LOWEST_INDEX,  # noqa: ARG002
        rng: np.random.Generator | None = None,  # noqa: ARG002
    ) -> NDArray[np.float64]:
        return 1.5 * x

    def vertices(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.vstack([x, 2.0 * x])


def test_linear_field_selection() -> None:
    """Verifies that the single-valued field returns its only element."""
    field = LinearField(matrix=-np.eye(2))
    np.testing.assert_array_equal(select(field, np.array([2.0, -3.0])), [-2.0, 3.0])
    np.testing.assert_array_equal(field.vertices(np.array([2.0, -3.0])), [[-2.0, 3.0]])
    with pytest.raises(ValueError):
        LinearField(matrix=-np.eye(2), offset=[1.0])


def test_best_response_ties_resolve_to_the_lowest_index() -> None:
    """Verifies that the lowest-index policy plays the first tied action."""
    field = BestResponseField.from_table(np.array([[1.0, 1.0]]))
    np.testing.assert_array_equal(select(field, np.zeros(1)), [1.0, 0.0])
    np.testing.assert_array_equal(field.vertices(np.zeros(1)), [[1.0, 0.0], [0.0, 1.0]])


def test_sign_field_selects_the_hull_midpoint_at_kinks() -> None:
    """Verifies that the lowest-index policy picks 0 at a kink and that 0 lies in the hull of {-1, +1}."""
    field = SignField(dimension=1)
    x = np.zeros(1)
    chosen = select(field, x)
    np.testing.assert_array_equal(chosen, [0.0])
    assert hull_distance(vertices=field.vertices(x), point=chosen) <= 1e-9
    np.testing.assert_array_equal(select(field, np.array([-2.0])), [1.0])


def test_select_validation() -> None:
    """Verifies that the random policy needs a stream and that non-finite points are rejected."""
    field = SignField(dimension=1)
    with pytest.raises(ValueError):
        select(field, np.zeros(1), TiePolicies.RANDOM)
    with pytest.raises(ValueError):
        select(field, np.array([np.nan]))


@given(
    table=st.lists(st.lists(st.integers(min_value=0, max_value=2), min_size=3, max_size=3), min_size=1, max_size=3),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_best_response_selections_lie_in_the_hull(table: list[list[int]], seed: int) -> None:
    """Verifies that random tie-breaking always returns an element of the best-response hull."""
    field = BestResponseField.from_table(np.asarray(table, dtype=np.float64))
    x = np.zeros(1)
    chosen = select(field, x, TiePolicies.RANDOM, np.random.default_rng(seed))
    assert hull_distance(vertices=field.vertices(x), point=chosen) <= 1e-9
    assert np.sum(chosen) == len(table)


@pytest.mark.parametrize(
    ("row", "expected"),
    [
        ([1.0, 3.0, 2.0], (1,)),
        ([5.0, 5.0], (0, 1)),
        ([1.0, 1.0 + 1e-12, 0.0], (0, 1)),
    ],
)
def test_best_response_set(row: list[float], expected: tuple[int, ...]) -> None:
    """Verifies the tolerance-aware argmax."""
    assert best_response_set(q_row=np.asarray(row)) == expected


def test_displacement_field_subtracts_the_offset_block() -> None:
    """Verifies F(x) = h(x) - x on the selected slice of a concatenated input."""
    target = BestResponseField(q_function=lambda z: np.array([[z[0], 0.0]]), n_states=1, n_actions=2)
    field = DisplacementField(target=target, offset=1)
    z = np.array([1.0, 0.25, 0.75])
    np.testing.assert_allclose(select(field, z), [0.75, -0.75])
    np.testing.assert_allclose(field.vertices(z), [[0.75, -0.75]])
    assert field.has_vertices


def test_projection_field_keeps_the_iterate_inside_the_box() -> None:
    """Verifies that the projected displacement lands on the box boundary."""
    field = ProjectionField(base=LinearField(matrix=[[1.0]]), lower=[0.0], upper=[1.0])
    np.testing.assert_allclose(select(field, np.array([0.8])), [0.2])
    np.testing.assert_allclose(select(field, np.array([0.3])), [0.3])
    with pytest.raises(ValueError):
        ProjectionField(base=LinearField(matrix=[[1.0]]), lower=[1.0], upper=[0.0])


@pytest.mark.parametrize(
    ("epsilon", "omega", "f", "expected"),
    [
        (0.1, [1.0, 1.0], [3.0, -4.0], [3.0, -4.0]),
        (0.1, [0.1, 0.5], [10.0, -2.0], [1.0, -1.0]),
    ],
)
def test_scale(epsilon: float, omega: list[float], f: list[float], expected: list[float]) -> None:
    """Verifies the componentwise scaling by a box diagonal."""
    box = OmegaBox(epsilon=epsilon, n_blocks=2)
    np.testing.assert_allclose(scale(box=box, omega_diag=np.asarray(omega), f=np.asarray(f)), expected)


def test_scale_rejects_diagonals_below_epsilon() -> None:
    """Verifies that entries below ε are rejected."""
    with pytest.raises(ValueError):
        scale(box=OmegaBox(epsilon=0.2, n_blocks=2), omega_diag=np.array([0.15, 1.0]), f=np.array([1.0, 1.0]))


def test_omega_box_blocks_corners_and_levels() -> None:
    """Verifies the block expansion, the corner enumeration and the uniform levels of the box."""
    box = OmegaBox(epsilon=0.25, n_blocks=2, block_size=3)
    assert box.dimension == 6
    np.testing.assert_array_equal(box.expand(np.array([0.25, 1.0])), [0.25, 0.25, 0.25, 1.0, 1.0, 1.0])
    corners = box.corners()
    assert corners.shape == (4, 2)
    assert {tuple(corner) for corner in corners} == {(0.25, 0.25), (0.25, 1.0), (1.0, 0.25), (1.0, 1.0)}
    np.testing.assert_allclose(box.levels(count=3), [[0.25, 0.25], [0.625, 0.625], [1.0, 1.0]])
    assert box.contains(box.sample(np.random.default_rng(0)))
    assert not box.contains(np.array([0.5]))
    with pytest.raises(ValueError):
        OmegaBox(epsilon=0.0, n_blocks=2)


def test_scaled_field_vertices_cover_every_scaled_selection() -> None:
    """Verifies that every scaled selection lies in the hull of the corner-scaled vertices."""
    field = ScaledField(base=SignField(dimension=2), box=OmegaBox(epsilon=0.5, n_blocks=2))
    x = np.array([0.0, 1.0])
    vertices = field.vertices(x)
    assert vertices is not None
    rng = np.random.default_rng(7)
    for _ in range(10):
        omega = field.box.sample(rng)
        chosen = field.select(x, omega, TiePolicies.RANDOM, rng)
        assert hull_distance(vertices=vertices, point=chosen) <= 1e-9
    with pytest.raises(ValueError):
        ScaledField(base=SignField(dimension=2), box=OmegaBox(epsilon=0.5, n_blocks=3))


def test_clamp_relative_steps() -> None:
    """Verifies the ε-floor of the relative step sizes."""
    np.testing.assert_array_equal(clamp_relative_steps(np.array([0.0, 0.3, 1.0]), epsilon=0.1), [0.1, 0.3, 1.0])


def test_hull_distance_detects_points_outside_the_hull() -> None:
    """Verifies the L1 residual of the hull membership program."""
    vertices = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert hull_distance(vertices=vertices, point=np.array([0.5, 0.5])) <= 1e-9
    assert hull_distance(vertices=vertices, point=np.array([1.0, 1.0])) == pytest.approx(1.0, abs=1e-9)


def test_linear_field_passes_every_criterion() -> None:
    """Verifies the criteria report of F(x) = -x."""
    probes = [np.array([3.0, -1.0]), np.array([1.0, 0.5]), np.array([0.1, 0.0])]
    report = check_sa_map(field=LinearField(matrix=-np.eye(2)), probe_points=probes)
    assert report.convexity_passed
    assert report.growth_passed
    assert report.max_growth_ratio <= 1.0
    assert report.hull_sizes == [1, 1, 1]


def test_best_response_field_is_upper_semicontinuous_at_the_tie() -> None:
    """Verifies that probes approaching the tie hyperplane stay inside the segment between the unit vectors."""
    field = BestResponseField(q_function=lambda x: np.array([[x[0], 0.0]]), n_states=1, n_actions=2)
    probes = [np.array([value]) for value in (0.1, 0.01, 0.001, 0.0)]
    report = check_sa_map(field=field, probe_points=probes)
    assert report.hull_sizes[-1] == 2
    assert report.usc_passed
    assert max(report.usc_excess) <= 1e-9
    assert report.to_dict()["convexity_passed"] is True


def test_growth_ratio_of_a_doubling_field() -> None:
    """Verifies that conv{x, 2x} at ‖x‖ = 10 has growth ratio 20/11."""
    probe = [np.array([6.0, 8.0])]
    report = check_sa_map(field=_DoubledField(dimension=2, growth_constant=1.82), probe_points=probe)
    assert report.max_growth_ratio == pytest.approx(20.0 / 11.0)
    assert report.growth_passed
    failing = check_sa_map(field=_DoubledField(dimension=2, growth_constant=1.8), probe_points=probe)
    assert not failing.growth_passed


def test_check_sa_map_requires_vertices() -> None:
    """Verifies that black-box fields cannot be probed."""
    field = CallableField(function=lambda x: -x, dimension=1, growth_constant=1.0)
    with pytest.raises(ValueError):
        check_sa_map(field=field, probe_points=[np.zeros(1)])


def test_vertex_enumeration_stops_at_the_cap() -> None:
    """Verifies that fields with more vertices than the cap return None and that the check reports the gap."""
    assert SignField(dimension=12).vertices(np.zeros(12)).shape == (4096, 12)
    assert SignField(dimension=13).vertices(np.zeros(13)) is None
    assert BestResponseField.from_table(np.zeros((12, 2))).vertices(np.zeros(1)).shape == (4096, 24)
    assert BestResponseField.from_table(np.zeros((13, 2))).vertices(np.zeros(1)) is None

    report = check_sa_map(field=SignField(dimension=13), probe_points=[np.zeros(13), np.ones(13)])
    assert report.truncated_probes == 1
    assert report.hull_sizes == [1]
    assert report.usc_excess == []
    assert report.to_dict()["truncated_probes"] == 1
