import math

import numpy as np
import pytest

from carnotlab import preset
from carnotlab.grid import (
    Field,
    GridSpec,
    SolverParams,
    bump_field,
    constant_field,
    default_grid,
    dump_field_csv,
    load_field_csv,
    make_ball_mask,
    max_stable_dt,
    node_coordinates,
)
from carnotlab.vfields import left_invariant_fields

H1 = preset("heisenberg1")


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((0.0,), (1.0,), (2,))  # fewer than 3 nodes
    with pytest.raises(ValueError):
        GridSpec((0.0, 0.0), (1.0,), (3, 3))
    g = GridSpec((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), (5, 5, 5))
    assert g.spacings == (0.5, 0.5, 0.5)
    assert g.num_nodes == 125


def test_default_grid_shape():
    g = default_grid()
    assert g.shape == (41, 41, 41)
    assert g.lower == (-2.0, -2.0, -2.0)
    assert g.upper == (2.0, 2.0, 2.0)


def test_field_validation():
    grid = default_grid(nodes=5)
    with pytest.raises(ValueError):
        Field(grid, np.zeros((4, 5, 5)))
    with pytest.raises(ValueError):
        Field(grid, np.full((5, 5, 5), np.nan))
    f = Field(grid, np.zeros((2, 5, 5, 5)))
    assert f.is_vector


def test_solver_params_validation():
    SolverParams(sigma=0.25)
    with pytest.raises(ValueError):
        SolverParams(sigma=-1.0)
    with pytest.raises(ValueError):
        SolverParams(sigma=0.1, gamma=1.5)
    with pytest.raises(ValueError):
        SolverParams(sigma=0.1, cfl_safety=0.0)


def test_ball_mask_extremes():
    grid = default_grid(nodes=9)
    big = make_ball_mask(grid, H1, 100.0)
    assert big.inside.all()
    # even node count: no node at the identity, so a tiny ball is empty
    off_origin = default_grid(nodes=10)
    with pytest.raises(ValueError):
        make_ball_mask(off_origin, H1, 1e-9)


def test_ball_mask_vertical_threshold():
    # x3 axis carries weight 2: the unit ball cuts it at |x3| = 1
    grid = GridSpec((-0.1, -0.1, 0.97), (0.1, 0.1, 1.03), (3, 3, 4))
    mask = make_ball_mask(grid, H1, 1.0)
    axis3 = grid.axes()[2]
    i99 = int(np.argmin(np.abs(axis3 - 0.99)))
    i101 = int(np.argmin(np.abs(axis3 - 1.01)))
    assert mask.inside[1, 1, i99]
    assert not mask.inside[1, 1, i101]


def test_ball_mask_monotone_in_radius():
    grid = default_grid(nodes=21)
    radii = [0.4, 0.8, 1.2, 1.6]
    masks = [make_ball_mask(grid, H1, r) for r in radii]
    for small, large in zip(masks, masks[1:]):
        assert np.all(large.inside[small.inside])
        assert large.inside.sum() > small.inside.sum()


def test_ball_mask_boundary_layer_inside():
    grid = default_grid(nodes=21)
    mask = make_ball_mask(grid, H1, 1.0)
    assert mask.boundary_layer.any()
    assert np.all(mask.inside[mask.boundary_layer])


def test_max_stable_dt_unconstrained():
    grid = default_grid(nodes=9)
    vf = left_invariant_fields(H1)
    assert max_stable_dt(grid, H1, vf, 0.0, None) == math.inf


def test_max_stable_dt_h_squared_scaling():
    vf = left_invariant_fields(H1)
    coarse = default_grid(nodes=11)
    fine = GridSpec(coarse.lower, coarse.upper, (21, 21, 21))
    dt_c = max_stable_dt(coarse, H1, vf, 0.25, None)
    dt_f = max_stable_dt(fine, H1, vf, 0.25, None)
    assert np.isclose(dt_c / dt_f, 4.0, rtol=1e-12)


def test_max_stable_dt_reference_value():
    vf = left_invariant_fields(H1)
    grid = default_grid(nodes=41)  # h = 0.1 on [-2,2]
    dt = max_stable_dt(grid, H1, vf, 0.25, None)
    assert 0 < dt < 1
    # drift shrinks the bound
    b = np.array([1.0, -2.0])
    dt_b = max_stable_dt(grid, H1, vf, 0.25, b)
    assert dt_b < dt


def test_field_csv_round_trip(tmp_path):
    grid = default_grid(nodes=7)
    rng = np.random.default_rng(42)
    f = Field(grid, rng.normal(size=grid.shape) * 1e3, t=0.125)
    base = tmp_path / "field"
    dump_field_csv(f, base)
    back = load_field_csv(base)
    assert back.grid == f.grid
    assert back.t == f.t
    assert np.array_equal(back.values, f.values)  # bit-exact


def test_bump_field_normalized():
    grid = default_grid(nodes=21)
    f = bump_field(grid, H1, radius=1.2, normalize=True)
    assert np.isclose(f.integral(), 1.0, rtol=1e-13)
    assert f.values.min() >= 0.0
    xs, ys, zs = node_coordinates(grid)
    from carnotlab.groups import hom_norm

    pts = np.stack([xs, ys, zs], axis=-1)
    assert np.all(f.values[hom_norm(H1, pts) >= 1.2] == 0.0)


def test_constant_field_integral():
    # uniform node weights: the conserved discrete mass is sum * h^d
    grid = default_grid(nodes=9)
    c = constant_field(grid, 2.0)
    expected = 2.0 * grid.cell_volume * grid.num_nodes
    assert np.isclose(c.integral(), expected, rtol=1e-12)
