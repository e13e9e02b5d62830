"""Frame calculus: symbolic oracles first, then the grid stencils against them."""

import itertools

import numpy as np
import sympy as sp

from carnotlab import preset
from carnotlab.grid import Field, constant_field, default_grid, node_coordinates
from carnotlab import vfields
from carnotlab.vfields import (
    apply_field_analytic,
    commutator_apply,
    coordinate_field,
    coordinate_symbols,
    divergence_analytic,
    holder_seminorm,
    horizontal_divergence,
    horizontal_gradient,
    horizontal_laplacian,
    left_invariant_fields,
    right_invariant_fields,
    stratonovich_correction,
)

H1 = preset("heisenberg1")
LEFT = left_invariant_fields(H1)
RIGHT = right_invariant_fields(H1)
X1, X2, X3 = coordinate_symbols(3)


def test_left_frame_on_center_coordinate():
    assert sp.simplify(apply_field_analytic(LEFT, 0, X3) + X2 / 2) == 0
    assert sp.simplify(apply_field_analytic(LEFT, 1, X3) - X1 / 2) == 0


def test_right_frame_on_center_coordinate():
    assert sp.simplify(apply_field_analytic(RIGHT, 0, X3) - X2 / 2) == 0
    assert sp.simplify(apply_field_analytic(RIGHT, 1, X3) + X1 / 2) == 0


def test_hoermander_bracket():
    # [X1, X2] acts as the missing vertical derivative
    assert sp.simplify(commutator_apply(LEFT, 0, LEFT, 1, X3) - 1) == 0
    assert sp.simplify(commutator_apply(LEFT, 0, LEFT, 1, X1)) == 0
    assert sp.simplify(commutator_apply(LEFT, 0, LEFT, 1, X2)) == 0


def _monomials_up_to(deg):
    for powers in itertools.product(range(deg + 1), repeat=3):
        if 0 < sum(powers) <= deg:
            yield X1 ** powers[0] * X2 ** powers[1] * X3 ** powers[2]


def test_left_right_fields_commute():
    for f in _monomials_up_to(4):
        for i in range(2):
            for j in range(2):
                assert sp.simplify(commutator_apply(LEFT, i, RIGHT, j, f)) == 0


def test_left_fields_divergence_free():
    for i in range(2):
        assert divergence_analytic(LEFT, i) == 0
        assert divergence_analytic(RIGHT, i) == 0


def test_stratonovich_correction_vanishes():
    # justifies using the plain Euler-Maruyama drift in the particle scheme
    corr = stratonovich_correction(LEFT)
    assert all(sp.simplify(c) == 0 for c in corr)


def test_gradient_of_constant_is_zero():
    grid = default_grid(nodes=11)
    g = horizontal_gradient(LEFT, constant_field(grid, 4.2))
    assert np.all(g.values == 0.0)


def test_gradient_exact_on_linear():
    grid = default_grid(nodes=11)
    xs, ys, zs = node_coordinates(grid)
    g = horizontal_gradient(LEFT, Field(grid, xs.copy()))
    assert np.allclose(g.values[0], 1.0, atol=1e-13)
    assert np.allclose(g.values[1], 0.0, atol=1e-13)


def test_gradient_exact_on_center_coordinate():
    grid = default_grid(nodes=11)
    xs, ys, zs = node_coordinates(grid)
    g = horizontal_gradient(LEFT, Field(grid, zs.copy()))
    assert np.abs(g.values[0] + ys / 2).max() <= 1e-13
    assert np.abs(g.values[1] - xs / 2).max() <= 1e-13


def test_laplacian_exact_cases():
    grid = default_grid(nodes=11)
    xs, ys, zs = node_coordinates(grid)
    assert np.allclose(
        horizontal_laplacian(LEFT, Field(grid, xs**2)).values, 2.0, atol=1e-12
    )
    assert np.abs(horizontal_laplacian(LEFT, Field(grid, zs.copy())).values).max() <= 1e-12
    assert np.all(horizontal_laplacian(LEFT, constant_field(grid, -3.0)).values == 0.0)


def test_divergence_trivial_cases():
    grid = default_grid(nodes=11)
    xs, ys, zs = node_coordinates(grid)
    const = Field(grid, np.stack([np.full(grid.shape, 2.0), np.full(grid.shape, -1.0)]))
    assert np.abs(horizontal_divergence(LEFT, const).values).max() <= 1e-13
    rot = Field(grid, np.stack([ys.copy(), -xs.copy()]))
    # X1 x2 + X2 (-x1) = 0
    assert np.abs(horizontal_divergence(LEFT, rot).values).max() <= 1e-12


def test_divergence_of_gradient_consistent_with_laplacian():
    # degree-4 data: the composed first-difference route and the expanded
    # second-order route commit different O(h^2) errors, which must shrink
    # at second order together
    f = lambda x, y, z: x**4 + y**4 + x * z**2
    errs = []
    for nodes in (21, 41):
        grid = default_grid(nodes=nodes)
        xs, ys, zs = node_coordinates(grid)
        fld = Field(grid, f(xs, ys, zs))
        via_div = horizontal_divergence(LEFT, horizontal_gradient(LEFT, fld))
        direct = horizontal_laplacian(LEFT, fld)
        sl = (slice(3, -3),) * 3
        errs.append(np.abs(via_div.values - direct.values)[sl].max())
    assert errs[0] > 1e-8  # genuinely inexact data, the order test is live
    assert np.log2(errs[0] / errs[1]) >= 1.9


def test_laplacian_stencil_order():
    # degree-4 family; interior error must drop at second order under refinement
    polys = [
        lambda x, y, z: x**4 + y**4,
        lambda x, y, z: x**2 * y**2 + z * x,
        lambda x, y, z: z**2 + x * y * z,
        lambda x, y, z: x**3 * y - y**2 * z,
    ]
    lap = {}
    for name, p in enumerate(polys):
        f = p(X1, X2, X3)
        exact = sp.expand(
            sp.diff(f, X1, 2)
            + sp.diff(f, X2, 2)
            + (X1**2 + X2**2) / 4 * sp.diff(f, X3, 2)
            + X1 * sp.diff(f, X2, X3)
            - X2 * sp.diff(f, X1, X3)
        )
        lap[name] = sp.lambdify((X1, X2, X3), exact, "numpy")
    for name, p in enumerate(polys):
        errs = []
        for nodes in (21, 41):
            grid = default_grid(nodes=nodes)
            xs, ys, zs = node_coordinates(grid)
            got = horizontal_laplacian(LEFT, Field(grid, p(xs, ys, zs))).values
            want = np.broadcast_to(lap[name](xs, ys, zs), grid.shape)
            sl = (slice(2, -2),) * 3
            errs.append(np.abs(got - want)[sl].max())
        if errs[0] <= 1e-11:
            assert errs[1] <= 1e-10  # stencil exact on this entry
        else:
            assert np.log2(errs[0] / errs[1]) >= 1.9


def test_grid_commutator_matches_vertical_derivative():
    # stencil commutator [X1, X2] recovers the vertical derivative on
    # cubic data, to second order or better
    f = lambda x, y, z: x**2 * y + z * y + x**3 * z
    df3 = lambda x, y, z: y + x**3
    errs = []
    for nodes in (21, 41):
        grid = default_grid(nodes=nodes)
        xs, ys, zs = node_coordinates(grid)
        fld = Field(grid, f(xs, ys, zs))
        g1 = horizontal_gradient(LEFT, fld)
        x1x2 = horizontal_gradient(LEFT, Field(grid, g1.values[1])).values[0]
        x2x1 = horizontal_gradient(LEFT, Field(grid, g1.values[0])).values[1]
        comm = x1x2 - x2x1
        # fixed comparison region so the two resolutions see the same points
        core = (np.abs(xs) <= 1.0) & (np.abs(ys) <= 1.0) & (np.abs(zs) <= 1.0)
        errs.append(np.abs(comm - df3(xs, ys, zs))[core].max())
    assert errs[1] <= 1e-8 or np.log2(errs[0] / errs[1]) >= 1.9


def test_coordinate_field_is_plain_derivative():
    vf = coordinate_field(3, 0)
    assert sp.simplify(apply_field_analytic(vf, 0, X1**2 + X3) - 2 * X1) == 0
    # does not commute with the left frame: the bracket with X2 survives
    assert sp.simplify(commutator_apply(vf, 0, LEFT, 1, X3)) != 0


def test_holder_seminorm_constant():
    grid = default_grid(nodes=9)
    assert holder_seminorm(constant_field(grid, 1.0), 0.5, H1, rng=np.random.default_rng(0)) == 0.0


def test_holder_seminorm_norm_function():
    grid = default_grid(nodes=21)
    xs, ys, zs = node_coordinates(grid)
    from carnotlab.groups import hom_norm

    pts = np.stack([xs, ys, zs], axis=-1)
    fld = Field(grid, hom_norm(H1, pts))
    h = grid.spacings[0]
    s = holder_seminorm(fld, 1.0, H1, rng=np.random.default_rng(1))
    assert s >= 1.0 - h
    assert np.isfinite(s)


def test_holder_seminorm_ramp_monotone_in_sharpness():
    grid = default_grid(nodes=21)
    xs, _, _ = node_coordinates(grid)
    vals = []
    for sharp in (2.0, 8.0):
        fld = Field(grid, np.tanh(sharp * xs))
        vals.append(holder_seminorm(fld, 0.5, H1, rng=np.random.default_rng(2)))
    assert vals[1] > vals[0]
