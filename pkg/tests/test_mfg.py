"""Coupled value/density iteration and its coupling operator."""

import math

import numpy as np
import pytest

from carnotlab import grid, groups, mfg
from carnotlab.flat_metric import DiscreteMeasure, MollifierSpec, flat_distance, kernel_field

G = groups.preset("heisenberg1")
SIGMA = 0.25


def box(n):
    return grid.GridSpec((-2.0,) * 3, (2.0,) * 3, (n,) * 3)


@pytest.fixture(scope="module")
def coupling21():
    gs = box(21)
    return gs, mfg.CouplingSpec(mollifier=MollifierSpec.build(0.8, gs, G), gain=1.0)


@pytest.fixture(scope="module")
def coupling15():
    gs = box(15)
    return gs, mfg.CouplingSpec(mollifier=MollifierSpec.build(0.9, gs, G), gain=1.0)


@pytest.fixture(scope="module")
def headline(coupling21):
    """T=0.1 run with the default bumps; the package's reference scenario."""
    gs, c = coupling21
    u_T = grid.bump_field(gs, G, radius=1.2)
    rho0 = grid.bump_field(gs, G, radius=1.4, normalize=True)
    return mfg.mfg_picard(u_T, rho0, c, SIGMA, 0.1, G)


# ---------------------------------------------------------------------------
# coupling operator
# ---------------------------------------------------------------------------

def test_coupling_preserves_mass_and_sup(coupling21):
    gs, c = coupling21
    X, Y, Z = grid.node_coordinates(gs)
    inside = (np.abs(X) <= 0.8) & (np.abs(Y) <= 0.8) & (np.abs(Z) <= 0.8)
    vals = inside / (inside.sum() * gs.cell_volume)
    rho = grid.Field(gs, vals, 0.0)
    out = mfg.coupling_eval(rho, c, G)
    assert out.integral() == pytest.approx(rho.integral(), abs=1e-8)
    assert out.sup_norm() <= rho.sup_norm() * (1 + 1e-12)


def test_coupling_gain_scales_linearly(coupling21):
    gs, c = coupling21
    rho = grid.bump_field(gs, G, radius=1.0, normalize=True)
    base = mfg.coupling_eval(rho, c, G)
    scaled = mfg.coupling_eval(rho, mfg.CouplingSpec(mollifier=c.mollifier, gain=2.5), G)
    assert np.allclose(scaled.values, 2.5 * base.values, rtol=0, atol=1e-14)


def test_coupling_dirac_is_extremal(coupling21):
    # a unit point mass comes back as the kernel itself, whose C1 size is
    # the uniform bound every probability density must respect
    gs, c = coupling21
    vals = np.zeros(gs.shape)
    vals[10, 10, 10] = 1.0 / gs.cell_volume
    dirac = grid.Field(gs, vals, 0.0)
    out = mfg.coupling_eval(dirac, c, G)
    ref = kernel_field(c.mollifier, gs, G)
    assert np.abs(out.values - ref.values).max() <= 1e-12 * ref.sup_norm()
    bound = mfg.c1_norm(out, G)
    rng = np.random.default_rng(5)
    for _ in range(4):
        ctr = tuple(rng.uniform(-0.35, 0.35, size=3))
        rho = grid.bump_field(gs, G, center=ctr, radius=1.0, normalize=True)
        assert mfg.c1_norm(mfg.coupling_eval(rho, c, G), G) <= bound * (1 + 1e-9)


def test_coupling_lipschitz_in_flat_distance(coupling21):
    # empirical Lipschitz ratio over horizontal translates of one profile;
    # vertical shifts would mix in the square-root scaling of the
    # quasi-distance, so the homogeneous family keeps shifts horizontal
    gs, c = coupling21
    rng = np.random.default_rng(42)
    ratios = []
    for _ in range(10):
        c1 = (*rng.uniform(-0.4, 0.4, size=2), 0.0)
        c2 = (*rng.uniform(-0.4, 0.4, size=2), 0.0)
        r1 = grid.bump_field(gs, G, center=c1, radius=1.0, normalize=True)
        r2 = grid.bump_field(gs, G, center=c2, radius=1.0, normalize=True)
        f1 = mfg.coupling_eval(r1, c, G)
        f2 = mfg.coupling_eval(r2, c, G)
        dn = mfg.c1_norm(grid.Field(gs, f1.values - f2.values, 0.0), G)
        mu = DiscreteMeasure.from_field(r1, coarsen=2)
        nu = DiscreteMeasure.from_field(r2, coarsen=2)
        res = flat_distance(mu, nu, G)
        assert res.ok
        ratios.append(dn / res.value)
    ratios = np.asarray(ratios)
    mean = ratios.mean()
    assert ratios.max() <= 1.2 * mean
    assert ratios.min() >= 0.8 * mean


# ---------------------------------------------------------------------------
# rotation helper
# ---------------------------------------------------------------------------

def test_rotation_image_is_a_quarter_turn():
    gs = box(9)
    X, _, _ = grid.node_coordinates(gs)
    f = grid.Field(gs, X.copy(), 0.0)
    r1 = mfg.rotation_image(f)
    # x1 pulls back to x2 under the turn
    assert np.abs(r1.values - grid.node_coordinates(gs)[1]).max() < 1e-12
    r4 = mfg.rotation_image(mfg.rotation_image(mfg.rotation_image(r1)))
    assert np.array_equal(r4.values, f.values)


def test_rotation_needs_square_axes():
    gs = grid.GridSpec((-2.0, -2.0, -1.0), (2.0, 2.0, 1.0), (9, 7, 5))
    with pytest.raises(ValueError):
        mfg.rotation_image(grid.constant_field(gs, 1.0))


# ---------------------------------------------------------------------------
# picard iteration
# ---------------------------------------------------------------------------

def test_picard_validates_inputs(coupling15):
    gs, c = coupling15
    u_T = grid.bump_field(gs, G, radius=1.2)
    rho0 = grid.bump_field(gs, G, radius=1.0, normalize=True)
    with pytest.raises(ValueError):
        mfg.mfg_picard(u_T, rho0, c, SIGMA, 0.1, G, theta=0.0)
    with pytest.raises(ValueError):
        mfg.mfg_picard(u_T, rho0, c, SIGMA, 0.1, G, theta=1.5)
    with pytest.raises(ValueError):
        mfg.mfg_picard(u_T, grid.bump_field(gs, G, radius=1.0), c, SIGMA, 0.1, G)
    with pytest.raises(ValueError):
        mfg.mfg_picard(u_T, rho0, c, SIGMA, -0.1, G)
    bad = grid.Field(gs, rho0.values - 2e-3, 0.0)
    with pytest.raises(ValueError):
        mfg.mfg_picard(u_T, bad, c, SIGMA, 0.1, G)


def test_picard_headline_converges(headline):
    st = headline
    assert st.converged
    assert st.iterations <= 50
    assert st.residuals_u[-1] <= 1e-5
    assert st.residuals_rho[-1] <= 1e-4
    # residual histories align with the iteration count and start with the
    # sentinel for the undefined first density change
    assert len(st.residuals_u) == len(st.residuals_rho) == st.iterations
    assert math.isinf(st.residuals_rho[0])


def test_picard_headline_residuals_decrease(headline):
    st = headline
    tail = st.residuals_u[1:]
    assert all(b < a for a, b in zip(tail, tail[1:]))


def test_picard_headline_certifies_flat_distance(headline):
    st = headline
    assert len(st.d0_certified) == 2
    for t, v in st.d0_certified:
        assert 0 <= v <= 1e-4
        assert 0 <= t <= 0.1 + 1e-12
    # the LP value can only sharpen the L1 stopping bound
    assert max(v for _, v in st.d0_certified) <= st.residuals_rho[-1]


def test_picard_headline_report(headline):
    rep = mfg.mfg_residual_report(headline)
    assert rep.ok
    assert rep.mass_error <= 1e-6
    assert rep.min_density >= -1e-3 * max(f.sup_norm() for f in headline.rho_traj.fields)
    assert rep.duality_residual <= rep.duality_bound
    assert rep.sup_bounds_ok
    d = rep.to_json_dict()
    assert d["verdict"] == "converged"
    assert d["residuals_rho"][0] is None
    assert len(d["d0_certified"]) == 2


def test_picard_headline_is_a_fixed_point(headline):
    gap = mfg.fixed_point_residual(headline)
    assert gap <= 2.0 * headline.tol_u


def test_picard_decoupled_stops_after_confirming_sweep(coupling15):
    # with no feedback the first sweep already solves the system; the
    # plain iteration needs exactly one more sweep to see nothing move
    gs, c = coupling15
    c0 = mfg.CouplingSpec(mollifier=c.mollifier, gain=0.0)
    u_T = grid.bump_field(gs, G, radius=1.2)
    rho0 = grid.bump_field(gs, G, radius=1.0, normalize=True)
    st = mfg.mfg_picard(u_T, rho0, c0, SIGMA, 0.1, G, theta=1.0)
    assert st.converged
    assert st.iterations == 2
    assert st.residuals_u[0] <= 1e-12
    assert st.residuals_rho[1] <= 1e-12


def test_picard_limit_does_not_depend_on_damping(coupling15):
    gs, c = coupling15
    u_T = grid.bump_field(gs, G, radius=1.2)
    rho0 = grid.bump_field(gs, G, radius=1.0, normalize=True)
    limits = {}
    for theta in (0.3, 0.5, 0.8):
        st = mfg.mfg_picard(u_T, rho0, c, SIGMA, 0.1, G, theta=theta)
        assert st.converged
        limits[theta] = st.u_traj
    pairs = [(0.3, 0.5), (0.3, 0.8), (0.5, 0.8)]
    for a, b in pairs:
        gap = max(
            np.abs(fa.values - fb.values).max()
            for fa, fb in zip(limits[a].fields, limits[b].fields)
        )
        assert gap <= 5.0 * 1e-5


def test_picard_preserves_rotation_symmetry(coupling15):
    gs, c = coupling15
    u_T = grid.bump_field(gs, G, radius=1.2)
    rho0 = grid.bump_field(gs, G, radius=1.0, normalize=True)
    st = mfg.mfg_picard(u_T, rho0, c, SIGMA, 0.1, G, max_iters=4, tol_u=0.0)
    worst = 0.0
    for traj in (st.u_traj, st.rho_traj):
        for f in traj.fields:
            worst = max(worst, float(np.abs(mfg.rotation_image(f).values - f.values).max()))
    assert worst <= 1e-10


def test_picard_nonconvergence_is_a_verdict(coupling15):
    gs, c = coupling15
    u_T = grid.bump_field(gs, G, radius=1.2)
    rho0 = grid.bump_field(gs, G, radius=1.0, normalize=True)
    st = mfg.mfg_picard(u_T, rho0, c, SIGMA, 0.1, G, max_iters=2)
    assert not st.converged
    assert st.verdict == "no fixed point found at this T"
    assert st.iterations == 2
    rep = mfg.mfg_residual_report(st)
    assert not rep.ok
    assert rep.mass_error <= 1e-6
