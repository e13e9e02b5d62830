"""Degenerate transport-diffusion on a truncated ball.

Solves d_t rho = sigma lap_G rho + div_G(b rho) on the box, with values
forced to zero outside a ball mask (the truncation scheme with Dirichlet
exterior data).  The advective flux rho Btilde, Btilde = sum_i b_i a_i,
joins the diffusive flux on faces, so total mass moves only through
faces and is conserved until the support touches the mask.

Alongside the grid solver: the weak-form residual of the defining
identity, the L2 and gradient-energy a priori bounds, the exponential
barrier inequality behind the uniqueness argument, and a stochastic
particle oracle that approximates the same law without touching the
grid stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from . import _stencils, vfields
from .grid import BallMask, Field, GridSpec, Trajectory, max_stable_dt, node_coordinates
from .groups import GroupSpec, hom_norm
from .heat import CFLViolation


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftField:
    """Frame coefficients b(t) = (b_1, ..., b_m) of the drift sum b_i a_i.

    sampler(t) returns either an (m,) constant vector or an (m, *shape)
    nodal array.  Use the constructors; they record whether the drift is
    identically zero so the solver can skip the advective flux.
    """

    m: int
    sampler: Callable[[float], np.ndarray | None]
    zero: bool = False

    @staticmethod
    def none(m: int = 2) -> "DriftField":
        return DriftField(m=m, sampler=lambda t: None, zero=True)

    @staticmethod
    def constant(coeffs: Sequence[float]) -> "DriftField":
        vec = np.asarray(coeffs, dtype=float)
        if vec.ndim != 1:
            raise ValueError("constant drift takes a flat coefficient vector")
        if np.all(vec == 0.0):
            return DriftField.none(len(vec))
        return DriftField(m=len(vec), sampler=lambda t, v=vec: v)

    @staticmethod
    def from_sequence(times: Sequence[float], values: Sequence[np.ndarray]) -> "DriftField":
        """Piecewise-constant in time: at t, the entry with the largest
        sample time <= t (clamped at the ends)."""
        ts = np.asarray(times, dtype=float)
        if len(ts) != len(values) or len(ts) == 0:
            raise ValueError("times and values must align and be nonempty")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("times must increase")
        vals = [np.asarray(v, dtype=float) for v in values]
        m = vals[0].shape[0]

        def sample(t: float) -> np.ndarray:
            i = int(np.searchsorted(ts, t, side="right")) - 1
            return vals[min(max(i, 0), len(vals) - 1)]

        return DriftField(m=m, sampler=sample)

    @staticmethod
    def from_value_gradient(u: Field, gamma: float, vf: vfields.VectorFieldSet) -> "DriftField":
        """Optimal-control feedback drift gamma |grad_G u|^{gamma-2} grad_G u,
        frozen at the given u snapshot."""
        g = vfields.horizontal_gradient(vf, u).values
        mag = np.sqrt((g**2).sum(axis=0))
        if gamma == 2.0:
            coeff = np.full_like(mag, gamma)
        else:
            # |grad|^{gamma-2} with the convention 0^0-type limit -> 0 drift
            with np.errstate(divide="ignore"):
                coeff = gamma * np.where(mag > 0, mag ** (gamma - 2.0), 0.0)
        b = coeff * g
        return DriftField(m=g.shape[0], sampler=lambda t, arr=b: arr)

    def at(self, t: float) -> np.ndarray | None:
        if self.zero:
            return None
        v = self.sampler(t)
        if v is not None and not np.isfinite(v).all():
            raise ValueError(f"drift not finite at t={t:g}")
        return v

    def sup_norm(self, t: float) -> float:
        v = self.at(t)
        if v is None:
            return 0.0
        if v.ndim == 1:
            return float(np.sqrt((v**2).sum()))
        return float(np.sqrt((v**2).sum(axis=0)).max())


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def fp_step(
    rho: Field,
    drift: DriftField,
    sigma: float,
    dt: float,
    group: GroupSpec,
    mask: BallMask | None = None,
    *,
    check_cfl: bool = True,
) -> Field:
    """One conservative explicit step; values outside the mask forced to 0."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return rho
    vf = vfields.left_invariant_fields(group)
    b = drift.at(rho.t)
    if check_cfl:
        limit = max_stable_dt(rho.grid, group, vf, sigma, b)
        if dt > limit * (1 + 1e-12):
            raise CFLViolation(f"dt={dt:g} exceeds stability bound {limit:g}")
    geom = _stencils.face_geometry(rho.grid, group, vf)
    new = rho.values + dt * _stencils.flux_divergence(rho.values, geom, sigma, b)
    if not np.isfinite(new).all():
        raise CFLViolation("transport step produced non-finite values")
    if mask is not None:
        new = np.where(mask.inside, new, 0.0)
    return Field(rho.grid, new, rho.t + dt)


def fp_solve(
    rho0: Field,
    drift: DriftField,
    sigma: float,
    t_end: float,
    group: GroupSpec,
    mask: BallMask | None = None,
    *,
    dt: float | None = None,
    cfl_safety: float = 0.8,
    store_every: int = 1,
) -> Trajectory:
    """Evolve rho0 to t_end; returns the trajectory including both endpoints.

    store_every thins the stored snapshots (the final state is always
    kept).  The step count is chosen once from the stability bound at the
    initial drift sample; time-dependent drifts are re-checked per step.
    """
    span = t_end - rho0.t
    if span < 0:
        raise ValueError("t_end before the datum's time stamp")
    if span == 0:
        return Trajectory(times=(rho0.t,), fields=(rho0,))
    if dt is None:
        limit = max_stable_dt(
            rho0.grid, group, vfields.left_invariant_fields(group), sigma, drift.at(rho0.t)
        )
        if not math.isfinite(limit):
            n = 1
        else:
            n = max(1, math.ceil(span / (cfl_safety * limit)))
    else:
        n = max(1, math.ceil(span / dt - 1e-12))
    step = span / n
    fields = [rho0]
    cur = rho0
    for k in range(n):
        cur = fp_step(cur, drift, sigma, step, group, mask)
        if k == n - 1 or (k + 1) % store_every == 0:
            fields.append(cur)
    if fields[-1] is not cur:
        fields.append(cur)
    return Trajectory(times=tuple(f.t for f in fields), fields=tuple(fields))


def r_monotonicity_report(
    rho0: Field,
    drift: DriftField,
    sigma: float,
    t_end: float,
    group: GroupSpec,
    radii: tuple[float, float],
    **solve_kw,
) -> dict[str, float]:
    """Solve on two nested balls; enlarging the ball should only add mass.

    Returns the most negative nodewise increment over the whole
    trajectory (>= -1e-8 expected) and the final-time mass gap.
    """
    from .grid import make_ball_mask

    r_small, r_big = radii
    if not r_small < r_big:
        raise ValueError("radii must increase")
    small = fp_solve(rho0, drift, sigma, t_end, group, make_ball_mask(rho0.grid, group, r_small), **solve_kw)
    big = fp_solve(rho0, drift, sigma, t_end, group, make_ball_mask(rho0.grid, group, r_big), **solve_kw)
    worst = min(
        float((fb.values - fs.values).min()) for fs, fb in zip(small.fields, big.fields)
    )
    return {
        "worst_increment": worst,
        "mass_small": small.fields[-1].integral(),
        "mass_big": big.fields[-1].integral(),
    }


# ---------------------------------------------------------------------------
# integral identities
# ---------------------------------------------------------------------------

def _time_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    w[:-1] += np.diff(times) / 2
    w[1:] += np.diff(times) / 2
    return w


def weak_form_residual(
    traj: Trajectory,
    phi: Trajectory | Callable[[float], Field],
    drift: DriftField,
    sigma: float,
    group: GroupSpec,
) -> float:
    """Residual of the defining identity against a test trajectory.

    int rho(T) phi(T) - int rho(0) phi(0)
      = int_0^T [ int rho d_t phi - sigma int grad rho . grad phi
                  - int rho b . grad phi ] dt,
    with time derivative and time integral discretized on the stored
    snapshot ladder (centered differences, trapezoid weights).
    """
    vf = vfields.left_invariant_fields(group)
    times = np.asarray(traj.times)
    if len(times) < 3:
        raise ValueError("need at least three snapshots for the time derivative")
    phis = [phi.at(t) if isinstance(phi, Trajectory) else phi(t) for t in times]
    h_d = traj.fields[0].grid.cell_volume

    # d_t phi on the ladder
    phi_vals = np.stack([p.values for p in phis])
    dphi = np.gradient(phi_vals, times, axis=0, edge_order=1)

    w = _time_weights(times)
    bulk = 0.0
    for j, (t, rho_j, phi_j) in enumerate(zip(times, traj.fields, phis)):
        grad_rho = vfields.horizontal_gradient(vf, rho_j).values
        grad_phi = vfields.horizontal_gradient(vf, phi_j).values
        term = (rho_j.values * dphi[j]).sum()
        term -= sigma * (grad_rho * grad_phi).sum()
        b = drift.at(t)
        if b is not None:
            if b.ndim == 1:
                b = b.reshape((-1,) + (1,) * rho_j.values.ndim)
            term -= (rho_j.values * (b * grad_phi).sum(axis=0)).sum()
        bulk += w[j] * term * h_d
    boundary = (traj.fields[-1].values * phis[-1].values).sum() * h_d - (
        traj.fields[0].values * phis[0].values
    ).sum() * h_d
    return float(abs(boundary - bulk))


@dataclass(frozen=True)
class EnergyReport:
    l2_initial: float
    l2_peak: float
    l2_bound: float
    grad_energy: float
    grad_bound: float
    drift_sup: float

    @property
    def ok(self) -> bool:
        return self.l2_peak <= self.l2_bound and self.grad_energy <= self.grad_bound


def energy_report(traj: Trajectory, drift: DriftField, sigma: float, group: GroupSpec) -> EnergyReport:
    """A priori L2 bounds along the trajectory.

    The supremum of int rho(t)^2 is checked against
    K = exp(||b||_inf^2 T / (2 sigma)) (1 + 1e-2) times the initial
    energy, and the accumulated gradient energy int int |grad_G rho|^2
    against the ladder constant (1 + ||b||^2 T K / sigma) / sigma times
    the same initial energy.
    """
    if sigma <= 0:
        raise ValueError("energy bounds need sigma > 0")
    vf = vfields.left_invariant_fields(group)
    times = np.asarray(traj.times)
    span = float(times[-1] - times[0])
    b_sup = max(drift.sup_norm(float(t)) for t in times)
    h_d = traj.fields[0].grid.cell_volume
    l2 = np.array([(f.values**2).sum() * h_d for f in traj.fields])
    w = _time_weights(times)
    grad_energy = 0.0
    for wj, f in zip(w, traj.fields):
        g = vfields.horizontal_gradient(vf, f).values
        grad_energy += wj * (g**2).sum() * h_d
    K = math.exp(b_sup**2 * span / (2 * sigma)) * (1 + 1e-2)
    K_grad = (1 + (b_sup**2) * span * K / sigma) / sigma
    return EnergyReport(
        l2_initial=float(l2[0]),
        l2_peak=float(l2.max()),
        l2_bound=float(K * l2[0]),
        grad_energy=float(grad_energy),
        grad_bound=float(K_grad * l2[0]),
        drift_sup=float(b_sup),
    )


# ---------------------------------------------------------------------------
# exponential barrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubsolutionParams:
    beta: float
    beta1: float
    tau0: float
    tau: float

    def __post_init__(self) -> None:
        if not 0 < self.beta < self.beta1:
            raise ValueError("need 0 < beta < beta1")
        if not self.tau > self.tau0:
            raise ValueError("need tau > tau0")


@dataclass(frozen=True)
class SubsolutionReport:
    threshold: float
    max_lhs_at_threshold: float
    max_lhs_at_double: float
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.max_lhs_at_double <= 1e-10


def _barrier_lhs_fn(group: GroupSpec, b_coeffs, sigma: float):
    """Symbolic LHS of the barrier inequality, lambdified over
    (x1..xd, t, bbar) with beta1, tau0 left as parameters too.

    Phi = exp(-(beta1 + bbar (t - tau0)) (N2 + 1)) with N2 = ||x||_G^2;
    LHS = d_t Phi + sigma lap_G Phi + B . grad_G Phi + (div_G B) Phi.
    """
    vf = vfields.left_invariant_fields(group)
    xs = vfields.coordinate_symbols(group.dim)
    t, bbar, beta1, tau0 = sp.symbols("t bbar beta1 tau0", real=True)
    r = group.norm_root
    n_pow = sum(
        sp.Abs(xs[i]) ** sp.Rational(r, w) for i, w in enumerate(group.weights)
    )
    N2 = n_pow ** sp.Rational(2, r)
    a = beta1 + bbar * (t - tau0)
    grad_n2 = [vfields.apply_field_analytic(vf, i, N2) for i in range(vf.count)]
    lap_n2 = sum(vfields.apply_field_analytic(vf, i, g) for i, g in enumerate(grad_n2))
    grad_sq = sum(g**2 for g in grad_n2)
    # Phi-normalized form; multiply by Phi at the end
    core = -bbar * (N2 + 1) + sigma * (a**2 * grad_sq - a * lap_n2)
    div_b = sp.Integer(0)
    if b_coeffs is not None:
        bs = [sp.Float(c) for c in np.asarray(b_coeffs, dtype=float)]
        core += sum(bi * (-a * gi) for bi, gi in zip(bs, grad_n2))
        # constant frame coefficients: div_G B = sum X_i b_i = 0
        div_b = sp.Integer(0)
    core = core + div_b
    phi = sp.exp(-a * (N2 + 1))
    lhs = core * phi
    return sp.lambdify(tuple(xs) + (t, bbar, beta1, tau0), lhs, "numpy")


def subsolution_check(
    group: GroupSpec,
    params: SubsolutionParams,
    b_coeffs,
    sigma: float,
    *,
    rng: np.random.Generator,
    box: float = 2.0,
    n_space: int = 400,
    n_time: int = 9,
    bbar_cap: float = 1e8,
) -> SubsolutionReport:
    """Find the smallest decay rate making the barrier a subsolution.

    Samples space-time points (the origin is excluded: ||x||_G^2 is not
    twice differentiable there), locates by bisection the smallest bbar
    with max LHS <= 1e-10 over the sample, and certifies the inequality
    again at twice that rate.
    """
    fn = _barrier_lhs_fn(group, b_coeffs, sigma)
    pts = rng.uniform(-box, box, size=(n_space, group.dim))
    norms = hom_norm(group, pts)
    pts = pts[norms > 1e-3]
    ts = np.linspace(params.tau0, params.tau, n_time)
    cols = [pts[:, i][:, None] for i in range(group.dim)]

    def max_lhs(bbar: float) -> float:
        vals = fn(*cols, ts[None, :], bbar, params.beta1, params.tau0)
        return float(np.max(vals))

    lo, hi = 0.0, 1.0
    while max_lhs(hi) > 1e-10:
        hi *= 2
        if hi > bbar_cap:
            raise RuntimeError("no subsolution rate below the search cap")
    for _ in range(60):
        mid = (lo + hi) / 2
        if max_lhs(mid) > 1e-10:
            lo = mid
        else:
            hi = mid
    threshold = hi
    return SubsolutionReport(
        threshold=threshold,
        max_lhs_at_threshold=max_lhs(threshold),
        max_lhs_at_double=max_lhs(2 * threshold),
        n_samples=pts.shape[0] * n_time,
    )


def barrier_max_lhs(
    group: GroupSpec,
    params: SubsolutionParams,
    b_coeffs,
    sigma: float,
    bbar: float,
    *,
    rng: np.random.Generator,
    box: float = 2.0,
    n_space: int = 400,
    n_time: int = 9,
) -> float:
    """Max of the barrier operator over a space-time sample at a fixed rate.

    Positive values mean the barrier fails to be a subsolution at this
    bbar somewhere in the sampled region.
    """
    fn = _barrier_lhs_fn(group, b_coeffs, sigma)
    pts = rng.uniform(-box, box, size=(n_space, group.dim))
    pts = pts[hom_norm(group, pts) > 1e-3]
    ts = np.linspace(params.tau0, params.tau, n_time)
    cols = [pts[:, i][:, None] for i in range(group.dim)]
    return float(np.max(fn(*cols, ts[None, :], bbar, params.beta1, params.tau0)))


def barrier_origin_gradient_limit(group: GroupSpec, direction: Sequence[float]) -> float:
    """Directional limit of |grad_G ||x||_G^2|^2 at the group identity.

    The squared norm is C^1 but not C^2 at the origin; the gradient still
    vanishes there along every dilation ray, which this limit certifies.
    """
    vf = vfields.left_invariant_fields(group)
    xs = vfields.coordinate_symbols(group.dim)
    s = sp.symbols("s", positive=True)
    r = group.norm_root
    n_pow = sum(
        sp.Abs(xs[i]) ** sp.Rational(r, w) for i, w in enumerate(group.weights)
    )
    N2 = n_pow ** sp.Rational(2, r)
    grad_sq = sum(vfields.apply_field_analytic(vf, i, N2) ** 2 for i in range(vf.count))
    ray = {
        xs[i]: sp.Float(direction[i]) * s ** group.weights[i] for i in range(group.dim)
    }
    return float(sp.limit(grad_sq.subs(ray), s, 0, "+"))


# ---------------------------------------------------------------------------
# particle oracle
# ---------------------------------------------------------------------------

_BLOCK = 8192


def _simulate_block(
    seed: int,
    block_index: int,
    n: int,
    cdf: np.ndarray,
    axes: tuple[np.ndarray, ...],
    spacings: tuple[float, ...],
    shape: tuple[int, ...],
    b_table: np.ndarray | None,
    sigma: float,
    dt: float,
    n_steps: int,
) -> np.ndarray:
    """One block of particles on its own jumped Philox substream.

    Pure function of plain data so blocks can run in worker processes;
    int64 counts sum exactly, making the total independent of how the
    blocks are distributed.
    """
    hx, hy, hz = spacings
    rng = np.random.Generator(np.random.Philox(key=seed).jumped(block_index))
    u = rng.random(n)
    flat = np.searchsorted(cdf, u, side="right").clip(0, cdf.size - 1)
    idx = np.unravel_index(flat, shape)
    pos = np.stack([axes[k][idx[k]] for k in range(3)], axis=-1)
    pos += (rng.random((n, 3)) - 0.5) * np.array([hx, hy, hz])
    amp = math.sqrt(2 * sigma * dt)
    for k in range(n_steps):
        # frame coefficients frozen at the step's start position
        x1, x2 = pos[:, 0].copy(), pos[:, 1].copy()
        if b_table is not None:
            v1, v2 = -b_table[k, 0], -b_table[k, 1]
            pos[:, 0] += dt * v1
            pos[:, 1] += dt * v2
            pos[:, 2] += dt * (v1 * (-x2 / 2) + v2 * (x1 / 2))
        if sigma > 0:
            w = rng.standard_normal((n, 2))
            pos[:, 0] += amp * w[:, 0]
            pos[:, 1] += amp * w[:, 1]
            pos[:, 2] += amp * (w[:, 0] * (-x2 / 2) + w[:, 1] * (x1 / 2))
    counts = np.zeros(shape, dtype=np.int64)
    ix = np.rint((pos[:, 0] - axes[0][0]) / hx).astype(int)
    iy = np.rint((pos[:, 1] - axes[1][0]) / hy).astype(int)
    iz = np.rint((pos[:, 2] - axes[2][0]) / hz).astype(int)
    keep = (
        (ix >= 0) & (ix < shape[0])
        & (iy >= 0) & (iy < shape[1])
        & (iz >= 0) & (iz < shape[2])
    )
    np.add.at(counts, (ix[keep], iy[keep], iz[keep]), 1)
    return counts


def particle_oracle(
    rho0: Field,
    drift: DriftField,
    sigma: float,
    t_end: float,
    group: GroupSpec,
    *,
    n_particles: int,
    seed: int,
    n_steps: int | None = None,
    jobs: int = 1,
) -> Field:
    """Empirical density by Euler-Maruyama in the horizontal frame.

    dxi = -sum_i b_i a_i(xi) dt + sqrt(2 sigma) sum_j a_j(xi) dW_j.
    The Ito and Stratonovich forms coincide for frames whose correction
    sum (Da_i) a_i vanishes identically; `vfields.stratonovich_correction`
    certifies that symbolically for the shipped groups.

    Particles are drawn and advanced in fixed blocks of 8192, each block
    on its own jumped substream of a counter-based generator, so the
    result depends only on (seed, n_particles, n_steps) and not on the
    worker count.  Returns a node-binned density on rho0's grid.
    """
    if group.dim != 3 or group.horizontal_dim != 2:
        raise NotImplementedError("particle oracle is wired for the 3d two-generator frame")
    grid = rho0.grid
    p = np.clip(rho0.values.reshape(-1), 0.0, None)
    if p.sum() <= 0:
        raise ValueError("datum must carry positive mass")
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    axes = grid.axes()
    if n_steps is None:
        n_steps = max(1, math.ceil(t_end / 0.005))
    dt = t_end / n_steps
    b_table = None
    if not drift.zero:
        rows = []
        for k in range(n_steps):
            b = drift.at(k * dt)
            if b is None:
                b = np.zeros(2)
            if b.ndim != 1:
                raise NotImplementedError("particle oracle takes constant-coefficient drift")
            rows.append(b[:2])
        b_table = np.asarray(rows, dtype=float)
    blocks = [
        (start // _BLOCK, min(_BLOCK, n_particles - start))
        for start in range(0, n_particles, _BLOCK)
    ]
    args = [
        (seed, bi, n, cdf, axes, grid.spacings, grid.shape, b_table, sigma, dt, n_steps)
        for bi, n in blocks
    ]
    counts = np.zeros(grid.shape, dtype=np.int64)
    if jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for c in pool.map(_simulate_block, *zip(*args)):
                counts += c
    else:
        for a in args:
            counts += _simulate_block(*a)
    dens = counts / (n_particles * grid.cell_volume)
    return Field(grid, dens, t_end)
