"""Viscous Hamilton-Jacobi flow with horizontal gradient nonlinearity.

The equation is

    d_t u - sigma lap_G u + |grad_G u|^gamma = F,    u(0) = u0 >= 0,

with gamma >= 2 and bounded data.  Two independent solvers cross-check
each other:

* ``hj_step_direct`` / ``hj_solve``: explicit finite differences.  The
  gradient term is discretized per horizontal direction by the Godunov
  recipe, taking the larger of (backward difference)^+ and (forward
  difference)^-, so the nonlinearity only ever sees upwind information.
  The step bound adds the local transport speed gamma |grad u|^{gamma-1}
  of the nonlinearity to the usual diffusion count.

* ``duhamel_iterate``: one sweep of the mild-solution map

      Phi(u)(t) = e^{tL} u0 + int_0^t e^{(t-s)L} (F(s) - |grad u(s)|^gamma) ds

  with the semigroup realized by the explicit heat stepper and the
  integral by left-endpoint quadrature.  The discrete semigroup composes
  exactly, so the sweep assembles recursively,
  w_{k+1} = e^{dt L}(w_k + dt f_k), at the cost of one heat step per
  time node.

Iterating Phi from the pure heat baseline contracts for short horizons;
``hj_fixed_point`` records the iterate distances in the norm

    sup_t ( ||u||_inf + ||grad_G u||_inf + max_ij ||X_i X_j u||_inf )

together with the radius of the ball the iterates explored and an
empirical growth constant of the nonlinearity on that ball.  The limit
and the direct solution then bound each other's error: they discretize
the same problem through unrelated operator splittings.

``duality_report`` pairs a solution trajectory with an adjoint density
transported by the feedback drift gamma |grad u|^{gamma-2} grad u.  The
adjoint problem is well posed backward in time, so the density is
integrated in the reversed variable r = tau - t and read back in
reverse.  The pairing identity

    int u(tau) mu(tau) - int u(s) mu(s)
        = int_s^tau int ((gamma-1) |grad u|^gamma + F) mu

holds exactly in the continuum; the report returns the discrete
residual and both accumulated terms.

``sup_bounds_report`` and ``bernstein_report`` check the one-sided
comparison bounds and the first-derivative bounds along a frame that
commutes with the generator (the right-invariant one by default;
passing a non-commuting frame such as a plain coordinate partial shows
the monitor failing, which is the point of the control).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _stencils, vfields
from .grid import Field, GridSpec, Trajectory, max_stable_dt
from .groups import GroupSpec
from .heat import CFLViolation
from .fokker_planck import DriftField, fp_solve


class DivergenceError(RuntimeError):
    """An iterate left the trust region; raised instead of emitting NaN."""


# ---------------------------------------------------------------------------
# problem data
# ---------------------------------------------------------------------------

class SourceTerm:
    """Right-hand side F(t, x): absent, static, or piecewise-constant in t.

    Piecewise sampling follows the drift convention: at time t the entry
    with the largest sample time <= t applies, clamped at the ends.
    """

    def __init__(self, sampler: Callable[[float], np.ndarray] | None, bound: float):
        self._sampler = sampler
        self._bound = float(bound)

    @staticmethod
    def none() -> "SourceTerm":
        return SourceTerm(None, 0.0)

    @staticmethod
    def static(field: Field) -> "SourceTerm":
        vals = np.asarray(field.values, dtype=float)
        return SourceTerm(lambda t, arr=vals: arr, float(np.abs(vals).max()))

    @staticmethod
    def from_sequence(times: Sequence[float], fields: Sequence[Field]) -> "SourceTerm":
        ts = np.asarray(times, dtype=float)
        if len(ts) != len(fields) or len(ts) == 0:
            raise ValueError("times and fields must align and be nonempty")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("times must increase")
        vals = [np.asarray(f.values, dtype=float) for f in fields]
        if any(v.shape != vals[0].shape for v in vals):
            raise ValueError("snapshots must share one grid shape")

        def sample(t: float) -> np.ndarray:
            i = int(np.searchsorted(ts, t, side="right")) - 1
            return vals[min(max(i, 0), len(vals) - 1)]

        return SourceTerm(sample, max(float(np.abs(v).max()) for v in vals))

    @property
    def zero(self) -> bool:
        return self._sampler is None

    def at(self, t: float) -> np.ndarray | None:
        if self._sampler is None:
            return None
        v = self._sampler(t)
        if not np.isfinite(v).all():
            raise ValueError(f"source not finite at t={t:g}")
        return v

    def sup_norm(self) -> float:
        """Largest |F| over the stored samples (0 when absent)."""
        return self._bound


@dataclass(frozen=True)
class HamiltonianSpec:
    """Data for one initial-value problem: u0 >= 0, power gamma >= 2, source."""

    u0: Field
    gamma: float = 2.0
    source: SourceTerm | None = None

    def __post_init__(self) -> None:
        if self.gamma < 2.0:
            raise ValueError("gamma must be >= 2")
        if float(self.u0.values.min()) < 0.0:
            raise ValueError("initial datum must be nonnegative")
        if self.source is None:
            object.__setattr__(self, "source", SourceTerm.none())

    def data_scale(self, horizon: float) -> float:
        """||u0||_inf + T ||F||_inf, the natural size of solutions up to T."""
        return self.u0.sup_norm() + horizon * self.source.sup_norm()


# ---------------------------------------------------------------------------
# direct scheme
# ---------------------------------------------------------------------------

def _one_sided_differences(values: np.ndarray, h: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backward and forward differences per axis, zero at the inflow edge.

    Zero rows at the edges amount to constant extension of the data,
    matching the zero-flux convention of the diffusion stencil.
    """
    minus, plus = [], []
    for ax in range(values.ndim):
        dm = np.zeros_like(values)
        dp = np.zeros_like(values)
        sl_hi = [slice(None)] * values.ndim
        sl_lo = [slice(None)] * values.ndim
        sl_hi[ax] = slice(1, None)
        sl_lo[ax] = slice(None, -1)
        diff = (values[tuple(sl_hi)] - values[tuple(sl_lo)]) / h[ax]
        dm[tuple(sl_hi)] = diff
        dp[tuple(sl_lo)] = diff
        minus.append(dm)
        plus.append(dp)
    return minus, plus


def godunov_gradient(u: Field, group: GroupSpec) -> np.ndarray:
    """Upwind magnitude of grad_G u, shaped like u.

    Each horizontal direction contributes
    max((D^- u)^+, (D^+ u)^-) where D^{+/-} are the one-sided frame
    derivatives; axis upwinding flips with the sign of the frame
    coefficient so both pieces only look in their own direction.
    """
    vf = vfields.left_invariant_fields(group)
    grid = u.grid
    h = grid.spacings
    coords = _stencils_coords(grid)
    minus, plus = _one_sided_differences(u.values, h)
    total = np.zeros(grid.shape)
    for i in range(vf.count):
        d_minus = np.zeros(grid.shape)
        d_plus = np.zeros(grid.shape)
        for l in range(grid.dim):
            poly = vf.coefficients[i][l]
            if not poly:
                continue
            a = _eval_poly_cached(poly, coords, grid)
            pos = a > 0
            d_minus = d_minus + np.where(pos, a * minus[l], a * plus[l])
            d_plus = d_plus + np.where(pos, a * plus[l], a * minus[l])
        s = np.maximum(np.maximum(d_minus, 0.0), np.maximum(-d_plus, 0.0))
        total = total + s * s
    return np.sqrt(total)


def _stencils_coords(grid: GridSpec):
    from .grid import node_coordinates

    return node_coordinates(grid)


def _eval_poly_cached(poly, coords, grid):
    from .groups import eval_poly

    v = eval_poly(poly, coords)
    if np.ndim(v) == 0:
        return np.full(grid.shape, float(v))
    return v


def feedback_drift(u: Field, gamma: float, group: GroupSpec) -> np.ndarray:
    """Frame coefficients of the feedback drift gamma |grad u|^{gamma-2} grad u.

    This is the transport speed the nonlinearity induces, reused by the
    step bound here and by adjoint and coupled runs elsewhere; the
    degenerate-gradient limit is 0 for every gamma >= 2.
    """
    vf = vfields.left_invariant_fields(group)
    g = vfields.horizontal_gradient(vf, u).values
    mag = np.sqrt((g**2).sum(axis=0))
    if gamma == 2.0:
        coeff = np.full_like(mag, gamma)
    else:
        with np.errstate(divide="ignore"):
            coeff = gamma * np.where(mag > 0, mag ** (gamma - 2.0), 0.0)
    return coeff * g


def hj_stable_dt(u: Field, spec: HamiltonianSpec, sigma: float, group: GroupSpec, *, cfl_safety: float = 0.8) -> float:
    """Step bound for the direct scheme at the current state.

    The nonlinearity acts like transport at speed gamma |grad u|^{gamma-1}
    along the gradient, so it enters the bound through the same frame
    channels as a drift with those coefficients.
    """
    vf = vfields.left_invariant_fields(group)
    b = feedback_drift(u, spec.gamma, group)
    return cfl_safety * max_stable_dt(u.grid, group, vf, sigma, b)


def hj_step_direct(
    u: Field,
    spec: HamiltonianSpec,
    sigma: float,
    dt: float,
    group: GroupSpec,
    *,
    check_cfl: bool = True,
) -> Field:
    """One explicit step of d_t u = sigma lap_G u - |grad_G u|^gamma + F."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return u
    vf = vfields.left_invariant_fields(group)
    if check_cfl:
        limit = hj_stable_dt(u, spec, sigma, group, cfl_safety=1.0)
        if dt > limit * (1 + 1e-12):
            raise CFLViolation(f"dt={dt:g} exceeds stability bound {limit:g}")
    geom = _stencils.face_geometry(u.grid, group, vf)
    new = u.values + dt * _stencils.flux_divergence(u.values, geom, sigma)
    new = new - dt * godunov_gradient(u, group) ** spec.gamma
    src = spec.source.at(u.t)
    if src is not None:
        new = new + dt * src
    if not np.isfinite(new).all():
        raise CFLViolation("direct step produced non-finite values")
    return Field(u.grid, new, u.t + dt)


def hj_solve(
    spec: HamiltonianSpec,
    sigma: float,
    t_end: float,
    group: GroupSpec,
    *,
    dt: float | None = None,
    cfl_safety: float = 0.8,
    store_every: int = 1,
) -> Trajectory:
    """March the direct scheme from spec.u0 to t_end.

    The step count comes from the stability bound at the initial state;
    every step re-checks the bound at the current state, so gradient
    growth past the initial estimate fails loudly rather than drifting
    into instability.
    """
    u0 = spec.u0
    span = t_end - u0.t
    if span < 0:
        raise ValueError("t_end before the datum's time stamp")
    if span == 0:
        return Trajectory(times=(u0.t,), fields=(u0,))
    if dt is None:
        limit = hj_stable_dt(u0, spec, sigma, group, cfl_safety=cfl_safety)
        if not math.isfinite(limit):
            n = 1
        else:
            n = max(1, math.ceil(span / limit))
    else:
        n = max(1, math.ceil(span / dt - 1e-12))
    step = span / n
    fields = [u0]
    cur = u0
    for k in range(n):
        cur = hj_step_direct(cur, spec, sigma, step, group)
        if k == n - 1 or (k + 1) % store_every == 0:
            fields.append(cur)
    if fields[-1] is not cur:
        fields.append(cur)
    return Trajectory(times=tuple(f.t for f in fields), fields=tuple(fields))


# ---------------------------------------------------------------------------
# mild-solution sweep
# ---------------------------------------------------------------------------

def _heat_step_raw(values: np.ndarray, grid: GridSpec, sigma: float, dt: float, group: GroupSpec) -> np.ndarray:
    vf = vfields.left_invariant_fields(group)
    geom = _stencils.face_geometry(grid, group, vf)
    return values + dt * _stencils.flux_divergence(values, geom, sigma)


def heat_baseline(spec: HamiltonianSpec, sigma: float, times: Sequence[float], group: GroupSpec) -> Trajectory:
    """The zeroth iterate e^{tL} u0 on the given time grid."""
    ts = tuple(float(t) for t in times)
    grid = spec.u0.grid
    vals = spec.u0.values
    fields = [Field(grid, vals, ts[0])]
    for a, b in zip(ts, ts[1:]):
        vals = _heat_step_raw(vals, grid, sigma, b - a, group)
        fields.append(Field(grid, vals, b))
    return Trajectory(times=ts, fields=tuple(fields))


def duhamel_iterate(
    prev: Trajectory,
    spec: HamiltonianSpec,
    sigma: float,
    group: GroupSpec,
    *,
    blowup: float = 1e4,
) -> Trajectory:
    """One sweep of the mild map Phi applied to the previous iterate.

    Left-endpoint quadrature against the discrete semigroup telescopes:
    w_0 = u0 and w_{k+1} = e^{dt_k L}(w_k + dt_k f_k) with
    f_k = F(t_k) - |grad_G prev(t_k)|^gamma reproduces
    e^{t_k L} u0 + sum_{j<k} dt_j e^{(t_k - t_j) L} f_j exactly, because
    the discrete heat steps compose exactly.  With f = 0 the sweep is
    the plain heat trajectory on the same grid, bit for bit.

    Raises DivergenceError as soon as a snapshot's sup norm passes
    ``blowup``; no NaN ever leaves this function quietly.
    """
    vf = vfields.left_invariant_fields(group)
    grid = spec.u0.grid
    ts = prev.times
    diff_limit = max_stable_dt(grid, group, vf, sigma, None)
    for a, b in zip(ts, ts[1:]):
        if (b - a) > diff_limit * (1 + 1e-12):
            raise CFLViolation(f"time grid step {b - a:g} exceeds heat bound {diff_limit:g}")
    vals = spec.u0.values
    fields = [Field(grid, vals, ts[0])]
    for k, (a, b) in enumerate(zip(ts, ts[1:])):
        dt = b - a
        g = vfields.horizontal_gradient(vf, prev.fields[k]).values
        mag_pow = ((g**2).sum(axis=0)) ** (spec.gamma / 2.0)
        f_k = -mag_pow
        src = spec.source.at(a)
        if src is not None:
            f_k = f_k + src
        vals = _heat_step_raw(vals + dt * f_k, grid, sigma, dt, group)
        if not np.isfinite(vals).all() or float(np.abs(vals).max()) > blowup:
            raise DivergenceError(f"iterate norm passed {blowup:g} at t={b:g}")
        fields.append(Field(grid, vals, b))
    return Trajectory(times=ts, fields=tuple(fields))


# ---------------------------------------------------------------------------
# fixed point
# ---------------------------------------------------------------------------

def xt_norm(traj: Trajectory, group: GroupSpec) -> float:
    """sup_t (||u|| + ||grad_G u|| + max_ij ||X_i X_j u||), all sup norms.

    Discrete stand-in for the solution-space norm used to measure
    contraction; the second-order part uses composed first-order
    stencils.
    """
    vf = vfields.left_invariant_fields(group)
    worst = 0.0
    for f in traj.fields:
        g = vfields.horizontal_gradient(vf, f)
        total = f.sup_norm() + float(np.sqrt((g.values**2).sum(axis=0)).max())
        total += vfields.second_gradient_sup(vf, f)
        worst = max(worst, total)
    return worst


def xt_distance(a: Trajectory, b: Trajectory, group: GroupSpec) -> float:
    """xt_norm of the snapshot-wise difference; time grids must agree."""
    if len(a) != len(b) or any(abs(s - t) > 1e-12 for s, t in zip(a.times, b.times)):
        raise ValueError("trajectories live on different time grids")
    diff = Trajectory(
        times=a.times,
        fields=tuple(
            Field(fa.grid, fa.values - fb.values, fa.t) for fa, fb in zip(a.fields, b.fields)
        ),
    )
    return xt_norm(diff, group)


@dataclass(frozen=True)
class FixedPointReport:
    """Record of one Picard run of the mild map."""

    distances: tuple[float, ...]
    ratios: tuple[float, ...]
    ball_radius: float
    horizon: float
    growth_constant: float
    verdict: str

    @property
    def ok(self) -> bool:
        return self.verdict == "converged"

    def to_json_dict(self) -> dict:
        return {
            "distances": list(self.distances),
            "ratios": list(self.ratios),
            "ball_radius": self.ball_radius,
            "horizon": self.horizon,
            "growth_constant": self.growth_constant,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def hj_fixed_point(
    spec: HamiltonianSpec,
    sigma: float,
    t_end: float,
    group: GroupSpec,
    *,
    dt: float | None = None,
    cfl_safety: float = 0.8,
    max_iters: int = 12,
    tol: float = 1e-9,
) -> tuple[Trajectory, FixedPointReport]:
    """Iterate the mild map from the heat baseline until the sweep stalls.

    Successive distances are measured in the xt norm.  The report keeps
    the whole distance sequence, the pairwise ratios, the radius of the
    ball around the baseline the iterates explored, and an empirical
    growth constant gamma * (sup ||grad u||)^{gamma-1} of the
    nonlinearity on that ball.  Verdicts: converged, maxiter, diverged.
    """
    grid = spec.u0.grid
    vf = vfields.left_invariant_fields(group)
    span = t_end - spec.u0.t
    if span <= 0:
        raise ValueError("horizon must lie after the datum's time stamp")
    if dt is None:
        limit = cfl_safety * max_stable_dt(grid, group, vf, sigma, None)
        n = max(2, math.ceil(span / limit)) if math.isfinite(limit) else 2
    else:
        n = max(2, math.ceil(span / dt - 1e-12))
    times = tuple(spec.u0.t + span * k / n for k in range(n + 1))

    scale = max(spec.data_scale(span), 1e-30)
    current = heat_baseline(spec, sigma, times, group)
    baseline = current
    distances: list[float] = []
    ratios: list[float] = []
    radius = 0.0
    grad_peak = 0.0
    verdict = "maxiter"
    for f in current.fields:
        g = vfields.horizontal_gradient(vf, f).values
        grad_peak = max(grad_peak, float(np.sqrt((g**2).sum(axis=0)).max()))
    for _ in range(max_iters):
        try:
            nxt = duhamel_iterate(current, spec, sigma, group)
        except DivergenceError:
            verdict = "diverged"
            break
        distances.append(xt_distance(nxt, current, group))
        radius = max(radius, xt_distance(nxt, baseline, group))
        for f in nxt.fields:
            g = vfields.horizontal_gradient(vf, f).values
            grad_peak = max(grad_peak, float(np.sqrt((g**2).sum(axis=0)).max()))
        current = nxt
        if distances[-1] <= tol * scale:
            verdict = "converged"
            break
    for a, b in zip(distances, distances[1:]):
        if a > 0:
            ratios.append(b / a)
    growth = spec.gamma * grad_peak ** (spec.gamma - 1.0)
    report = FixedPointReport(
        distances=tuple(distances),
        ratios=tuple(ratios),
        ball_radius=radius,
        horizon=span,
        growth_constant=growth,
        verdict=verdict,
    )
    return current, report


# ---------------------------------------------------------------------------
# duality pairing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualityReport:
    """Both sides of the pairing identity on [s, tau] and their mismatch."""

    s: float
    tau: float
    gap: float
    gradient_term: float
    source_term: float
    residual: float

    def to_json_dict(self) -> dict:
        return {
            "s": self.s,
            "tau": self.tau,
            "gap": self.gap,
            "gradient_term": self.gradient_term,
            "source_term": self.source_term,
            "residual": self.residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def duality_report(
    traj: Trajectory,
    spec: HamiltonianSpec,
    sigma: float,
    group: GroupSpec,
    mu_tau: Field,
    s: float,
    tau: float,
) -> DualityReport:
    """Check the pairing identity against an adjoint density.

    mu_tau is the density at the LATER time tau: the adjoint equation
    d_t mu + sigma lap_G mu + div_G(gamma |grad u|^{gamma-2} grad u mu) = 0
    is parabolic backward in time, so the density is integrated in the
    reversed variable r = tau - t (a forward transport-diffusion run with
    the drift sequence read off the trajectory in reverse) and mapped
    back.  The run reuses the trajectory's own time grid; the step must
    satisfy the transport bound for the feedback drift, which it does
    whenever the trajectory came from hj_solve, whose bound includes the
    same speed.

    Time integrals use the trapezoid rule on that grid, space integrals
    the grid sum.
    """
    ts = np.asarray(traj.times)
    i0 = int(np.argmin(np.abs(ts - s)))
    i1 = int(np.argmin(np.abs(ts - tau)))
    if abs(ts[i0] - s) > 1e-9 or abs(ts[i1] - tau) > 1e-9:
        raise ValueError("s and tau must be snapshot times of the trajectory")
    if i1 <= i0:
        raise ValueError("tau must come after s")
    window = traj.fields[i0 : i1 + 1]
    wt = ts[i0 : i1 + 1]

    # drift at reversed time r corresponds to u at t = tau - r
    rev_times = [float(tau - wt[len(wt) - 1 - j]) for j in range(len(wt))]
    rev_values = [
        feedback_drift(window[len(window) - 1 - j], spec.gamma, group)
        for j in range(len(window))
    ]
    drift = DriftField.from_sequence(rev_times, rev_values)
    nu = fp_solve(
        Field(mu_tau.grid, mu_tau.values, 0.0),
        drift,
        sigma,
        float(tau - s),
        group,
        dt=float(wt[1] - wt[0]),
        store_every=1,
    )
    if len(nu) != len(window):
        raise RuntimeError("adjoint run and trajectory window fell out of step")
    # mu at window time index j is nu at reversed index
    mu_fields = [nu.fields[len(window) - 1 - j] for j in range(len(window))]

    vf = vfields.left_invariant_fields(group)
    cell = traj.fields[0].grid.cell_volume
    grad_int = np.empty(len(window))
    src_int = np.empty(len(window))
    for j, (uf, mf) in enumerate(zip(window, mu_fields)):
        g = vfields.horizontal_gradient(vf, uf).values
        mag_pow = ((g**2).sum(axis=0)) ** (spec.gamma / 2.0)
        grad_int[j] = (spec.gamma - 1.0) * float((mag_pow * mf.values).sum()) * cell
        fsrc = spec.source.at(float(wt[j]))
        src_int[j] = float((fsrc * mf.values).sum()) * cell if fsrc is not None else 0.0
    gradient_term = float(np.trapezoid(grad_int, wt))
    source_term = float(np.trapezoid(src_int, wt))
    gap = float((window[-1].values * mu_fields[-1].values).sum() * cell) - float(
        (window[0].values * mu_fields[0].values).sum() * cell
    )
    residual = abs(gap - gradient_term - source_term)
    return DualityReport(
        s=float(wt[0]),
        tau=float(wt[-1]),
        gap=gap,
        gradient_term=gradient_term,
        source_term=source_term,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# comparison bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupBoundsReport:
    """Observed extremes of a trajectory against the comparison bounds."""

    max_value: float
    min_value: float
    upper_bound: float
    lower_bound: float
    ok: bool

    def to_json_dict(self) -> dict:
        return {
            "max_value": self.max_value,
            "min_value": self.min_value,
            "upper_bound": self.upper_bound,
            "lower_bound": self.lower_bound,
            "ok": self.ok,
        }


def sup_bounds_report(traj: Trajectory, spec: HamiltonianSpec) -> SupBoundsReport:
    """One-sided bounds from the comparison principle.

    Above: data only push up through F, so u <= ||u0|| + T ||F||.  Below:
    the gradient term can eat at most a multiple of the same size, with
    factor (gamma+1)/(gamma-1).  Both sides get a relative slack of 1e-3
    on the data scale for the discretization.
    """
    horizon = traj.times[-1] - traj.times[0]
    scale = max(spec.data_scale(horizon), 1e-30)
    tol = 1e-3 * scale
    upper = spec.u0.sup_norm() + horizon * spec.source.sup_norm() + tol
    lower = -((spec.gamma + 1.0) / (spec.gamma - 1.0)) * (
        spec.u0.sup_norm() + horizon * spec.source.sup_norm()
    ) - tol
    mx = max(float(f.values.max()) for f in traj.fields)
    mn = min(float(f.values.min()) for f in traj.fields)
    return SupBoundsReport(
        max_value=mx,
        min_value=mn,
        upper_bound=upper,
        lower_bound=lower,
        ok=(mx <= upper) and (mn >= lower),
    )


@dataclass(frozen=True)
class BernsteinReport:
    """Per-direction first-derivative sups on a central window vs bounds."""

    frame_kind: str
    observed: tuple[float, ...]
    initial: tuple[float, ...]
    source: tuple[float, ...]
    bounds: tuple[float, ...]
    ok: bool

    def to_json_dict(self) -> dict:
        return {
            "frame_kind": self.frame_kind,
            "observed": list(self.observed),
            "initial": list(self.initial),
            "source": list(self.source),
            "bounds": list(self.bounds),
            "ok": self.ok,
        }


def _central_window(shape: tuple[int, ...], fraction: float) -> tuple[slice, ...]:
    out = []
    for n in shape:
        cut = int(round(n * (1.0 - fraction) / 2.0))
        cut = min(cut, (n - 1) // 2)
        out.append(slice(cut, n - cut))
    return tuple(out)


def bernstein_report(
    traj: Trajectory,
    spec: HamiltonianSpec,
    group: GroupSpec,
    *,
    frame: vfields.VectorFieldSet | None = None,
    fraction: float = 0.5,
    slack: float = 1e-2,
) -> BernsteinReport:
    """First-derivative bounds along a frame, away from the box edge.

    For a frame commuting with the generator (right-invariant fields
    against the left-invariant operator), Y_j u solves a linear equation
    whose source is Y_j F, and sup_t ||Y_j u|| <= ||Y_j u0|| + ||Y_j F||
    up to the scheme's slack on the central window.  Frames that do not
    commute pick up commutator sources and the bound has no reason to
    hold; run one to see the monitor catch it.

    ``fraction`` is the per-axis share of nodes kept (centered), so the
    window stays clear of the one-sided differences at the edge.
    """
    vf = frame if frame is not None else vfields.right_invariant_fields(group)
    grid = traj.fields[0].grid
    win = _central_window(grid.shape, fraction)
    m = vf.count

    def dir_sups(f: Field) -> list[float]:
        g = vfields.horizontal_gradient(vf, f).values
        return [float(np.abs(g[i][win]).max()) for i in range(m)]

    init = dir_sups(traj.fields[0])
    if spec.source.zero:
        src = [0.0] * m
    else:
        src = [0.0] * m
        for t in traj.times:
            fs = spec.source.at(float(t))
            if fs is None:
                continue
            sv = dir_sups(Field(grid, fs, float(t)))
            src = [max(a, b) for a, b in zip(src, sv)]
    observed = [0.0] * m
    for f in traj.fields:
        sv = dir_sups(f)
        observed = [max(a, b) for a, b in zip(observed, sv)]
    bounds = [i + s_ + slack * max(i + s_, 1e-30) for i, s_ in zip(init, src)]
    ok = all(o <= b for o, b in zip(observed, bounds))
    return BernsteinReport(
        frame_kind=vf.kind,
        observed=tuple(observed),
        initial=tuple(init),
        source=tuple(src),
        bounds=tuple(bounds),
        ok=ok,
    )
