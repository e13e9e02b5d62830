"""Bounded-Lipschitz (flat) distance between discrete measures, and the
compactly supported smoothing kernel adapted to the group translations.

d0(mu, nu) maximizes integral f d(mu - nu) over test functions with
||f||_inf + Lip(f) <= 1, Lipschitz taken in the quasi-distance.  On
finite supports this is a finite LP: variables f (one per support
point) and a norm split (alpha, beta) with |f| <= alpha,
|f(x) - f(y)| <= beta rho(x, y), alpha + beta <= 1.

The all-pairs constraint matrix is quadratic in the support size, so
the solver generates rows lazily: solve on an active pair set, scan all
pairs for violations, add the worst offenders, repeat.  The final scan
certifies feasibility of the full LP, which makes the relaxed optimum
exact (any feasible point of the full problem is feasible for the
relaxation, and the relaxed optimizer is full-feasible at convergence).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .grid import Field, GridSpec, Trajectory, node_coordinates
from .groups import GroupSpec, dilate, quasi_distance


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point masses; weights are plain masses (already include
    any cell volume factor)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights must align")
        if np.any(w < 0):
            raise ValueError("measure weights must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @staticmethod
    def from_field(
        f: Field, *, coarsen: int = 1, threshold: float = 1e-12
    ) -> "DiscreteMeasure":
        """Nonnegative part of a density field as a measure.

        coarsen > 1 bins fine nodes onto the subsampled lattice (fine
        index i -> coarse index round(i / coarsen)), preserving mass
        exactly; weights below threshold (relative to the largest) are
        dropped afterwards.
        """
        vals = np.clip(f.values, 0.0, None) * f.grid.cell_volume
        grid = f.grid
        if coarsen > 1:
            shape = tuple((n - 1) // coarsen + 1 for n in grid.shape)
            acc = np.zeros(shape)
            idx = np.meshgrid(
                *[np.rint(np.arange(n) / coarsen).astype(int).clip(0, s - 1)
                  for n, s in zip(grid.shape, shape)],
                indexing="ij",
            )
            np.add.at(acc, tuple(idx), vals)
            # coarse node coordinates: every coarsen-th fine node
            sub = tuple(ax[::coarsen][:s] for ax, s in zip(grid.axes(), shape))
            coords = np.stack(np.meshgrid(*sub, indexing="ij"), axis=-1)
            pts = coords.reshape(-1, grid.dim)
            w = acc.reshape(-1)
        else:
            pts = np.stack(node_coordinates(grid), axis=-1).reshape(-1, grid.dim)
            w = vals.reshape(-1)
        if w.size and w.max() > 0:
            keep = w > threshold * w.max()
        else:
            keep = w > 0
        return DiscreteMeasure(points=pts[keep], weights=w[keep])

    def to_csv(self, path: str) -> None:
        path = os.fspath(path)
        d = self.points.shape[1]
        header = ",".join(f"x{i+1}" for i in range(d)) + ",weight"
        lines = [header]
        for p, w in zip(self.points, self.weights):
            lines.append(",".join(repr(float(c)) for c in p) + "," + repr(float(w)))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def from_csv(path: str) -> "DiscreteMeasure":
        rows = np.loadtxt(os.fspath(path), delimiter=",", skiprows=1, ndmin=2)
        return DiscreteMeasure(points=rows[:, :-1], weights=rows[:, -1])


@dataclass(frozen=True)
class FlatMetricResult:
    value: float
    status: str
    gap: float
    optimizer: np.ndarray
    support: np.ndarray
    rounds: int

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "trivial")

    def to_json_dict(self) -> dict:
        return {"value": self.value, "status": self.status, "gap": self.gap, "rounds": self.rounds}


# ---------------------------------------------------------------------------
# LP
# ---------------------------------------------------------------------------

def _merge_supports(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Union support and the signed weight mu - nu per union point."""
    seen: dict[tuple, int] = {}
    pts: list[np.ndarray] = []
    delta: list[float] = []
    for sgn, meas in ((1.0, mu), (-1.0, nu)):
        for p, w in zip(meas.points, meas.weights):
            key = tuple(p)
            i = seen.get(key)
            if i is None:
                seen[key] = len(pts)
                pts.append(p)
                delta.append(sgn * w)
            else:
                delta[i] += sgn * w
    return np.array(pts), np.array(delta)


def _pair_scan(points: np.ndarray, f: np.ndarray, beta: float, group: GroupSpec,
               top_k: int, chunk: int = 512):
    """Worst Lipschitz violations |f_i - f_j| - beta rho_ij over all pairs.

    Returns (max_violation, array of (i, j) pairs sorted worst-first,
    capped at top_k).  Deterministic: ties broken by index order.
    """
    n = points.shape[0]
    best_viol = -math.inf
    cand: list[tuple[float, int, int]] = []
    for i0 in range(0, n, chunk):
        i1 = min(i0 + chunk, n)
        block = points[i0:i1]
        d = quasi_distance(group, block[:, None, :], points[None, :, :])
        viol = np.abs(f[i0:i1, None] - f[None, :]) - beta * d
        iu = np.triu_indices(i1 - i0, k=1, m=n)
        mask = iu[1] > iu[0] + i0
        rows, cols = iu[0][mask], iu[1][mask]
        v = viol[rows, cols]
        if v.size == 0:
            continue
        best_viol = max(best_viol, float(v.max()))
        if top_k > 0:
            take = np.argsort(v)[::-1][:top_k]
            for t in take:
                if v[t] > 0:
                    cand.append((float(v[t]), int(rows[t] + i0), int(cols[t])))
    cand.sort(key=lambda r: (-r[0], r[1], r[2]))
    pairs = np.array([(i, j) for _, i, j in cand[:top_k]], dtype=int).reshape(-1, 2)
    return best_viol, pairs


def flat_distance(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    group: GroupSpec,
    *,
    tol: float = 1e-8,
    max_rounds: int = 60,
    top_k: int = 2000,
) -> FlatMetricResult:
    """Flat distance by lazy constraint generation; exact at convergence."""
    points, delta = _merge_supports(mu, nu)
    n = points.shape[0]
    if n == 0 or np.abs(delta).max() == 0.0:
        return FlatMetricResult(0.0, "trivial", 0.0, np.zeros(0), points, 0)

    c = np.concatenate([-delta, [0.0, 0.0]])
    bounds = [(-1.0, 1.0)] * n + [(0.0, 1.0), (0.0, 1.0)]

    # static rows: f_i - alpha <= 0, -f_i - alpha <= 0, alpha + beta <= 1
    eye = sps.eye(n, format="csr")
    neg_alpha = sps.csr_matrix((np.full(n, -1.0), (np.arange(n), np.zeros(n, int))), shape=(n, 1))
    zero_col = sps.csr_matrix((n, 1))
    top = sps.hstack([eye, neg_alpha, zero_col], format="csr")
    bot = sps.hstack([-eye, neg_alpha, zero_col], format="csr")
    last = sps.csr_matrix((np.array([1.0, 1.0]), (np.zeros(2, int), np.array([n, n + 1]))), shape=(1, n + 2))
    static = sps.vstack([top, bot, last], format="csr")
    static_b = np.zeros(2 * n + 1)
    static_b[-1] = 1.0

    # seed pairs: Euclidean nearest neighbors (binding Lipschitz rows are
    # mostly local), a lexicographic chain, and a clique on the heaviest points
    order = np.lexsort(points.T[::-1])
    seeds = {(int(a), int(b)) if a < b else (int(b), int(a))
             for a, b in zip(order[:-1], order[1:])}
    if n > 2:
        kq = min(9, n)
        _, nbr = cKDTree(points).query(points, k=kq)
        for i in range(n):
            for j in nbr[i][1:]:
                a, b = (i, int(j)) if i < j else (int(j), i)
                if a != b:
                    seeds.add((a, b))
    heavy = np.argsort(-np.abs(delta))[: min(n, 64)]
    for ii in range(len(heavy)):
        for jj in range(ii + 1, len(heavy)):
            a, b = int(heavy[ii]), int(heavy[jj])
            seeds.add((a, b) if a < b else (b, a))
    active = sorted(seeds)

    def pair_rows(pairs):
        """Rows f_i - f_j - beta d_ij <= 0 and the mirror, one COO batch."""
        p = np.asarray(pairs, dtype=int).reshape(-1, 2)
        k = p.shape[0]
        d = quasi_distance(group, points[p[:, 0]], points[p[:, 1]])
        r = np.arange(2 * k)
        row_idx = np.concatenate([np.repeat(r, 3)])
        col_idx = np.concatenate(
            [np.stack([p[:, 0], p[:, 1], np.full(k, n + 1)], 1).ravel(),
             np.stack([p[:, 0], p[:, 1], np.full(k, n + 1)], 1).ravel()])
        data = np.concatenate(
            [np.stack([np.ones(k), -np.ones(k), -d], 1).ravel(),
             np.stack([-np.ones(k), np.ones(k), -d], 1).ravel()])
        m = sps.csr_matrix((data, (row_idx, col_idx)), shape=(2 * k, n + 2))
        return m, np.zeros(2 * k)

    rows, rhs = pair_rows(active)
    rows, rhs = [rows], [rhs]
    status = "iteration-limit"
    gap = math.inf
    f = np.zeros(n)
    alpha = beta = 0.0
    value = 0.0
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        A = sps.vstack([static] + rows, format="csr")
        b = np.concatenate([static_b] + rhs)
        res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
        if res.status != 0:
            return FlatMetricResult(float("nan"), f"lp-error:{res.message}", math.inf, np.zeros(0), points, rounds)
        f = res.x[:n]
        alpha, beta = res.x[n], res.x[n + 1]
        value = -res.fun
        viol, new_pairs = _pair_scan(points, f, beta, group, top_k)
        gap = max(0.0, viol)
        if viol <= tol:
            status = "optimal"
            break
        fresh = [(int(i), int(j)) for i, j in new_pairs if (int(i), int(j)) not in seeds]
        if not fresh:
            status = "stalled"
            break
        seeds.update(fresh)
        r2, b2 = pair_rows(fresh)
        rows.append(r2)
        rhs.append(b2)
    return FlatMetricResult(float(value), status, float(gap), f, points, rounds)


def two_dirac_distance(group: GroupSpec, x, y) -> float:
    """Closed form for unit diracs: with r = rho(x, y), the optimum pays
    f(x) = -f(y) = alpha and saturates 2 alpha = (1 - alpha) r."""
    r = float(quasi_distance(group, np.asarray(x, float), np.asarray(y, float)))
    return 2 * r / (r + 2)


# ---------------------------------------------------------------------------
# mollifier
# ---------------------------------------------------------------------------

def _profile(s: np.ndarray) -> np.ndarray:
    """exp(1 / (s - 1)) for s < 1 and 0 outside; s = (||x||/eps)^{2k!}."""
    out = np.zeros_like(s)
    inside = s < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[inside] = np.exp(1.0 / (s[inside] - 1.0))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """Scaled kernel data on a given grid: lattice offsets u inside the
    eps-ball with convex weights w_u (sum exactly 1), plus the derived
    normalization constant C of the continuum scaling (C / eps^Q)
    xi(delta_{1/eps} x)."""

    eps: float
    C: float
    step: int
    offsets: np.ndarray
    weights: np.ndarray

    @staticmethod
    def build(eps: float, grid: GridSpec, group: GroupSpec) -> "MollifierSpec":
        h = grid.spacings
        if eps < 3 * max(h):
            raise ValueError(f"eps={eps:g} under-resolved: need eps >= 3 max(h)")
        ranges = []
        for k, w in enumerate(group.weights):
            # offsets with |u_k| <= eps^w are the only candidates
            reach = int(math.floor(eps**w / h[k])) + 1
            ranges.append(np.arange(-reach, reach + 1) * h[k])
        mesh = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, group.dim)
        scaled = dilate(group, 1.0 / eps, mesh)
        r = group.norm_root
        s = np.zeros(mesh.shape[0])
        for i, w in enumerate(group.weights):
            s += np.abs(scaled[:, i]) ** (r // w)
        raw = _profile(s)
        keep = raw > 0
        offsets, raw = mesh[keep], raw[keep]
        total = raw.sum()
        if total <= 0:
            raise ValueError("empty kernel; eps too small for the lattice")
        weights = raw / total
        cell = float(np.prod(h))
        C = eps**group.homogeneous_dimension / (total * cell)
        return MollifierSpec(eps=eps, C=C, step=group.step, offsets=offsets, weights=weights)


def kernel_field(m: MollifierSpec, grid: GridSpec, group: GroupSpec) -> Field:
    """The scaled kernel (C / eps^Q) xi(delta_{1/eps} x) sampled on the grid."""
    pts = np.stack(node_coordinates(grid), axis=-1)
    scaled = dilate(group, 1.0 / m.eps, pts.reshape(-1, group.dim))
    r = group.norm_root
    s = np.zeros(scaled.shape[0])
    for i, w in enumerate(group.weights):
        s += np.abs(scaled[:, i]) ** (r // w)
    vals = m.C / m.eps**group.homogeneous_dimension * _profile(s)
    return Field(grid, vals.reshape(grid.shape))


def mollify(rho: Field, m: MollifierSpec, group: GroupSpec) -> Field:
    """Group-translation smoothing phi_eps(x) = sum_u w_u phi(x * u).

    The offsets u live on the grid lattice in the horizontal slots, so
    those shifts are exact index moves; the vertical slot of x * u picks
    up the area correction (x1 u2 - x2 u1)/2, constant along each
    vertical column, applied by linear interpolation.  Weights are
    convex, so the sup norm never grows, and each shift preserves column
    sums (mass) until the support reaches the box edge.
    """
    if group.dim != 3:
        raise NotImplementedError("mollifier shifts are wired for the 3d group")
    grid = rho.grid
    h1, h2, h3 = grid.spacings
    X, Y, _ = node_coordinates(grid)
    n3 = grid.shape[2]
    out = np.zeros_like(rho.values)
    base_idx = np.arange(n3)
    for (u1, u2, u3), w in zip(m.offsets, m.weights):
        i_off = int(round(u1 / h1))
        j_off = int(round(u2 / h2))
        shifted = np.zeros_like(rho.values)
        src_i = slice(max(0, i_off), grid.shape[0] + min(0, i_off))
        dst_i = slice(max(0, -i_off), grid.shape[0] - max(0, i_off))
        src_j = slice(max(0, j_off), grid.shape[1] + min(0, j_off))
        dst_j = slice(max(0, -j_off), grid.shape[1] - max(0, j_off))
        # value at x is read from x shifted by +u in the group sense
        shifted[dst_i, dst_j, :] = rho.values[src_i, src_j, :]
        s = u3 + 0.5 * (X[:, :, 0] * u2 - Y[:, :, 0] * u1)
        steps = s / h3
        lo = np.floor(steps).astype(int)
        frac = steps - lo
        k_lo = base_idx[None, None, :] + lo[:, :, None]
        k_hi = k_lo + 1
        v_lo = np.where((k_lo >= 0) & (k_lo < n3), np.take_along_axis(shifted, k_lo.clip(0, n3 - 1), axis=2), 0.0)
        v_hi = np.where((k_hi >= 0) & (k_hi < n3), np.take_along_axis(shifted, k_hi.clip(0, n3 - 1), axis=2), 0.0)
        out += w * ((1 - frac[:, :, None]) * v_lo + frac[:, :, None] * v_hi)
    return Field(grid, out, rho.t)


# ---------------------------------------------------------------------------
# time regularity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeHolderReport:
    exponent: float
    constant: float
    gaps: tuple[float, ...]
    distances: tuple[float, ...]
    verdict: str


def holder_in_time(
    traj: Trajectory,
    group: GroupSpec,
    *,
    coarsen: int = 2,
    threshold: float = 1e-12,
    base_index: int = 0,
    max_pairs: int = 6,
    lp_tol: float = 1e-8,
) -> TimeHolderReport:
    """Fit d0(rho_s, rho_t) against |t - s| on trajectory snapshots.

    Distances are taken from one base snapshot to later ones (a ladder,
    not all pairs, to keep the LP count small).  A trajectory whose
    snapshots coincide is reported as degenerate.
    """
    idx = np.unique(np.linspace(base_index + 1, len(traj) - 1, max_pairs).astype(int))
    base = DiscreteMeasure.from_field(traj.fields[base_index], coarsen=coarsen, threshold=threshold)
    gaps, dists = [], []
    for i in idx:
        m_i = DiscreteMeasure.from_field(traj.fields[i], coarsen=coarsen, threshold=threshold)
        res = flat_distance(base, m_i, group, tol=lp_tol)
        if not res.ok:
            raise RuntimeError(f"flat distance failed: {res.status}")
        gaps.append(traj.times[i] - traj.times[base_index])
        dists.append(res.value)
    gaps_a, dists_a = np.asarray(gaps), np.asarray(dists)
    if np.all(dists_a <= max(1e-14, lp_tol)):
        return TimeHolderReport(float("nan"), 0.0, tuple(gaps), tuple(dists), "degenerate")
    lx = np.log(gaps_a)
    ly = np.log(np.maximum(dists_a, 1e-300))
    lx_c = lx - lx.mean()
    slope = float((lx_c * ly).sum() / (lx_c**2).sum())
    intercept = float(ly.mean() - slope * lx.mean())
    return TimeHolderReport(slope, float(np.exp(intercept)), tuple(gaps), tuple(dists), "fitted")
