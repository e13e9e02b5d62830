"""Discretization substrate: box grids, node fields, truncation masks, CFL bookkeeping."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import groups
from .groups import GroupSpec, eval_poly


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centered grid on a box; at least 3 nodes per axis."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.lower) == len(self.upper) == len(self.shape)):
            raise ValueError("lower/upper/shape must agree in length")
        if any(n < 3 for n in self.shape):
            raise ValueError("need at least 3 nodes per axis")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("box corners out of order")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple((u - l) / (n - 1) for l, u, n in zip(self.lower, self.upper, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(l, u, n) for l, u, n in zip(self.lower, self.upper, self.shape))


_COORD_CACHE: dict[GridSpec, tuple[np.ndarray, ...]] = {}


def node_coordinates(grid: GridSpec) -> tuple[np.ndarray, ...]:
    """Meshgrid coordinate arrays (ij indexing), cached per grid."""
    got = _COORD_CACHE.get(grid)
    if got is None:
        got = tuple(np.meshgrid(*grid.axes(), indexing="ij"))
        _COORD_CACHE[grid] = got
    return got


def node_points(grid: GridSpec) -> np.ndarray:
    """All nodes as an (N, d) array in C order."""
    return np.stack([c.reshape(-1) for c in node_coordinates(grid)], axis=-1)


def default_grid(extent: float = 2.0, nodes: int = 41, dim: int = 3) -> GridSpec:
    return GridSpec(lower=(-extent,) * dim, upper=(extent,) * dim, shape=(nodes,) * dim)


@dataclass(frozen=True)
class Field:
    """One snapshot: scalar values on grid nodes, or an m-vector per node
    (leading axis indexes components).  Treated as immutable.
    """

    grid: GridSpec
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        ok = v.shape == self.grid.shape or (
            v.ndim == len(self.grid.shape) + 1 and v.shape[1:] == self.grid.shape
        )
        if not ok:
            raise ValueError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field values must be finite")

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == len(self.grid.shape) + 1

    def with_values(self, values: np.ndarray, t: float | None = None) -> "Field":
        return Field(self.grid, values, self.t if t is None else t)

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def l2_norm_sq(self) -> float:
        return float((self.values**2).sum() * self.grid.cell_volume)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered sequence of field snapshots from one solver run."""

    times: tuple[float, ...]
    fields: tuple[Field, ...]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.fields) or not self.times:
            raise ValueError("times and fields must align and be nonempty")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must increase")

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def at(self, t: float, tol: float = 1e-9) -> Field:
        i = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[i] - t) > tol:
            raise KeyError(f"no snapshot at t={t:g}; nearest is {self.times[i]:g}")
        return self.fields[i]


def constant_field(grid: GridSpec, value: float, t: float = 0.0) -> Field:
    return Field(grid, np.full(grid.shape, float(value)), t)


@dataclass(frozen=True)
class BallMask:
    """Indicator of the truncation ball {||x||_G < R} with its boundary layer."""

    radius: float
    inside: np.ndarray
    boundary_layer: np.ndarray

    @property
    def num_inside(self) -> int:
        return int(self.inside.sum())


def make_ball_mask(grid: GridSpec, group: GroupSpec, radius: float) -> BallMask:
    if radius <= 0:
        raise ValueError("radius must be positive")
    pts = np.stack(node_coordinates(grid), axis=-1)
    inside = groups.hom_norm(group, pts) < radius
    if not inside.any():
        raise ValueError(f"ball of radius {radius} contains no grid node")
    # boundary layer: inside nodes with an outside (or box-edge) axis neighbor
    layer = np.zeros_like(inside)
    for ax in range(grid.dim):
        lo = np.ones_like(inside)
        hi = np.ones_like(inside)
        sl_in = [slice(None)] * grid.dim
        sl_out = [slice(None)] * grid.dim
        sl_in[ax], sl_out[ax] = slice(1, None), slice(None, -1)
        lo[tuple(sl_in)] = inside[tuple(sl_out)]
        hi[tuple(sl_out)] = inside[tuple(sl_in)]
        layer |= inside & ~(lo & hi)
    return BallMask(radius=float(radius), inside=inside, boundary_layer=layer)


@dataclass(frozen=True)
class SolverParams:
    sigma: float
    gamma: float = 2.0
    dt: float | None = None
    cfl_safety: float = 0.8
    radius: float | None = None
    tol_abs: float = 1e-8
    tol_rel: float = 1e-6
    max_iterations: int = 200

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.gamma < 2:
            raise ValueError("gamma must be >= 2")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (0 < self.cfl_safety <= 1):
            raise ValueError("cfl_safety in (0, 1]")


def diffusion_matrix(group: GroupSpec, coords: Sequence[np.ndarray]) -> list[list[np.ndarray]]:
    """A(x) = sum_i a_i a_i^T from the left-invariant coefficient table."""
    table = group.left_field_table()
    d = group.dim
    a = [[eval_poly(table[i][l], coords) for l in range(d)] for i in range(len(table))]
    return [[sum(a[i][k] * a[i][l] for i in range(len(table))) for l in range(d)] for k in range(d)]


def max_stable_dt(
    grid: GridSpec,
    group: GroupSpec,
    vf,
    sigma: float,
    b: Field | np.ndarray | None = None,
) -> float:
    """Explicit-scheme stability bound (without the safety factor).

    dt_max = min over nodes of
        ( sum_k sigma A_kk/h_k^2 + sum_k |Btilde_k|/h_k
          + sigma sum_{k != l} |A_kl| / (2 h_k h_l) )^{-1},
    with A = sum a_i a_i^T and Btilde = sum b_i a_i.  Returns +inf when the
    drift and diffusion vanish ("unconstrained").
    """
    coords = node_coordinates(grid)
    h = grid.spacings
    d = grid.dim
    table = vf.coefficients if vf is not None else group.left_field_table()
    a = [[eval_poly(table[i][l], coords) for l in range(d)] for i in range(len(table))]
    denom = np.zeros(grid.shape)
    if sigma > 0:
        for k in range(d):
            for l in range(d):
                akl = sum(a[i][k] * a[i][l] for i in range(len(table)))
                if k == l:
                    denom += sigma * akl / h[k] ** 2
                else:
                    denom += sigma * np.abs(akl) / (2.0 * h[k] * h[l])
    if b is not None:
        bv = b.values if isinstance(b, Field) else np.asarray(b, dtype=float)
        if bv.ndim == 1:
            bv = bv.reshape((-1,) + (1,) * d)
        for k in range(d):
            btk = sum(bv[i] * a[i][k] for i in range(len(table)))
            denom += np.abs(btk) / h[k]
    m = float(denom.max())
    if m <= 0.0:
        return math.inf
    return 1.0 / m


# ---------------------------------------------------------------------------
# dump format: CSV of node coordinates plus value, JSON sidecar, exact round trip
# ---------------------------------------------------------------------------

def dump_field_csv(f: Field, path: str) -> None:
    """Write a scalar field as CSV (x1..xd,value) plus a JSON sidecar.

    Floats are written with repr (shortest round-trip form), so loading
    reproduces the array bit for bit.
    """
    if f.is_vector:
        raise ValueError("CSV dump is defined for scalar fields; dump components separately")
    path = os.fspath(path)
    d = f.grid.dim
    header = ",".join(f"x{i+1}" for i in range(d)) + ",value"
    pts = node_points(f.grid)
    vals = f.values.reshape(-1)
    lines = [header]
    for row, v in zip(pts, vals):
        lines.append(",".join(repr(float(c)) for c in row) + "," + repr(float(v)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = {
        "grid": {"lower": list(f.grid.lower), "upper": list(f.grid.upper), "shape": list(f.grid.shape)},
        "t": f.t,
        "kind": "scalar",
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_field_csv(path: str) -> Field:
    path = os.fspath(path)
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    g = sidecar["grid"]
    grid = GridSpec(lower=tuple(g["lower"]), upper=tuple(g["upper"]), shape=tuple(g["shape"]))
    with open(path) as fh:
        lines = fh.read().strip().split("\n")
    vals = np.array([float(line.rsplit(",", 1)[1]) for line in lines[1:]])
    return Field(grid, vals.reshape(grid.shape), t=float(sidecar["t"]))


# ---------------------------------------------------------------------------
# stock data: smooth compactly supported bumps built on the homogeneous norm
# ---------------------------------------------------------------------------

def bump_profile(group: GroupSpec, coords: Sequence[np.ndarray], center: Sequence[float] | None = None, radius: float = 1.0) -> np.ndarray:
    """exp(1/(s-1)) on s<1 with s = (||c^{-1} x||_G / radius)^{2k!}; zero outside.

    Smooth, compactly supported in the quasi-ball of the given radius around
    the center (center offset by left translation).
    """
    pts = np.stack(np.broadcast_arrays(*coords), axis=-1)
    if center is not None:
        pts = groups.multiply(group, -np.asarray(center, dtype=float), pts)
    s = (groups.hom_norm(group, pts) / radius) ** group.norm_root
    out = np.zeros(s.shape)
    inside = s < 1.0
    with np.errstate(divide="ignore"):
        out[inside] = np.exp(1.0 / (s[inside] - 1.0))
    return out


def bump_field(grid: GridSpec, group: GroupSpec, *, center: Sequence[float] | None = None, radius: float = 1.0, normalize: bool = False, amplitude: float = 1.0, t: float = 0.0) -> Field:
    vals = bump_profile(group, node_coordinates(grid), center=center, radius=radius)
    if normalize:
        s = vals.sum() * grid.cell_volume
        if s <= 0:
            raise ValueError("bump has no mass on this grid")
        vals = vals / s
    else:
        vals = amplitude * vals / vals.max()
    return Field(grid, vals, t)
