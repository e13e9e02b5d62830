"""Horizontal calculus: invariant frames, their symbolic action, and grid stencils.

The left-invariant horizontal frame X_1..X_m and the right-invariant frame
Y_1..Y_m are polynomial vector fields derived from the group law.  Symbolic
routines (sympy) provide exact derivatives for oracle checks: commutators,
divergences, and the drift correction needed by the particle scheme.  Grid
routines realize

    grad_G f = (X_1 f, ..., X_m f),
    div_G  F = sum_i X_i F_i,
    lap_G  f = sum_i X_i^2 f = sum_{kl} A_kl d_k d_l f + sum_l c_l d_l f,

with A = sum_i a_i a_i^T, c_l = sum_i (a_i . grad) a_il, centered
second-order stencils for pure derivatives and the 4-point cross stencil
for mixed ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import sympy as sp

from .groups import GroupSpec, Poly, eval_poly, poly_diff
from .grid import Field, GridSpec, node_coordinates


@dataclass(frozen=True)
class VectorFieldSet:
    """A family of polynomial vector fields: coefficients[i][l] is component l of field i."""

    kind: str
    dim: int
    coefficients: tuple[tuple[Poly, ...], ...]

    @property
    def count(self) -> int:
        return len(self.coefficients)


def left_invariant_fields(group: GroupSpec) -> VectorFieldSet:
    return VectorFieldSet(kind="left", dim=group.dim, coefficients=group.left_field_table())


def right_invariant_fields(group: GroupSpec) -> VectorFieldSet:
    return VectorFieldSet(kind="right", dim=group.dim, coefficients=group.right_field_table())


def coordinate_field(dim: int, axis: int) -> VectorFieldSet:
    """The plain Euclidean partial d/dx_axis, as a one-field set (diagnostics)."""
    one: Poly = ((Fraction(1), tuple(0 for _ in range(dim))),)
    zero: Poly = ()
    comps = tuple(one if l == axis else zero for l in range(dim))
    return VectorFieldSet(kind="coordinate", dim=dim, coefficients=(comps,))


# ---------------------------------------------------------------------------
# symbolic layer
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def coordinate_symbols(dim: int) -> tuple[sp.Symbol, ...]:
    return sp.symbols(f"x1:{dim + 1}", real=True)


def poly_to_sympy(poly: Poly, xs: tuple[sp.Symbol, ...]) -> sp.Expr:
    expr = sp.Integer(0)
    for coeff, exps in poly:
        term = sp.Rational(coeff.numerator, coeff.denominator)
        for x, e in zip(xs, exps):
            if e:
                term *= x**e
        expr += term
    return sp.expand(expr)


def apply_field_analytic(vf: VectorFieldSet, i: int, f: sp.Expr) -> sp.Expr:
    """Exact X_i f for a symbolic expression f in the coordinates x1..xd."""
    xs = coordinate_symbols(vf.dim)
    out = sp.Integer(0)
    for l in range(vf.dim):
        coeff = poly_to_sympy(vf.coefficients[i][l], xs)
        if coeff != 0:
            out += coeff * sp.diff(f, xs[l])
    return sp.expand(out)


def commutator_apply(vf_a: VectorFieldSet, i: int, vf_b: VectorFieldSet, j: int, f: sp.Expr) -> sp.Expr:
    """[A_i, B_j] f computed symbolically."""
    return sp.expand(
        apply_field_analytic(vf_a, i, apply_field_analytic(vf_b, j, f))
        - apply_field_analytic(vf_b, j, apply_field_analytic(vf_a, i, f))
    )


def divergence_analytic(vf: VectorFieldSet, i: int) -> sp.Expr:
    xs = coordinate_symbols(vf.dim)
    out = sp.Integer(0)
    for l in range(vf.dim):
        out += sp.diff(poly_to_sympy(vf.coefficients[i][l], xs), xs[l])
    return sp.expand(out)


def stratonovich_correction(vf: VectorFieldSet) -> list[sp.Expr]:
    """sum_i (Da_i) a_i per coordinate; the Ito drift correction of the frame.

    The particle scheme may drop the correction only when this is
    identically zero, so verify before trusting it.
    """
    xs = coordinate_symbols(vf.dim)
    out = [sp.Integer(0) for _ in range(vf.dim)]
    for i in range(vf.count):
        comps = [poly_to_sympy(vf.coefficients[i][l], xs) for l in range(vf.dim)]
        for l in range(vf.dim):
            for k in range(vf.dim):
                out[l] += sp.diff(comps[l], xs[k]) * comps[k]
    return [sp.expand(e) for e in out]


def horizontal_laplacian_symbolic(vf: VectorFieldSet, f: sp.Expr) -> sp.Expr:
    out = sp.Integer(0)
    for i in range(vf.count):
        out += apply_field_analytic(vf, i, apply_field_analytic(vf, i, f))
    return sp.expand(out)


# ---------------------------------------------------------------------------
# grid stencils
# ---------------------------------------------------------------------------

def _axis_gradient(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    return np.gradient(values, h, axis=axis, edge_order=2)


def _second_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    out = np.empty_like(values)
    v = np.moveaxis(values, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    # one-sided second-order stencils at the box edges
    o[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    o[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return out


def _mixed_derivative(values: np.ndarray, h1: float, h2: float, ax1: int, ax2: int) -> np.ndarray:
    # nested first derivatives fill the edges, interior overwritten by the
    # standard 4-point cross stencil
    out = _axis_gradient(_axis_gradient(values, h2, ax2), h1, ax1)
    n1, n2 = values.shape[ax1], values.shape[ax2]
    v = np.moveaxis(np.moveaxis(values, ax1, 0), ax2, 1)
    o = np.moveaxis(np.moveaxis(out, ax1, 0), ax2, 1)
    o[1 : n1 - 1, 1 : n2 - 1] = (
        v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]
    ) / (4.0 * h1 * h2)
    return out


def _field_coefficients(vf: VectorFieldSet, grid: GridSpec) -> list[list[np.ndarray]]:
    coords = node_coordinates(grid)
    return [[eval_poly(vf.coefficients[i][l], coords) for l in range(vf.dim)] for i in range(vf.count)]


def horizontal_gradient(vf: VectorFieldSet, f: Field) -> Field:
    """(X_1 f, ..., X_m f) with centered differences for the Euclidean partials."""
    h = f.grid.spacings
    partials = [_axis_gradient(f.values, h[l], l) for l in range(f.grid.dim)]
    a = _field_coefficients(vf, f.grid)
    comps = []
    for i in range(vf.count):
        acc = np.zeros(f.grid.shape)
        for l in range(f.grid.dim):
            if not _all_zero(vf.coefficients[i][l]):
                acc = acc + a[i][l] * partials[l]
        comps.append(acc)
    return Field(f.grid, np.stack(comps), f.t)


def _all_zero(poly: Poly) -> bool:
    return all(c == 0 for c, _ in poly)


@lru_cache(maxsize=8)
def _laplacian_tables(vf: VectorFieldSet) -> tuple[tuple[tuple[Poly, ...], ...], tuple[Poly, ...]]:
    """(A_kl polynomial table, first-order correction c_l) for sum X_i^2."""
    d = vf.dim

    def poly_mul(p: Poly, q: Poly) -> Poly:
        terms: dict[tuple[int, ...], Fraction] = {}
        for c1, e1 in p:
            for c2, e2 in q:
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, Fraction(0)) + c1 * c2
        return tuple((c, e) for e, c in terms.items() if c != 0)

    def poly_add(p: Poly, q: Poly) -> Poly:
        terms: dict[tuple[int, ...], Fraction] = {}
        for c, e in list(p) + list(q):
            terms[e] = terms.get(e, Fraction(0)) + c
        return tuple((c, e) for e, c in terms.items() if c != 0)

    A: list[list[Poly]] = [[() for _ in range(d)] for _ in range(d)]
    C: list[Poly] = [() for _ in range(d)]
    for i in range(vf.count):
        ai = vf.coefficients[i]
        for k in range(d):
            for l in range(d):
                A[k][l] = poly_add(A[k][l], poly_mul(ai[k], ai[l]))
        for l in range(d):
            for k in range(d):
                C[l] = poly_add(C[l], poly_mul(ai[k], poly_diff(ai[l], k)))
    return tuple(tuple(row) for row in A), tuple(C)


def horizontal_laplacian(vf: VectorFieldSet, f: Field) -> Field:
    """Expanded form sum_kl A_kl d_k d_l + sum_l c_l d_l on the grid."""
    grid = f.grid
    h = grid.spacings
    coords = node_coordinates(grid)
    A, C = _laplacian_tables(vf)
    out = np.zeros(grid.shape)
    for k in range(grid.dim):
        if not _all_zero(A[k][k]):
            out += eval_poly(A[k][k], coords) * _second_derivative(f.values, h[k], k)
        for l in range(k + 1, grid.dim):
            if not _all_zero(A[k][l]):
                out += 2.0 * eval_poly(A[k][l], coords) * _mixed_derivative(f.values, h[k], h[l], k, l)
    for l in range(grid.dim):
        if not _all_zero(C[l]):
            out += eval_poly(C[l], coords) * _axis_gradient(f.values, h[l], l)
    return Field(grid, out, f.t)


def horizontal_divergence(vf: VectorFieldSet, F: Field) -> Field:
    """sum_i X_i F_i for an m-vector field."""
    if not F.is_vector or F.values.shape[0] != vf.count:
        raise ValueError("expected one component per field in the set")
    grid = F.grid
    h = grid.spacings
    a = _field_coefficients(vf, grid)
    out = np.zeros(grid.shape)
    for i in range(vf.count):
        for l in range(grid.dim):
            if not _all_zero(vf.coefficients[i][l]):
                out += a[i][l] * _axis_gradient(F.values[i], h[l], l)
    return Field(grid, out, F.t)


def second_gradient_sup(vf: VectorFieldSet, f: Field) -> float:
    """max_ij ||X_i X_j f||_inf via composed first-order stencils."""
    grad = horizontal_gradient(vf, f)
    worst = 0.0
    for j in range(vf.count):
        gj = Field(f.grid, grad.values[j], f.t)
        gg = horizontal_gradient(vf, gj)
        worst = max(worst, float(np.abs(gg.values).max()))
    return worst


def holder_seminorm(
    f: Field,
    alpha: float,
    group: GroupSpec,
    *,
    rng: np.random.Generator | None = None,
    n_pairs: int = 20000,
) -> float:
    """Sampled-pair estimate of sup |f(x)-f(y)| / rho(x,y)^alpha.

    All axis-neighbor pairs enter (they dominate for alpha <= 1 on smooth
    data), topped up with random long-range pairs.
    """
    from . import groups as G

    grid = f.grid
    vals = f.values.reshape(-1)
    pts = np.stack([c.reshape(-1) for c in node_coordinates(grid)], axis=-1)
    best = 0.0
    idx = np.arange(grid.num_nodes).reshape(grid.shape)
    for ax in range(grid.dim):
        a = np.moveaxis(idx, ax, 0)[:-1].reshape(-1)
        b = np.moveaxis(idx, ax, 0)[1:].reshape(-1)
        dist = G.quasi_distance(group, pts[a], pts[b])
        ratio = np.abs(vals[a] - vals[b]) / dist**alpha
        best = max(best, float(ratio.max()))
    if rng is not None and n_pairs > 0:
        a = rng.integers(0, grid.num_nodes, size=n_pairs)
        b = rng.integers(0, grid.num_nodes, size=n_pairs)
        keep = a != b
        a, b = a[keep], b[keep]
        dist = G.quasi_distance(group, pts[a], pts[b])
        ratio = np.abs(vals[a] - vals[b]) / dist**alpha
        if ratio.size:
            best = max(best, float(ratio.max()))
    return best
