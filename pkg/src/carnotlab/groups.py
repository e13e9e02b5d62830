"""Exact algebra of homogeneous nilpotent Lie groups in exponential coordinates.

A group of step k on R^d is described by integer weights w_1 <= ... <= w_d
(w_i <= k) and a polynomial correction table for the product

    (x * y)_l = x_l + y_l + sum_terms  c * x^p * y^q,

where every correction term is jointly homogeneous of degree w_l under the
anisotropic dilations  delta_lam(x)_i = lam^{w_i} x_i.  In exponential
coordinates of the first kind the inverse is coordinate negation and the
homogeneous norm

    ||x||_G = ( sum_i |x_i|^{2k!/w_i} )^{1/(2k!)}

satisfies ||delta_lam x||_G = lam ||x||_G.  The quasi-distance used across
the package is the left-invariant  rho(x, y) = ||y^{-1} * x||_G.

Coefficients are stored as exact rationals so the symbolic layer can verify
bracket relations without rounding; numeric evaluation converts to float
once and is vectorized over trailing batch axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

# A polynomial is a tuple of (coefficient, exponent-multi-index) monomials.
PolyTerm = tuple[Fraction, tuple[int, ...]]
Poly = tuple[PolyTerm, ...]
# A product-law term couples a monomial in x with a monomial in y.
LawTerm = tuple[Fraction, tuple[int, ...], tuple[int, ...]]


def _monomial(coords: Sequence[np.ndarray], exponents: tuple[int, ...]) -> np.ndarray | float:
    out: np.ndarray | float = 1.0
    for c, e in zip(coords, exponents):
        if e == 1:
            out = out * c
        elif e > 1:
            out = out * c**e
    return out


def eval_poly(poly: Poly, coords: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate a monomial-table polynomial on broadcastable coordinate arrays."""
    acc = np.zeros(np.broadcast_shapes(*(np.shape(c) for c in coords)))
    for coeff, exps in poly:
        acc = acc + float(coeff) * _monomial(coords, exps)
    return acc


def poly_diff(poly: Poly, axis: int) -> Poly:
    out = []
    for coeff, exps in poly:
        e = exps[axis]
        if e > 0:
            new = list(exps)
            new[axis] = e - 1
            out.append((coeff * e, tuple(new)))
    return tuple(out)


def poly_is_zero(poly: Poly) -> bool:
    return all(c == 0 for c, _ in poly)


@dataclass(frozen=True)
class GroupSpec:
    """Immutable description of one homogeneous group.

    law[l] holds the correction terms of coordinate l of the product (the
    linear part x_l + y_l is implicit).  The left/right invariant frame
    tables are derived from the law, so the law is the single source of
    truth for the whole calculus.
    """

    name: str
    dim: int
    horizontal_dim: int
    step: int
    weights: tuple[int, ...]
    law: tuple[tuple[LawTerm, ...], ...]

    def __post_init__(self) -> None:
        if self.dim != len(self.weights):
            raise ValueError("weights length must equal dim")
        if self.dim != len(self.law):
            raise ValueError("law table must list every coordinate")
        if any(w < 1 or w > self.step for w in self.weights):
            raise ValueError("weights must lie in 1..step")
        if list(self.weights) != sorted(self.weights):
            raise ValueError("weights must be nondecreasing")
        if self.horizontal_dim != sum(1 for w in self.weights if w == 1):
            raise ValueError("horizontal_dim must count the weight-1 coordinates")

    @property
    def homogeneous_dimension(self) -> int:
        return int(sum(self.weights))

    @property
    def norm_root(self) -> int:
        # 2 k!; every exponent 2k!/w_i is an even integer
        return 2 * math.factorial(self.step)

    # -- derived vector-field coefficient tables -------------------------
    def left_field_table(self) -> tuple[tuple[Poly, ...], ...]:
        """Coefficients of the left-invariant horizontal frame.

        Field i is d/dt|_0 of x * (t e_i): component l equals
        delta_{li} plus the law terms of coordinate l whose y-monomial
        is exactly y_i.
        """
        return self._frame(slot=1)

    def right_field_table(self) -> tuple[tuple[Poly, ...], ...]:
        """Coefficients of the right-invariant horizontal frame (d/dt|_0 of (t e_i) * x)."""
        return self._frame(slot=0)

    def _frame(self, slot: int) -> tuple[tuple[Poly, ...], ...]:
        fields = []
        for i in range(self.horizontal_dim):
            unit = tuple(1 if a == i else 0 for a in range(self.dim))
            comps: list[Poly] = []
            for l in range(self.dim):
                terms: list[PolyTerm] = [(Fraction(1), tuple(0 for _ in range(self.dim)))] if l == i else []
                for coeff, px, py in self.law[l]:
                    probe, keep = (px, py) if slot == 0 else (py, px)
                    if probe == unit:
                        terms.append((coeff, keep))
                comps.append(tuple(terms))
            fields.append(tuple(comps))
        return tuple(fields)


# ---------------------------------------------------------------------------
# core operations (vectorized over trailing batch shape (..., dim))
# ---------------------------------------------------------------------------

def identity(spec: GroupSpec) -> np.ndarray:
    return np.zeros(spec.dim)


def multiply(spec: GroupSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Group product x * y, batched over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != spec.dim or y.shape[-1] != spec.dim:
        raise ValueError(f"expected trailing axis of size {spec.dim}")
    out = x + y
    xs = [x[..., l] for l in range(spec.dim)]
    ys = [y[..., l] for l in range(spec.dim)]
    for l, terms in enumerate(spec.law):
        for coeff, px, py in terms:
            out[..., l] += float(coeff) * _monomial(xs, px) * _monomial(ys, py)
    return out


def inverse(spec: GroupSpec, x: np.ndarray) -> np.ndarray:
    """Inverse is coordinate negation in exponential coordinates of the first kind."""
    return -np.asarray(x, dtype=float)


def dilate(spec: GroupSpec, lam, x: np.ndarray) -> np.ndarray:
    """Anisotropic dilation delta_lam; lam must be positive.

    lam may be a scalar or an array broadcastable against a single
    coordinate of x (batched dilations).
    """
    lam = np.asarray(lam, dtype=float)
    if not np.all(lam > 0):
        raise ValueError("dilation parameter must be positive")
    x = np.asarray(x, dtype=float)
    return np.stack(
        [x[..., i] * lam ** w for i, w in enumerate(spec.weights)], axis=-1
    )


def hom_norm(spec: GroupSpec, x: np.ndarray) -> np.ndarray:
    """Homogeneous norm (sum_i |x_i|^{2k!/w_i})^{1/(2k!)}."""
    x = np.asarray(x, dtype=float)
    r = spec.norm_root
    acc = np.zeros(x.shape[:-1])
    for i, w in enumerate(spec.weights):
        acc = acc + np.abs(x[..., i]) ** (r // w)
    return acc ** (1.0 / r)


def quasi_distance(spec: GroupSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Left-invariant quasi-distance ||y^{-1} * x||_G."""
    return hom_norm(spec, multiply(spec, inverse(spec, y), x))


# ---------------------------------------------------------------------------
# serialization: structured text round trip with exact rational coefficients
# ---------------------------------------------------------------------------

def to_text(spec: GroupSpec) -> str:
    doc = {
        "name": spec.name,
        "dim": spec.dim,
        "horizontal_dim": spec.horizontal_dim,
        "step": spec.step,
        "weights": list(spec.weights),
        "law": [
            [[str(coeff), list(px), list(py)] for coeff, px, py in terms]
            for terms in spec.law
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def from_text(text: str) -> GroupSpec:
    doc = json.loads(text)
    law = tuple(
        tuple((Fraction(c), tuple(px), tuple(py)) for c, px, py in terms)
        for terms in doc["law"]
    )
    return GroupSpec(
        name=doc["name"],
        dim=int(doc["dim"]),
        horizontal_dim=int(doc["horizontal_dim"]),
        step=int(doc["step"]),
        weights=tuple(int(w) for w in doc["weights"]),
        law=law,
    )


# ---------------------------------------------------------------------------
# shipped presets
# ---------------------------------------------------------------------------

def _h1() -> GroupSpec:
    half = Fraction(1, 2)
    z3 = (
        (half, (1, 0, 0), (0, 1, 0)),
        (-half, (0, 1, 0), (1, 0, 0)),
    )
    return GroupSpec(
        name="heisenberg1",
        dim=3,
        horizontal_dim=2,
        step=2,
        weights=(1, 1, 2),
        law=((), (), z3),
    )


def _engel() -> GroupSpec:
    half = Fraction(1, 2)
    tw = Fraction(1, 12)
    z3 = (
        (half, (1, 0, 0, 0), (0, 1, 0, 0)),
        (-half, (0, 1, 0, 0), (1, 0, 0, 0)),
    )
    # z4 = (x1 y3 - x3 y1)/2 + (x1 - y1)(x1 y2 - x2 y1)/12
    z4 = (
        (half, (1, 0, 0, 0), (0, 0, 1, 0)),
        (-half, (0, 0, 1, 0), (1, 0, 0, 0)),
        (tw, (2, 0, 0, 0), (0, 1, 0, 0)),
        (-tw, (1, 1, 0, 0), (1, 0, 0, 0)),
        (-tw, (1, 0, 0, 0), (1, 1, 0, 0)),
        (tw, (0, 1, 0, 0), (2, 0, 0, 0)),
    )
    return GroupSpec(
        name="engel",
        dim=4,
        horizontal_dim=2,
        step=3,
        weights=(1, 1, 2, 3),
        law=((), (), z3, z4),
    )


PRESETS: dict[str, Callable[[], GroupSpec]] = {
    "heisenberg1": _h1,
    "engel": _engel,
}


def preset(name: str) -> GroupSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown group preset {name!r}; available: {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomogeneousBoundReport:
    ok: bool
    sphere_max: float
    worst_ratio: float
    samples: int


def check_homogeneous_bound(
    spec: GroupSpec,
    g: Callable[[np.ndarray], np.ndarray],
    c: float,
    *,
    rng: np.random.Generator,
    box: float = 2.0,
    n_sphere: int = 2000,
    n_box: int = 2000,
) -> HomogeneousBoundReport:
    """Audit |g(x)| <= c ||x||_G for a degree-1 homogeneous g.

    The unit sphere {||x||_G = 1} is sampled by dilating random box points
    to norm one; if the bound holds there it holds everywhere by
    homogeneity, which the box sample double-checks.
    """
    raw = rng.uniform(-box, box, size=(n_sphere, spec.dim))
    norms = hom_norm(spec, raw)
    keep = norms > 1e-9
    raw, norms = raw[keep], norms[keep]
    sphere = np.stack([dilate(spec, 1.0 / n, p) for p, n in zip(raw, norms)])
    sphere_vals = np.abs(np.asarray(g(sphere)))
    sphere_max = float(sphere_vals.max())
    if sphere_max > c + 1e-12:
        raise ValueError(f"bound constant too small on the unit sphere: {sphere_max} > {c}")

    pts = rng.uniform(-box, box, size=(n_box, spec.dim))
    nrm = hom_norm(spec, pts)
    keep = nrm > 1e-9
    ratio = np.abs(np.asarray(g(pts[keep]))) / (c * nrm[keep])
    worst = float(ratio.max())
    return HomogeneousBoundReport(ok=worst <= 1.0 + 1e-12, sphere_max=sphere_max, worst_ratio=worst, samples=int(keep.sum()))


def equivalence_ratio_report(
    spec: GroupSpec, *, rng: np.random.Generator, box: float = 2.0, n: int = 4000
) -> dict[str, float]:
    """Empirical spread of quasi-distance against the Euclidean metric on a box.

    The two are topologically equivalent but not metrically so; the report
    gives the observed ratio range, no certified constants.
    """
    x = rng.uniform(-box, box, size=(n, spec.dim))
    y = rng.uniform(-box, box, size=(n, spec.dim))
    qd = quasi_distance(spec, x, y)
    eu = np.linalg.norm(x - y, axis=-1)
    keep = eu > 1e-9
    r = qd[keep] / eu[keep]
    return {
        "ratio_min": float(r.min()),
        "ratio_max": float(r.max()),
        "ratio_median": float(np.median(r)),
        "samples": float(keep.sum()),
    }
