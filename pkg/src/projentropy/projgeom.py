"""Projective geometry of the line P(E) and the plane P(V).

Points are stored in a canonical homogeneous form (max-abs component 1, first
clearly nonzero component positive), so equality up to scale becomes a
coordinate comparison. Cross-ratios are returned as :class:`ExtReal`, a
numerator/denominator pair, so infinity never enters float arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import AtInfinity, DegenerateTuple, NotProjective, OutOfChart
from .exprcalc import as_expr, jet_eval

EQ_TOL = 1e-12


def _canonical(coords, tol=1e-14) -> tuple:
    v = np.asarray(coords, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite homogeneous coordinates {coords}")
    m = np.max(np.abs(v))
    if m == 0:
        raise DegenerateTuple("homogeneous coordinates are all zero")
    v = v / m
    for c in v:
        if abs(c) > tol:
            if c < 0:
                v = -v
            break
    return tuple(float(c) + 0.0 for c in v)


def _same(p, q, tol=EQ_TOL) -> bool:
    return max(abs(a - b) for a, b in zip(p, q)) <= tol


def det2(p, q) -> float:
    return p[0] * q[1] - p[1] * q[0]


@dataclass(frozen=True, eq=False)
class HPoint1:
    """Point of the projective line, P(R(h0 e1 + h1 e2))."""

    coords: tuple

    def __post_init__(self):
        if len(self.coords) != 2:
            raise ValueError("HPoint1 needs two coordinates")
        object.__setattr__(self, "coords", _canonical(self.coords))

    @classmethod
    def from_affine(cls, x: float) -> "HPoint1":
        return cls((1.0, x))

    @classmethod
    def infinity(cls) -> "HPoint1":
        return cls((0.0, 1.0))

    @property
    def is_infinity(self) -> bool:
        return abs(self.coords[0]) <= EQ_TOL

    def affine(self) -> float:
        """The coordinate x of [1:x]; raises AtInfinity for [0:1]."""
        if self.is_infinity:
            raise AtInfinity("point at infinity has no affine coordinate")
        return self.coords[1] / self.coords[0]

    def vector(self) -> np.ndarray:
        return np.array(self.coords)

    def __eq__(self, other):
        if not isinstance(other, HPoint1):
            return NotImplemented
        return _same(self.coords, other.coords)

    __hash__ = None

    def __repr__(self):
        return f"HPoint1({self.coords[0]:.17g}:{self.coords[1]:.17g})"


@dataclass(frozen=True, eq=False)
class HPoint2:
    """Point of the projective plane in homogeneous coordinates."""

    coords: tuple

    def __post_init__(self):
        if len(self.coords) != 3:
            raise ValueError("HPoint2 needs three coordinates")
        object.__setattr__(self, "coords", _canonical(self.coords))

    @classmethod
    def from_affine(cls, x: float, y: float) -> "HPoint2":
        return cls((x, y, 1.0))

    @property
    def at_infinity(self) -> bool:
        return abs(self.coords[2]) <= EQ_TOL

    def affine(self) -> tuple:
        if self.at_infinity:
            raise AtInfinity("point lies on the line at infinity")
        return self.coords[0] / self.coords[2], self.coords[1] / self.coords[2]

    def vector(self) -> np.ndarray:
        return np.array(self.coords)

    def __eq__(self, other):
        if not isinstance(other, HPoint2):
            return NotImplemented
        return _same(self.coords, other.coords)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PLine:
    """Line of the projective plane given by a covector; incidence is <l, p> = 0."""

    covector: tuple

    def __post_init__(self):
        object.__setattr__(self, "covector", _canonical(self.covector))

    def contains(self, p: HPoint2, tol: float = 1e-12) -> bool:
        return abs(float(np.dot(self.covector, p.coords))) <= tol

    def vector(self) -> np.ndarray:
        return np.array(self.covector)

    def __eq__(self, other):
        if not isinstance(other, PLine):
            return NotImplemented
        return _same(self.covector, other.covector)

    __hash__ = None


def join(p: HPoint2, q: HPoint2) -> PLine:
    if p == q:
        raise DegenerateTuple("join of a point with itself")
    return PLine(tuple(np.cross(p.coords, q.coords)))


def meet(l: PLine, m: PLine) -> HPoint2:
    if l == m:
        raise DegenerateTuple("meet of a line with itself")
    return HPoint2(tuple(np.cross(l.covector, m.covector)))


# ------------------------------------------------------------- cross-ratio

@dataclass(frozen=True)
class ExtReal:
    """Element num/den of the one-point compactified real line."""

    num: float
    den: float

    def __post_init__(self):
        m = max(abs(self.num), abs(self.den))
        if m == 0:
            raise DegenerateTuple("0/0 extended real")
        num, den = self.num / m, self.den / m
        if den < 0 or (den == 0 and num < 0):
            num, den = -num, -den
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def of(cls, x: float) -> "ExtReal":
        return cls(float(x), 1.0)

    @property
    def is_inf(self) -> bool:
        return abs(self.den) <= EQ_TOL * abs(self.num)

    @property
    def is_zero(self) -> bool:
        return abs(self.num) <= EQ_TOL * abs(self.den)

    @property
    def is_one(self) -> bool:
        return abs(self.num - self.den) <= EQ_TOL * abs(self.den)

    @property
    def value(self) -> float:
        return math.inf if self.den == 0 else self.num / self.den

    def __float__(self):
        return self.value

    def in_case(self, tag: str) -> bool:
        """Membership in the case sets excluding the value 1, 0 or infinity."""
        if tag in ("1", "C1"):
            return not self.is_one
        if tag in ("0", "C0"):
            return not self.is_zero
        if tag in ("inf", "Cinf"):
            return not self.is_inf
        raise ValueError(f"unknown case tag {tag!r}")

    def __repr__(self):
        return "ExtReal(inf)" if self.den == 0 else f"ExtReal({self.value:.17g})"


def _coords1(p) -> tuple:
    if isinstance(p, HPoint1):
        return p.coords
    if isinstance(p, ExtReal):
        return HPoint1((p.den, p.num)).coords
    if p is None or (isinstance(p, float) and math.isinf(p)):
        return (0.0, 1.0)
    return HPoint1.from_affine(float(p)).coords


def as_hpoint1(p) -> HPoint1:
    """Accept HPoint1, a float (inf allowed) or an ExtReal."""
    return p if isinstance(p, HPoint1) else HPoint1(_coords1(p))


def _check_levels(points):
    for i in range(4):
        same = sum(1 for j in range(4) if _same(points[i], points[j]))
        if same > 2:
            raise DegenerateTuple("three of the four points coincide")


def cross_ratio(a, b, c, d) -> ExtReal:
    """[a, b, c, d] = det(a,c) det(b,d) / (det(a,d) det(b,c)).

    Normalized so that [[1:x], [1:1], [1:0], [0:1]] = x.
    """
    pts = [_coords1(p) for p in (a, b, c, d)]
    _check_levels(pts)
    a, b, c, d = pts
    num = det2(a, c) * det2(b, d)
    den = det2(a, d) * det2(b, c)
    if num == 0 and den == 0:
        raise DegenerateTuple("cross-ratio is 0/0")
    return ExtReal(num, den)


def cross_ratio_many(a, b, c, d) -> np.ndarray:
    """Vectorized cross-ratio on (N, 2) arrays of homogeneous rows (floats, inf allowed)."""
    num, den = _kernels.cross_ratio_terms(a, b, c, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den


def harmonic_conjugate(p, x, y) -> HPoint1:
    """The point B with [B, p, x, y] = -1."""
    pc, xc, yc = (_coords1(v) for v in (p, x, y))
    if _same(xc, yc) or _same(pc, xc) or _same(pc, yc):
        raise DegenerateTuple("harmonic conjugate needs p, x, y distinct")
    v = det2(pc, yc) * np.array(xc) + det2(pc, xc) * np.array(yc)
    return HPoint1(tuple(v))


# ------------------------------------------------------------------ charts

def _basis(basis) -> np.ndarray:
    b = np.asarray(basis, dtype=float).reshape(2, 2)
    if abs(det2(b[0], b[1])) < 1e-300:
        raise DegenerateTuple("basis vectors are dependent")
    return b


def chart_map(basis, q) -> float:
    """Chart coordinate x with q = P(R(e1 + x e2)) for basis rows e1, e2."""
    b = _basis(basis)
    qv = np.array(_coords1(q))
    alpha, beta = np.linalg.solve(b.T, qv)
    if abs(alpha) <= EQ_TOL * max(abs(beta), 1e-300):
        raise OutOfChart("point is the excluded direction of the chart")
    return float(beta / alpha)


def chart_inv(basis, x: float) -> HPoint1:
    b = _basis(basis)
    return HPoint1(tuple(b[0] + x * b[1]))


def chart_transition(t, xp):
    """Old chart coordinate for new coordinate ``xp`` when e_i' = sum_j t[i][j] e_j."""
    t = np.asarray(t, dtype=float)
    den = t[0, 0] + xp * t[1, 0]
    if np.any(np.asarray(den) == 0):
        raise OutOfChart("new coordinate hits the old excluded direction")
    return (t[0, 1] + xp * t[1, 1]) / den


def tautologic_section(e, q, l1) -> np.ndarray:
    """The vector v on the line of q with v - e on the line of l1."""
    e = np.asarray(e, dtype=float)
    qv = np.array(_coords1(q))
    lv = np.array(_coords1(l1))
    m = np.column_stack([qv, -lv])
    dm = det2(qv, lv)
    if abs(dm) <= EQ_TOL:
        raise OutOfChart("q coincides with the excluded line")
    if abs(det2(e, lv)) <= EQ_TOL * np.linalg.norm(e) * np.linalg.norm(lv):
        raise OutOfChart("e lies on the excluded line")
    lam, _ = np.linalg.solve(m, e)
    return lam * qv


# ----------------------------------------------------------- projective maps

@dataclass(frozen=True, eq=False)
class ProjMap1:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(2, 2)
        if abs(np.linalg.det(m)) < 1e-300:
            raise DegenerateTuple("singular 2x2 map")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, p) -> HPoint1:
        return HPoint1(tuple(self.matrix @ np.array(_coords1(p))))


@dataclass(frozen=True, eq=False)
class ProjMap2:
    """Projective map of the plane, a nonsingular 3x3 matrix up to scale."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(m)) < 1e-300:
            raise DegenerateTuple("singular 3x3 map")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, p: HPoint2) -> HPoint2:
        return HPoint2(tuple(self.matrix @ np.array(p.coords)))

    def line(self, l: PLine) -> PLine:
        return PLine(tuple(np.linalg.inv(self.matrix).T @ np.array(l.covector)))

    def __matmul__(self, other: "ProjMap2") -> "ProjMap2":
        return ProjMap2(self.matrix @ other.matrix)

    def inverse(self) -> "ProjMap2":
        return ProjMap2(np.linalg.inv(self.matrix))

    def affine(self, t, x):
        """Fractional-linear action on affine coordinates (t, x)."""
        s = self.matrix
        den = s[2, 0] * t + s[2, 1] * x + s[2, 2]
        if np.any(np.asarray(den) == 0):
            raise AtInfinity("image lies on the line at infinity")
        return (s[0, 0] * t + s[0, 1] * x + s[0, 2]) / den, (s[1, 0] * t + s[1, 1] * x + s[1, 2]) / den


def minor(s: np.ndarray, i: int, j: int) -> float:
    """Determinant of ``s`` with row i and column j deleted (0-based)."""
    rows = [r for r in range(3) if r != i]
    cols = [c for c in range(3) if c != j]
    sub = s[np.ix_(rows, cols)]
    return float(sub[0, 0] * sub[1, 1] - sub[0, 1] * sub[1, 0])


@dataclass(frozen=True, eq=False)
class LiftedMap:
    """Lift of a plane projective map to points with a slope direction (t, x, v)."""

    source: ProjMap2
    minors: np.ndarray = field(repr=False)

    def __call__(self, t, x, v):
        return apply_lift(self, t, x, v)


def lift_projmap(s) -> LiftedMap:
    s = s if isinstance(s, ProjMap2) else ProjMap2(s)
    m = s.matrix
    table = np.array([[minor(m, i, j) for j in range(3)] for i in range(3)])
    table.setflags(write=False)
    return LiftedMap(s, table)


def apply_lift(lifted: LiftedMap, t, x, v):
    """Image (t', x', v') of the point (t, x) carrying the direction of slope v.

    The slope transforms with the plain minors of the matrix (no alternating
    sign factor): numerator from the minors with the first row deleted,
    denominator from those with the second row deleted.
    """
    d = lifted.minors
    t2, x2 = lifted.source.affine(t, x)
    num = (-d[0, 2] * t + d[0, 0]) * v + (d[0, 2] * x + d[0, 1])
    den = (-d[1, 2] * t + d[1, 0]) * v + (d[1, 2] * x + d[1, 1])
    if np.any(np.asarray(den) == 0):
        raise AtInfinity("image direction is vertical")
    return t2, x2, num / den


# -------------------------------------------------------- projective jets

@dataclass(frozen=True, eq=False)
class Jet2Map:
    z: np.ndarray
    value: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray  # hessian[l, i, j] = d2 F_l / dz_i dz_j
    xi: np.ndarray
    residual: float
    sample_residual: float = 0.0


def _map_jets(components, variables, z):
    exprs = [as_expr(c) for c in components]
    n = len(variables)
    env = dict(zip(variables, (float(v) for v in z)))
    seeds = {v: i for i, v in enumerate(variables)}
    value = np.empty(len(exprs))
    jac = np.empty((len(exprs), n))
    hess = np.empty((len(exprs), n, n))
    for k, e in enumerate(exprs):
        j = jet_eval(e, env, seeds, n, order=2)
        value[k] = float(j.val)
        jac[k] = j.grad
        hess[k] = j.hess
    return value, jac, hess


def _xi_and_residual(jac, hess):
    m = jac.shape[0]
    a = np.einsum("kl,lij->kij", np.linalg.inv(jac), hess)
    xi = np.einsum("kik->i", a) / (m + 1)
    eye = np.eye(m)
    model = np.einsum("i,kj->kij", xi, eye) + np.einsum("j,ki->kij", xi, eye)
    res = float(np.linalg.norm(a - model))
    return xi, res, float(np.linalg.norm(a))


def projective_jet_test(components, z, variables: Sequence[str] = None, tol: float = 1e-8,
                        jets: Callable = None, samples: int = 4) -> Jet2Map:
    """Test whether a map is projective at ``z`` from its second-order jet.

    The map is given either as expression strings in ``variables`` or by a
    ``jets(z) -> (value, jacobian, hessian)`` callable. The trace form of
    F'^-1 F'' gives the covector xi; the map is accepted when the remainder of
    F'^-1 F''(u, v) - <xi,u> v - <xi,v> u is below ``tol`` relative to the
    size of F'^-1 F''. Accepted maps are then checked against the closed
    form F(z+u) = F(z) + F'(z) u / (1 - <xi,u>) and the transport rule
    xi(z+u) = xi(z) / (1 - <xi,u>) at a few sampled offsets u.
    """
    z = np.asarray(z, dtype=float)
    if jets is None:
        if variables is None:
            variables = [f"z{i + 1}" for i in range(len(z))]

        def jets(p):
            return _map_jets(components, variables, p)

    value, jac, hess = jets(z)
    if abs(np.linalg.det(jac)) < 1e-300:
        raise NotProjective(math.inf, "derivative is singular")
    xi, res, norm_a = _xi_and_residual(jac, hess)
    rel = res / norm_a if norm_a > 0 else res
    if rel > tol:
        raise NotProjective(rel)
    m = len(z)
    offsets = []
    scale = 0.05 * (1.0 + np.linalg.norm(z))
    for k in range(samples):
        u = np.zeros(m)
        u[k % m] = scale
        if k >= m:
            u += scale * np.cos(np.arange(m) + k)
        offsets.append(u)
    worst = 0.0
    for u in offsets:
        shrink = 1.0 - float(xi @ u)
        if abs(shrink) < 1e-6:
            continue
        v2, j2, h2 = jets(z + u)
        pred = value + jac @ u / shrink
        worst = max(worst, float(np.linalg.norm(v2 - pred) / (1.0 + np.linalg.norm(v2))))
        xi2, _, _ = _xi_and_residual(j2, h2)
        worst = max(worst, float(np.linalg.norm(xi2 - xi / shrink) / (1.0 + np.linalg.norm(xi2))))
    if worst > max(tol, 1e-10) * 1e2:
        raise NotProjective(worst, f"closed-form check failed (residual {worst:.3e})")
    return Jet2Map(z, value, jac, hess, xi, rel, worst)
