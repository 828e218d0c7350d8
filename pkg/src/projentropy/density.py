"""Entropy densities restricted to a fiber P(E), their barycentric maps and the
cross-ratio calculus that reconstructs a density from its barycentric map.

A :class:`FiberDensity` lives in one chart x -> P(R(e1 + x e2)) of a declared
basis; statements about other charts go through :func:`density_transform`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import _kernels
from .errors import (AxiomFailure, CaseViolation, ConstraintViolation, DegenerateTuple,
                     OutOfChart, ZeroMass)
from .exprcalc import as_expr, compile_expr, to_text
from .projgeom import (ExtReal, HPoint1, chart_inv, chart_map, cross_ratio,
                       tautologic_section)
from .quadrature import integrate_batch

QUAD_TOL = 1e-12
DIAGONAL_GAP = 1e-7


def _broadcast(val, x):
    return np.broadcast_to(np.asarray(val, dtype=float), np.shape(x)).copy()


def _lin_moments(x1, x2, b1, b2):
    """Exact integrals of beta, x*beta and |beta| for beta linear on [x1, x2]."""
    h = x2 - x1
    m0 = 0.5 * h * (b1 + b2)
    xm, bm = 0.5 * (x1 + x2), 0.5 * (b1 + b2)
    m1 = h / 6.0 * (x1 * b1 + 4.0 * xm * bm + x2 * b2)
    same = b1 * b2 >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # split at the zero crossing when the endpoint values differ in sign
        frac = np.where(same, 0.5, np.abs(b1) / (np.abs(b1) + np.abs(b2)))
    ab = np.where(same, np.abs(m0), 0.5 * np.abs(h) * (np.abs(b1) * frac + np.abs(b2) * (1 - frac)))
    return m0, m1, ab


@dataclass(frozen=True, eq=False)
class FiberDensity:
    """Chart representation beta^{e1}_{e2} of a fiber density on an open interval.

    ``func`` is vectorized over chart coordinates. Grid densities (``grid`` set)
    are linear between nodes and integrate exactly. ``covers_circle`` marks a
    density declared on all of P(E), which the checks reject.
    """

    func: Callable
    interval: tuple
    basis: np.ndarray = field(default_factory=lambda: np.eye(2))
    label: str = ""
    grid: tuple = None
    covers_circle: bool = False

    def __post_init__(self):
        lo, hi = (float(v) for v in self.interval)
        if not lo < hi:
            raise ValueError(f"empty chart interval ({lo}, {hi})")
        object.__setattr__(self, "interval", (lo, hi))
        b = np.array(self.basis, dtype=float).reshape(2, 2)
        if abs(np.linalg.det(b)) < 1e-300:
            raise DegenerateTuple("density basis is singular")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_expr(cls, text, interval, basis=None, var: str = "x", **kw) -> "FiberDensity":
        expr = as_expr(text)
        f = compile_expr(expr, [var])
        return cls(lambda x: _broadcast(f(np.asarray(x, dtype=float)), x), interval,
                   np.eye(2) if basis is None else basis, label=to_text(expr), **kw)

    @classmethod
    def from_callable(cls, f, interval, basis=None, label: str = "", **kw) -> "FiberDensity":
        return cls(lambda x: _broadcast(f(np.asarray(x, dtype=float)), x), interval,
                   np.eye(2) if basis is None else basis, label=label, **kw)

    @classmethod
    def from_grid(cls, xs, values, basis=None, label: str = "grid") -> "FiberDensity":
        xs = np.asarray(xs, dtype=float)
        vals = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("grid needs increasing nodes and matching values")
        xs.setflags(write=False)
        vals.setflags(write=False)
        return cls(lambda x: np.interp(x, xs, vals), (xs[0], xs[-1]),
                   np.eye(2) if basis is None else basis, label=label, grid=(xs, vals))

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def contains(self, x) -> bool:
        lo, hi = self.interval
        return bool(np.all((np.asarray(x) >= lo) & (np.asarray(x) <= hi)))

    def point(self, x) -> HPoint1:
        return chart_inv(self.basis, x)

    def coordinate(self, q) -> float:
        return chart_map(self.basis, q)

    # ---- moments

    def moments(self, s, t):
        """(integral of beta, of x*beta, of |beta|) from s to t, vectorized."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s, t = np.broadcast_arrays(s, t)
        if not (self.contains(s) and self.contains(t)):
            raise OutOfChart("integration bounds leave the density interval")
        if self.grid is not None:
            return self._grid_moments(s, t)
        return self._quad_moments(s.ravel(), t.ravel(), s.shape)

    def _quad_moments(self, s, t, shape):
        out = np.zeros((3, s.size))
        live = s != t
        if live.any():
            def f(x, owner):
                b = self(x)
                return np.stack([b, x * b, np.abs(b)])
            out[:, live] = integrate_batch(f, s[live], t[live], tol=QUAD_TOL)
            # the unsigned mass must not change sign with orientation
            out[2, live] = np.abs(out[2, live])
        return tuple(o.reshape(shape) for o in out)

    def _grid_cumulative(self):
        xs, vals = self.grid
        m0, m1, ab = _lin_moments(xs[:-1], xs[1:], vals[:-1], vals[1:])
        zero = np.zeros(1)
        return (np.concatenate([zero, np.cumsum(m0)]), np.concatenate([zero, np.cumsum(m1)]),
                np.concatenate([zero, np.cumsum(ab)]))

    def _grid_at(self, x):
        xs, vals = self.grid
        c0, c1, ca = self._grid_cumulative()
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        bx = np.interp(x, xs, vals)
        p0, p1, pa = _lin_moments(xs[i], x, vals[i], bx)
        return c0[i] + p0, c1[i] + p1, ca[i] + pa

    def _grid_moments(self, s, t):
        a0, a1, aa = self._grid_at(s)
        b0, b1, ba = self._grid_at(t)
        return b0 - a0, b1 - a1, np.abs(ba - aa)


def density_transform(fd: FiberDensity, t) -> FiberDensity:
    """Express ``fd`` in the basis e_i' = sum_j t[i][j] e_j.

    beta'(x') = |det T| / (t11 + x' t21)^3 * beta((t12 + x' t22) / (t11 + x' t21)).
    """
    t = np.asarray(t, dtype=float).reshape(2, 2)
    det = float(np.linalg.det(t))
    if det == 0:
        raise DegenerateTuple("singular basis change")
    lo, hi = fd.interval
    # old coordinate of the new excluded direction P(R e2')
    if t[1, 0] != 0:
        pole = t[1, 1] / t[1, 0]
        if lo <= pole <= hi:
            raise OutOfChart("new chart does not cover the density interval")

    def new_coord(x):
        den = x * t[1, 0] - t[1, 1]
        if den == 0:
            raise OutOfChart("interval endpoint maps to the excluded direction")
        return (t[0, 1] - x * t[0, 0]) / den

    ends = sorted((new_coord(lo), new_coord(hi)))

    def old_coord(xp):
        return (t[0, 1] + xp * t[1, 1]) / (t[0, 0] + xp * t[1, 0])

    def beta_new(xp):
        d = t[0, 0] + xp * t[1, 0]
        if np.any(d == 0):
            raise OutOfChart("point hits the excluded direction of the old chart")
        x = np.clip(old_coord(xp), lo, hi)
        return abs(det) / d ** 3 * fd(x)

    return FiberDensity(beta_new, tuple(ends), t @ fd.basis,
                        label=f"transform({fd.label})", covers_circle=fd.covers_circle)


def interval_integral(fd: FiberDensity, s: float, t: float) -> np.ndarray:
    """Chart components (integral of beta, integral of x*beta) from s to t."""
    m0, m1, _ = fd.moments(s, t)
    return np.array([float(m0[0]), float(m1[0])])


def interval_vector(fd: FiberDensity, s: float, t: float) -> np.ndarray:
    """The same integral as a vector of E in ambient coordinates."""
    m = interval_integral(fd, s, t)
    return m[0] * fd.basis[0] + m[1] * fd.basis[1]


def _zero_mass(m0, m1, ab):
    scale = np.maximum(ab, 1e-300)
    return (np.abs(m0) <= 1e-12 * scale) & (np.abs(m1) <= 1e-12 * scale)


def barycenter_chart(fd: FiberDensity, a, b):
    """Chart barycenter of beta over [a, b]; vectorized, inf when the mass vanishes
    but the first moment does not.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    m0, m1, ab = fd.moments(a, b)
    near = np.abs(b - a) < DIAGONAL_GAP
    if np.any(_zero_mass(m0, m1, ab) & ~near):
        raise ZeroMass("interval integral of the density vanishes")
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.abs(m0) <= 1e-12 * np.maximum(ab, 1e-300)
        out = np.where(small, np.inf, m1 / np.where(small, 1.0, m0))
    return np.where(near, 0.5 * (a + b), out)


def barycenter(fd: FiberDensity, a: float, b: float) -> HPoint1:
    """P(R * interval vector), with B(s, s) = s on the diagonal."""
    if abs(b - a) < DIAGONAL_GAP:
        return fd.point(0.5 * (a + b))
    m0, m1, ab = fd.moments(a, b)
    if _zero_mass(m0, m1, ab)[0]:
        raise ZeroMass("interval integral of the density vanishes")
    return HPoint1(tuple(float(m0[0]) * fd.basis[0] + float(m1[0]) * fd.basis[1]))


# --------------------------------------------------------- nine assertions

def _check_grid(fd: FiberDensity, n: int, window):
    lo, hi = fd.interval
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = max(lo, -50.0), min(hi, 50.0)
    return lo + (np.arange(n) + 0.5) / n * (hi - lo)


def _second_chart(fd: FiberDensity):
    """A genuinely projective basis change whose excluded direction misses the interval."""
    lo, hi = fd.interval
    span = hi - lo if math.isfinite(hi - lo) else 100.0
    anchor = hi if math.isfinite(hi) else 50.0
    pole = anchor + 1.0 + span
    return np.array([[1.0, 0.0], [1.0 / pole, 1.0]])


def _pair_tables(fd: FiberDensity, xs):
    s, t = np.meshgrid(xs, xs, indexing="ij")
    return fd.moments(s, t)


def _mass_nonzero(fd, xs):
    m0, _, ab = _pair_tables(fd, xs)
    off = ~np.eye(xs.size, dtype=bool)
    return bool(np.all(np.abs(m0[off]) > 1e-12 * np.maximum(ab[off], 1e-300)) and np.all(ab[off] > 0))


def _sign_conditions(fd, xs_fine):
    vals = fd(xs_fine)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    zero = np.abs(vals) <= 1e-12 * scale
    # an open subinterval of zeros shows up as two adjacent vanishing samples
    vanishing_run = bool(np.any(zero[1:] & zero[:-1])) or bool(zero.all())
    no_sign_change = bool(np.all(vals >= -1e-12 * scale) or np.all(vals <= 1e-12 * scale))
    return not vanishing_run, no_sign_change, xs_fine[zero]


def _sign_changes(fd, xs_fine):
    """Roots of beta located by bisection between samples of opposite sign."""
    vals = fd(xs_fine)
    idx = np.nonzero(vals[:-1] * vals[1:] < 0)[0]
    roots = []
    for i in idx:
        roots.append(brentq(lambda x: float(fd(np.array([x]))[0]), xs_fine[i], xs_fine[i + 1],
                            xtol=1e-14))
    return np.array(roots)


def _omega_continuous(fd, xs_fine, gram):
    vals = fd(xs_fine)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    keep = np.abs(vals) > 1e-12 * scale
    x = xs_fine[keep]
    vec = np.sign(vals[keep])[:, None] * (fd.basis[0][None, :] + x[:, None] * fd.basis[1][None, :])
    norms = np.sqrt(np.einsum("ni,ij,nj->n", vec, gram, vec))
    omega = vec / norms[:, None]
    jumps = np.linalg.norm(np.diff(omega, axis=0), axis=1)
    return bool(np.all(jumps < 1.0))


def check_nine_assertions(fd: FiberDensity, n: int = 24, fine: int = 2001, window=None) -> dict:
    """Instance checks of the nine equivalent positivity characterizations.

    Returns a dict with one boolean per assertion ("i" ... "ix"), the chart
    points where beta vanishes, and ``consistent`` (all pass or all fail).
    """
    if fd.covers_circle:
        return {"rejected": True, "reason": "domain is the whole projective line",
                **{k: None for k in ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix")},
                "zeros": [], "consistent": None}
    xs = _check_grid(fd, n, window)
    xf = _check_grid(fd, fine, window)
    other = density_transform(fd, _second_chart(fd))
    to_other = np.array([chart_map(other.basis, fd.point(x)) for x in (xs[0], xs[-1])])
    xs2 = np.linspace(to_other.min(), to_other.max(), n)
    xf2 = np.linspace(to_other.min(), to_other.max(), fine)

    r = {"rejected": False}
    r["i"] = _mass_nonzero(fd, xs)
    r["ii"] = r["i"] and _mass_nonzero(other, xs2)
    z1, s1, zeros = _sign_conditions(fd, xf)
    z2, s2, _ = _sign_conditions(other, xf2)
    r["iii"] = z1 and s1
    r["iv"] = r["iii"] and z2 and s2

    m0, m1, ab = _pair_tables(fd, xs)
    off = ~np.eye(xs.size, dtype=bool)
    vec_nonzero = bool(np.all((np.abs(m0) + np.abs(m1))[off] > 1e-12 * np.maximum(ab[off], 1e-300)))
    mass_ok = np.abs(m0) > 1e-12 * np.maximum(ab, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = _kernels.barycenter_table(xs, *_cumulative(fd, xs))
    lo_t = np.minimum.outer(xs, xs)
    hi_t = np.maximum.outer(xs, xs)
    inside = (table > lo_t) & (table < hi_t) & mass_ok
    between = bool(np.all(inside[off]))
    r["v"] = vec_nonzero and between

    h = 1e-4 * (xs[-1] - xs[0])
    centers = np.concatenate([xs, zeros, _sign_changes(fd, xf)])
    centers = centers[(centers - h >= fd.interval[0]) & (centers + h <= fd.interval[1])]
    weights = np.linspace(0.05, 0.95, 19)
    lefts = (centers[:, None] - h * weights[None, :]).ravel()
    rights = (centers[:, None] + h * (1.0 - weights)[None, :]).ravel()
    try:
        near = barycenter_chart(fd, lefts, rights)
        mids = np.repeat(centers, weights.size)
        r["vi"] = vec_nonzero and bool(np.all(np.abs(near - mids) <= h))
    except ZeroMass:
        r["vi"] = False

    if vec_nonzero and bool(np.all(mass_ok[off])):
        table = np.where(off, table, xs[:, None])
        steps = np.diff(table, axis=1)
        r["vii"] = bool(np.all(steps > 0) or np.all(steps < 0))
    else:
        r["vii"] = False

    r["viii"] = z1 and _omega_continuous(fd, xf, np.eye(2))
    gram = np.array([[2.0, 0.5], [0.5, 1.0]])
    r["ix"] = r["viii"] and _omega_continuous(fd, xf, gram)
    r["zeros"] = sorted(float(x) for x in np.concatenate([zeros, _sign_changes(fd, xf)]))
    keys = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix")
    r["consistent"] = len({r[k] for k in keys}) == 1
    return r


def _cumulative(fd, xs):
    m0, m1, _ = fd.moments(np.full(xs.size, xs[0]), xs)
    return m0, m1


# ------------------------------------------------------ barycentric maps

@dataclass(frozen=True, eq=False)
class BarycentricMap:
    """A shock rule B(s, t) on U x U in chart coordinates of ``basis``."""

    func: Callable
    interval: tuple
    basis: np.ndarray = field(default_factory=lambda: np.eye(2))
    label: str = ""

    def __post_init__(self):
        lo, hi = (float(v) for v in self.interval)
        if not lo < hi:
            raise ValueError("empty domain interval")
        object.__setattr__(self, "interval", (lo, hi))
        b = np.array(self.basis, dtype=float).reshape(2, 2)
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_expr(cls, text, interval, basis=None, vars=("p", "q")) -> "BarycentricMap":
        expr = as_expr(text)
        f = compile_expr(expr, vars)

        def func(s, t):
            s = np.asarray(s, dtype=float)
            t = np.asarray(t, dtype=float)
            return _broadcast(f(s, t), np.broadcast(s, t))
        return cls(func, interval, np.eye(2) if basis is None else basis, label=to_text(expr))

    @classmethod
    def from_density(cls, fd: FiberDensity) -> "BarycentricMap":
        def func(s, t):
            out = barycenter_chart(fd, s, t)
            return out if np.ndim(s) or np.ndim(t) else float(out[0])
        return cls(func, fd.interval, fd.basis, label=f"barycenter({fd.label})")

    def __call__(self, s, t):
        return self.func(s, t)

    def point(self, s, t) -> HPoint1:
        return self.as_point(float(np.asarray(self.func(s, t)).ravel()[0]))

    def as_point(self, x) -> HPoint1:
        if isinstance(x, HPoint1):
            return x
        if isinstance(x, float) and math.isinf(x):
            return HPoint1(tuple(self.basis[1]))
        return chart_inv(self.basis, float(x))


def midpoint_map(interval) -> BarycentricMap:
    return BarycentricMap.from_expr("(p + q)/2", interval)


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(np.asarray(x, dtype=float))))


def check_axioms(bmap: BarycentricMap, n: int = 9, quadruples: int = 120, seed: int = 0,
                 tol: float = 1e-8) -> dict:
    """Sampled checks of the hypotheses H1-H7 and consequences C2, C4, C6."""
    lo, hi = bmap.interval
    xs = lo + (np.arange(n) + 0.5) / n * (hi - lo)
    s, t = np.meshgrid(xs, xs, indexing="ij")
    off = ~np.eye(n, dtype=bool)
    r = {}
    b = np.asarray(bmap(s, t), dtype=float)
    bt = np.asarray(bmap(t, s), dtype=float)
    defined = _finite(b) and _finite(bt)
    # the domain is U x U by construction: symmetric, and closed under mixing pairs
    r["H1"] = defined
    r["H2"] = defined
    r["H3"] = defined and bool(np.all(np.abs(b - bt) <= tol * (1.0 + np.abs(b))))
    gap = 1e-12 * (hi - lo)
    r["H4"] = defined and bool(np.all((np.abs(b - s) > gap)[off] & (np.abs(b - t) > gap)[off]))
    lo_t, hi_t = np.minimum(s, t), np.maximum(s, t)
    r["H5"] = defined and bool(np.all(((b > lo_t) & (b < hi_t))[off]))

    rng = np.random.default_rng(seed)
    worst, checked = 0.0, 0
    h6 = defined
    for _ in range(quadruples if defined else 0):
        p, q, u, v = rng.choice(xs, size=4, replace=False)
        try:
            lhs = cross_ratio(*(bmap.as_point(float(bmap(a, c))) for a, c in
                                ((p, q), (p, u), (p, v), (u, v))))
            rhs = cross_ratio(*(bmap.as_point(float(bmap(a, c))) for a, c in
                                ((p, q), (q, u), (q, v), (u, v))))
        except DegenerateTuple:
            continue
        if not (lhs.in_case("C0") and lhs.in_case("Cinf") and rhs.in_case("C0") and rhs.in_case("Cinf")):
            continue
        checked += 1
        dev = abs(lhs.value - rhs.value) / (1.0 + abs(lhs.value))
        worst = max(worst, dev)
        if dev > tol:
            h6 = False
    r["H6"] = h6 and checked > 0
    r["H6_worst"] = worst
    r["H6_checked"] = checked

    delta = 1e-7 * (hi - lo)
    try:
        moved = np.asarray(bmap(s + delta, t), dtype=float)
        r["H7"] = defined and _finite(moved) and bool(np.all(np.abs(moved - b)[off] <= 1e-3 * (hi - lo)))
    except Exception:
        r["H7"] = False

    hyp = all(r[k] for k in ("H1", "H2", "H3", "H4", "H5", "H6", "H7"))
    if hyp:
        diag = np.asarray(bmap(xs, xs), dtype=float)
        r["C2"] = bool(np.all(np.abs(diag - xs) <= tol * (1.0 + np.abs(xs))))
        full = np.where(off, b, xs[:, None])
        steps = np.diff(full, axis=1)
        r["C4"] = bool(np.all(steps > 0) or np.all(steps < 0))
        r["C6"] = bool(np.all(steps > 0)) and bool(np.all((full > lo) & (full < hi)))
    else:
        r["C2"] = r["C4"] = r["C6"] = None
    r["all_pass"] = hyp and r["C2"] and r["C4"] and r["C6"]
    return r


# -------------------------------------------------------- cross-ratio calculus

def _as_point(bmap: BarycentricMap, x) -> HPoint1:
    return bmap.as_point(x if isinstance(x, HPoint1) else float(x))


def rq(bmap: BarycentricMap, a, b, c, q) -> ExtReal:
    """r_q(a, b, c) = [B(a,c), B(b,c), B(a,b), q]."""
    pts = [bmap.point(x, y) for x, y in ((a, c), (b, c), (a, b))]
    return cross_ratio(*pts, _as_point(bmap, q))


def dq(bmap: BarycentricMap, x, y, u, v, q) -> float:
    """d_q(x, y; u, v) = r_q(u, x, v) - r_q(u, y, v)."""
    if u == v:
        raise CaseViolation("d_q needs u != v")
    qp = _as_point(bmap, q)
    if bmap.point(u, v) == qp:
        raise CaseViolation("B(u, v) coincides with q")
    if x == y:
        return 0.0
    r1 = rq(bmap, u, x, v, qp)
    r2 = rq(bmap, u, y, v, qp)
    if r1.is_inf or r2.is_inf:
        raise CaseViolation("r_q is infinite, outside the finite case")
    return r1.value - r2.value


def epsilon_U(x, y, r, s, k) -> int:
    """sgn([x, r, s, k] - [y, r, s, k]) for chart reals or projective points."""
    a = cross_ratio(x, r, s, k)
    b = cross_ratio(y, r, s, k)
    if a.is_inf or b.is_inf:
        raise DegenerateTuple("cross-ratio is infinite; r and s must differ")
    diff = a.value - b.value
    if abs(diff) <= 1e-14 * (1.0 + abs(a.value) + abs(b.value)):
        return 0
    return 1 if diff > 0 else -1


# ------------------------------------------------------------ reconstruction

@dataclass(frozen=True, eq=False)
class ReconstructionAnchor:
    """Normalizing data: q outside U, two chart points u0 != v0, and beta0."""

    q: object
    u0: float
    v0: float
    beta0: tuple

    def __post_init__(self):
        if self.u0 == self.v0:
            raise ConstraintViolation("anchor needs u0 != v0")
        object.__setattr__(self, "beta0", tuple(float(c) for c in self.beta0))


def reconstruct_interval_vector(bmap: BarycentricMap, anchor: ReconstructionAnchor, x, y) -> np.ndarray:
    """beta(|x, y|) from the barycentric map alone, in ambient coordinates."""
    qp = _as_point(bmap, anchor.q)
    if x == y:
        return np.zeros(2)
    if bmap.point(x, y) == qp:
        raise CaseViolation("B(x, y) coincides with q")
    pts = [_as_point(bmap, v) for v in (x, y, anchor.u0, anchor.v0)]
    eps = epsilon_U(*pts, qp)
    d = dq(bmap, x, y, anchor.u0, anchor.v0, qp)
    return eps * d * tautologic_section(anchor.beta0, bmap.point(x, y), qp)


def reconstruct_density(bmap: BarycentricMap, anchor: ReconstructionAnchor, grid,
                        check: bool = True) -> FiberDensity:
    """Recover the pointwise density on ``grid`` (uniform, increasing, inside U).

    The mass component of beta(|x0, y|) is differentiated in y through a
    not-a-knot cubic spline of the cumulative mass.
    """
    xs = np.asarray(grid, dtype=float)
    lo, hi = bmap.interval
    if xs.ndim != 1 or xs.size < 3 or np.any(np.diff(xs) <= 0):
        raise ValueError("grid must be increasing with at least three points")
    if xs[0] < lo or xs[-1] > hi:
        raise OutOfChart("grid leaves the domain of the barycentric map")
    qp = _as_point(bmap, anchor.q)
    if lo < _chart_or_inf(bmap, qp) < hi:
        raise ConstraintViolation("anchor point q lies inside U")
    if not bmap.point(anchor.u0, anchor.v0) == HPoint1(anchor.beta0):
        raise ConstraintViolation("beta0 does not span B(u0, v0)")
    if check:
        report = check_axioms(bmap)
        if not report["all_pass"]:
            failed = [k for k, v in report.items() if v is False]
            raise AxiomFailure(f"barycentric map fails {', '.join(failed)}")
    inv_basis = np.linalg.inv(bmap.basis.T)
    mass = np.zeros(xs.size)
    for i in range(1, xs.size):
        mass[i] = (inv_basis @ reconstruct_interval_vector(bmap, anchor, xs[0], xs[i]))[0]
    dens = CubicSpline(xs, mass).derivative()(xs)
    return FiberDensity.from_grid(xs, dens, bmap.basis, label="reconstructed")


def _chart_or_inf(bmap, p: HPoint1) -> float:
    try:
        return chart_map(bmap.basis, p)
    except OutOfChart:
        return math.inf


def barycenter_deviation(bmap: BarycentricMap, fd: FiberDensity, n: int = 15) -> float:
    """Max chart distance between B and the barycentric map of ``fd`` on a grid of pairs."""
    lo, hi = fd.interval
    xs = lo + (np.arange(n) + 0.5) / n * (hi - lo)
    s, t = np.meshgrid(xs, xs, indexing="ij")
    off = ~np.eye(n, dtype=bool)
    got = barycenter_chart(fd, s[off], t[off])
    want = np.asarray(bmap(s[off], t[off]), dtype=float)
    return float(np.max(np.abs(got - want)))
