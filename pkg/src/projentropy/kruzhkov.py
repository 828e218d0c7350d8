"""Kruzhkov-type functionals I, J, C in standard coordinates for two base
variables z = (t, x) and one fiber variable y.

The density is Lebesgue measure in y times the characteristic field
X = X1 d/dt + X2 d/dx + X3 d/dy. The coordinates may be written ``t``/``z1``
and ``x``/``z2`` interchangeably.

Integrals over z use tensor Gauss-Legendre: the outer t integral is adaptive,
the inner x integral is split where a section jumps or where sgn(u - v)
changes, and every fiber integral is split at y = u(z).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConstraintViolation
from .exprcalc import Add, Expr, Mul, as_expr, diff_alias, evaluate, free_vars, to_text
from .quadrature import gl_rule, integrate, integrate_batch, spectral_integration_matrix

T_NAMES = ("t", "z1")
X_NAMES = ("x", "z2")
ORDER = 20
Z_TOL = 1e-10
ROOT_SAMPLES = 49


def _env(t, x, y=None) -> dict:
    env = {"t": t, "z1": t, "x": x, "z2": x}
    if y is not None:
        env["y"] = y
    return env


def _ev(expr: Expr, t, x, y=None) -> np.ndarray:
    shape = np.broadcast(t, x, 0.0 if y is None else y).shape
    return np.broadcast_to(np.asarray(evaluate(expr, _env(t, x, y)), dtype=float), shape)


def _dt(e):
    return diff_alias(e, T_NAMES)


def _dx(e):
    return diff_alias(e, X_NAMES)


# ------------------------------------------------------------------ equation

@dataclass(frozen=True, eq=False)
class QuasiEq:
    """X1 u_t + X2 u_x = X3 on the box G = [t] x [x] x [y]."""

    X1: Expr
    X2: Expr
    X3: Expr
    box: dict = field(default_factory=lambda: {"t": (-10.0, 10.0), "x": (-10.0, 10.0),
                                               "y": (-10.0, 10.0)})

    def __post_init__(self):
        for name in ("X1", "X2", "X3"):
            object.__setattr__(self, name, as_expr(getattr(self, name)))
        object.__setattr__(self, "box", {k: (float(v[0]), float(v[1])) for k, v in self.box.items()})
        object.__setattr__(self, "_div", Add(_dt(self.X1), _dx(self.X2)))

    @classmethod
    def burgers(cls, box=None) -> "QuasiEq":
        return cls("1", "y", "0", box or {"t": (-10.0, 10.0), "x": (-10.0, 10.0), "y": (-10.0, 10.0)})

    def field(self, t, x, y):
        return _ev(self.X1, t, x, y), _ev(self.X2, t, x, y), _ev(self.X3, t, x, y)

    def divergence(self, t, x, y):
        """d X1/dt + d X2/dx at fixed y."""
        return _ev(self._div, t, x, y)

    def scaled(self, factor) -> "QuasiEq":
        """Multiply the density by a base-only factor f(z)."""
        f = as_expr(factor)
        if "y" in free_vars(f):
            raise ConstraintViolation("rescaling factor must not depend on y")
        return QuasiEq(Mul(f, self.X1), Mul(f, self.X2), Mul(f, self.X3), dict(self.box))

    def is_flat_projective(self) -> bool:
        return to_text(self.X1) == "1" and to_text(self.X2) == "y"

    def check_nondegenerate(self, n: int = 17) -> bool:
        """(X1, X2) != (0, 0) on an n^3 grid of the box."""
        g = [np.linspace(*self.box[k], n) for k in ("t", "x", "y")]
        t, x, y = np.meshgrid(*g, indexing="ij")
        x1, x2, _ = self.field(t, x, y)
        return bool(np.all(np.hypot(x1, x2) > 0))

    def classical_residual(self, u: Expr, t, x) -> np.ndarray:
        """X1(u) u_t + X2(u) u_x - X3(u) for a smooth section u."""
        u = as_expr(u)
        uv = _ev(u, t, x)
        x1, x2, x3 = self.field(t, x, uv)
        return x1 * _ev(_dt(u), t, x) + x2 * _ev(_dx(u), t, x) - x3


def fiber_primitive(eq: QuasiEq, i: int, z, y: float, tol: float = 1e-12) -> float:
    """Z^i(z, y) = integral from 0 to y of X^i(z, eta) d eta."""
    expr = {1: eq.X1, 2: eq.X2, 3: eq.X3}[i]
    t, x = (float(c) for c in z)
    if y == 0:
        return 0.0
    return float(integrate(lambda eta: _ev(expr, t, x, eta), 0.0, float(y), tol=tol))


# ------------------------------------------------------------------ sections

class Section:
    """A section z -> (z, u(z)) of the fiber bundle over the (t, x) box."""

    lipschitz = True

    def value(self, t, x):
        raise NotImplementedError

    def grad(self, t, x):
        raise NotImplementedError

    def break_function(self):
        """Function whose sign changes in x mark jumps or kinks, or None."""
        return None

    def grid_breaks(self):
        return (), ()


@dataclass(frozen=True, eq=False)
class ExprSection(Section):
    expr: Expr

    def __post_init__(self):
        object.__setattr__(self, "expr", as_expr(self.expr))
        object.__setattr__(self, "_ut", _dt(self.expr))
        object.__setattr__(self, "_ux", _dx(self.expr))

    def value(self, t, x):
        return _ev(self.expr, t, x)

    def grad(self, t, x):
        return _ev(self._ut, t, x), _ev(self._ux, t, x)


def constant_section(k: float) -> ExprSection:
    return ExprSection(as_expr(float(k)))


@dataclass(frozen=True, eq=False)
class PiecewiseSolution(Section):
    """u = minus where level < 0, plus where level > 0; the shock is level = 0."""

    level: Expr
    minus: Expr
    plus: Expr

    def __post_init__(self):
        for name in ("level", "minus", "plus"):
            object.__setattr__(self, name, as_expr(getattr(self, name)))
        object.__setattr__(self, "_derivs", {
            name: (_dt(getattr(self, name)), _dx(getattr(self, name))) for name in ("level", "minus", "plus")})

    @property
    def lipschitz(self):
        return False

    def _split(self, fn_minus, fn_plus, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        lev = _ev(self.level, t, x)
        out = np.empty(t.shape)
        neg = lev < 0
        if neg.any():
            out[neg] = fn_minus(t[neg], x[neg])
        if (~neg).any():
            out[~neg] = fn_plus(t[~neg], x[~neg])
        return out

    def value(self, t, x):
        return self._split(lambda a, b: _ev(self.minus, a, b), lambda a, b: _ev(self.plus, a, b), t, x)

    def grad(self, t, x):
        dm, dp = self._derivs["minus"], self._derivs["plus"]
        gt = self._split(lambda a, b: _ev(dm[0], a, b), lambda a, b: _ev(dp[0], a, b), t, x)
        gx = self._split(lambda a, b: _ev(dm[1], a, b), lambda a, b: _ev(dp[1], a, b), t, x)
        return gt, gx

    def break_function(self):
        return lambda t, x: _ev(self.level, t, x)

    def level_gradient(self, t, x):
        d = self._derivs["level"]
        return float(_ev(d[0], t, x)), float(_ev(d[1], t, x))

    def sides(self, t, x):
        """(u-, u+) evaluated at a point of the shock."""
        return float(_ev(self.minus, t, x)), float(_ev(self.plus, t, x))

    def shock_points(self, t_range, x_range, n: int = 64):
        """Sample the shock by solving level = 0 in x on an n-point t grid."""
        ts = np.linspace(t_range[0], t_range[1], n)
        roots = _roots_in_x(self.break_function(), ts, x_range[0], x_range[1])
        return [(float(t), float(r)) for t, rs in zip(ts, roots) for r in rs]


@dataclass(frozen=True, eq=False)
class GridSection(Section):
    """Bilinear interpolation of samples on a tensor (t, x) grid."""

    ts: np.ndarray
    xs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts, xs = np.asarray(self.ts, float), np.asarray(self.xs, float)
        vals = np.asarray(self.values, float)
        if vals.shape != (ts.size, xs.size):
            raise ValueError("grid values must have shape (len(ts), len(xs))")
        for a in (ts, xs, vals):
            a.setflags(write=False)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)

    def _cell(self, t, x):
        i = np.clip(np.searchsorted(self.ts, t, side="right") - 1, 0, self.ts.size - 2)
        j = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.xs.size - 2)
        ht = self.ts[i + 1] - self.ts[i]
        hx = self.xs[j + 1] - self.xs[j]
        a = (t - self.ts[i]) / ht
        b = (x - self.xs[j]) / hx
        v = self.values
        return i, j, a, b, ht, hx, v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1]

    def value(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        _, _, a, b, _, _, v00, v10, v01, v11 = self._cell(t, x)
        return (1 - a) * (1 - b) * v00 + a * (1 - b) * v10 + (1 - a) * b * v01 + a * b * v11

    def grad(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        _, _, a, b, ht, hx, v00, v10, v01, v11 = self._cell(t, x)
        gt = ((1 - b) * (v10 - v00) + b * (v11 - v01)) / ht
        gx = ((1 - a) * (v01 - v00) + a * (v11 - v10)) / hx
        return gt, gx

    def grid_breaks(self):
        return tuple(self.ts), tuple(self.xs)


# ------------------------------------------------------------ test densities

def _bump1(s):
    inside = np.abs(s) < 1
    base = np.where(inside, 1.0 - s * s, 0.0)
    return base ** 4, np.where(inside, -8.0 * s * base ** 3, 0.0)


@dataclass(frozen=True, eq=False)
class BumpDensity:
    """Product of (1 - s^2)^4 kernels over (t, x) or (t, x, y), times ``scale``."""

    center: tuple
    halfwidth: tuple
    scale: float = 1.0

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        h = tuple(float(v) for v in self.halfwidth)
        if len(c) not in (2, 3) or len(c) != len(h) or min(h) <= 0:
            raise ValueError("bump needs 2 or 3 centers with positive half widths")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "halfwidth", h)

    @property
    def dims(self) -> int:
        return len(self.center)

    @property
    def nonnegative(self) -> bool:
        return self.scale >= 0

    @property
    def box(self):
        return [(c - h, c + h) for c, h in zip(self.center, self.halfwidth)]

    def _factors(self, coords):
        return [_bump1((np.asarray(v, float) - c) / h) for v, c, h in zip(coords, self.center, self.halfwidth)]

    def value(self, *coords):
        f = self._factors(coords[:self.dims])
        out = self.scale
        for v, _ in f:
            out = out * v
        return out

    def grad(self, *coords):
        """Derivatives along t and x."""
        f = self._factors(coords[:self.dims])
        out = []
        for k in (0, 1):
            g = self.scale * f[k][1] / self.halfwidth[k]
            for j, (v, _) in enumerate(f):
                if j != k:
                    g = g * v
            out.append(g)
        return tuple(out)


@dataclass(frozen=True, eq=False)
class ExprDensity:
    """User test function on a support box; verified to vanish to first order on its boundary."""

    expr: Expr
    box: list
    nonnegative: bool = False

    def __post_init__(self):
        object.__setattr__(self, "expr", as_expr(self.expr))
        object.__setattr__(self, "box", [tuple(float(v) for v in b) for b in self.box])
        object.__setattr__(self, "_grads", (_dt(self.expr), _dx(self.expr)))
        if len(self.box) not in (2, 3):
            raise ValueError("support box needs 2 or 3 intervals")
        self._verify()

    @property
    def dims(self):
        return len(self.box)

    def _verify(self, n=9):
        grids = [np.linspace(lo, hi, n) for lo, hi in self.box]
        worst = 0.0
        for k, (lo, hi) in enumerate(self.box):
            for edge in (lo, hi):
                g = list(grids)
                g[k] = np.array([edge])
                mesh = np.meshgrid(*g, indexing="ij")
                vals = [np.abs(self._raw(*mesh))] + [np.abs(d) for d in self._raw_grad(*mesh)]
                worst = max(worst, max(float(v.max()) for v in vals))
        if worst > 1e-10:
            raise ConstraintViolation(f"test function does not vanish on its support boundary ({worst:.2e})")
        if self.nonnegative:
            mesh = np.meshgrid(*[np.linspace(lo, hi, 17) for lo, hi in self.box], indexing="ij")
            if np.any(self._raw(*mesh) < -1e-12):
                raise ConstraintViolation("test function declared nonnegative takes negative values")

    def _raw(self, t, x, y=None):
        return _ev(self.expr, t, x, y)

    def _raw_grad(self, t, x, y=None):
        return _ev(self._grads[0], t, x, y), _ev(self._grads[1], t, x, y)

    def _inside(self, coords):
        ok = True
        for v, (lo, hi) in zip(coords, self.box):
            ok = ok & (np.asarray(v) >= lo) & (np.asarray(v) <= hi)
        return ok

    def value(self, *coords):
        coords = coords[:self.dims]
        return np.where(self._inside(coords), self._raw(*coords), 0.0)

    def grad(self, *coords):
        coords = coords[:self.dims]
        inside = self._inside(coords)
        return tuple(np.where(inside, g, 0.0) for g in self._raw_grad(*coords))


# ------------------------------------------------------------ root finding

def _bisect(g, t, a, b, ga, iters=60):
    for _ in range(iters):
        m = 0.5 * (a + b)
        gm = g(t, m)
        left = np.sign(gm) == np.sign(ga)
        a = np.where(left, m, a)
        ga = np.where(left, gm, ga)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def _roots_in_x(g, ts, lo, hi, samples=ROOT_SAMPLES):
    """Sign changes of g(t, .) on [lo, hi] for each t, refined by vectorized bisection."""
    ts = np.asarray(ts, float)
    xs = np.linspace(lo, hi, samples)
    vals = g(ts[:, None] + 0.0 * xs[None, :], xs[None, :] + 0.0 * ts[:, None])
    out = [[] for _ in range(ts.size)]
    zi, zj = np.nonzero(vals[:, 1:-1] == 0)
    for i, j in zip(zi, zj):
        out[i].append(xs[j + 1])
    bi, bj = np.nonzero(vals[:, :-1] * vals[:, 1:] < 0)
    if bi.size:
        r = _bisect(g, ts[bi], xs[bj], xs[bj + 1], vals[bi, bj])
        for i, x in zip(bi, r):
            out[i].append(float(x))
    return [np.unique(np.round(np.array(o, float), 15)) for o in out]


def _roots_in_t(g, x, lo, hi, samples=ROOT_SAMPLES):
    swapped = _roots_in_x(lambda xx, tt: g(tt, xx), np.array([x]), lo, hi, samples)
    return list(swapped[0])


# ----------------------------------------------------------- z integration

def _z_integral(point_fn, t_box, x_box, break_fns, grid_t=(), grid_x=(), tol=Z_TOL, n=ORDER):
    """Integrate point_fn(T, X) over the box, splitting x at roots of break_fns."""
    x0, x1 = x_box
    t0, t1 = t_box
    xg, wg = gl_rule(n)

    def inner(tn, owner):
        edges = [[x0, x1] for _ in tn]
        for g in break_fns:
            for e, rs in zip(edges, _roots_in_x(g, tn, x0, x1)):
                e.extend(float(r) for r in rs if x0 < r < x1)
        for e in edges:
            e.extend(v for v in grid_x if x0 < v < x1)
        lo, hi, own = [], [], []
        for k, e in enumerate(edges):
            e = np.unique(e)
            lo.extend(e[:-1])
            hi.extend(e[1:])
            own.extend([k] * (e.size - 1))
        lo, hi, own = np.array(lo), np.array(hi), np.array(own)
        half = 0.5 * (hi - lo)
        xx = (0.5 * (lo + hi))[:, None] + half[:, None] * xg[None, :]
        ww = half[:, None] * wg[None, :]
        tt = np.broadcast_to(tn[own][:, None], xx.shape)
        vals = point_fn(tt.ravel(), xx.ravel()).reshape(xx.shape)
        per_panel = _kernels.row_dot(vals, ww)
        out = np.zeros(tn.size)
        np.add.at(out, own, per_panel)
        return out

    tb = {t0, t1}
    for g in break_fns:
        for edge in (x0, x1):
            tb.update(r for r in _roots_in_t(g, edge, t0, t1) if t0 < r < t1)
    tb.update(v for v in grid_t if t0 < v < t1)
    tb = np.array(sorted(tb))
    parts = integrate_batch(inner, tb[:-1], tb[1:], tol=tol, max_depth=30, n=n)
    return float(np.sum(parts))


def _clip_box(a, b):
    return max(a[0], b[0]), min(a[1], b[1])


def _check_support(eq: QuasiEq, box):
    names = ("t", "x", "y")
    for k, (lo, hi) in enumerate(box):
        glo, ghi = eq.box[names[k]]
        if lo < glo or hi > ghi:
            raise ConstraintViolation(f"test support leaves the domain in {names[k]}")


# --------------------------------------------------------------- functionals

def I_functional(eq: QuasiEq, sigma: Section, psi, tol: float = Z_TOL, n: int = ORDER) -> float:
    """<I(rho, sigma, G), psi> for a test function psi(t, x, y)."""
    if psi.dims != 3:
        raise ValueError("I needs a test function of (t, x, y)")
    box = psi.box
    _check_support(eq, box)
    ylo, yhi = box[2]
    xg, wg = gl_rule(n)
    mat = spectral_integration_matrix(n)

    def point_fn(T, X):
        u = sigma.value(T, X)
        brk = np.sort(np.stack([np.full_like(u, ylo), np.full_like(u, yhi), u], axis=1), axis=1)
        half = 0.5 * (brk[:, 1:] - brk[:, :-1])
        Y = 0.5 * (brk[:, 1:] + brk[:, :-1])[:, :, None] + half[:, :, None] * xg
        TT = np.broadcast_to(T[:, None, None], Y.shape)
        XX = np.broadcast_to(X[:, None, None], Y.shape)
        f1, f2, _ = eq.field(TT, XX, Y)
        dv = eq.divergence(TT, XX, Y)
        k_u = (ylo < u).astype(int) + (yhi < u).astype(int)
        rows = np.arange(u.size)
        total = 0.0
        terms = []
        for f in (f1, f2, dv):
            cum, ends = _kernels.cumulative_segments(np.ascontiguousarray(f), mat, half)
            terms.append(ends[rows, k_u][:, None, None] - cum)
        sign = np.where(np.arange(2)[None, :] < k_u[:, None], 1.0, -1.0)[:, :, None]
        phi = psi.value(TT, XX, Y)
        pt, px = psi.grad(TT, XX, Y)
        x3u = _ev(eq.X3, T, X, u)
        total = sign * (terms[0] * pt + terms[1] * px + (x3u[:, None, None] + terms[2]) * phi)
        return np.einsum("psn,n,ps->p", total, wg, half)

    fns = [f for f in (sigma.break_function(),) if f is not None]
    gt, gx = sigma.grid_breaks()
    return _z_integral(point_fn, box[0], box[1], fns, gt, gx, tol, n)


def I_classical(eq: QuasiEq, sigma: Section, psi, tol: float = Z_TOL, n: int = ORDER) -> float:
    """Integral of the pointwise form sgn(u - y)[X3(u) - X1(u) u_t - X2(u) u_x] psi."""
    box = psi.box
    ylo, yhi = box[2]
    xg, wg = gl_rule(n)

    def point_fn(T, X):
        u = sigma.value(T, X)
        ut, ux = sigma.grad(T, X)
        x1, x2, x3 = eq.field(T, X, u)
        core = x3 - x1 * ut - x2 * ux
        brk = np.sort(np.stack([np.full_like(u, ylo), np.full_like(u, yhi), u], axis=1), axis=1)
        half = 0.5 * (brk[:, 1:] - brk[:, :-1])
        Y = 0.5 * (brk[:, 1:] + brk[:, :-1])[:, :, None] + half[:, :, None] * xg
        phi = psi.value(np.broadcast_to(T[:, None, None], Y.shape), np.broadcast_to(X[:, None, None], Y.shape), Y)
        sgn = np.sign(u[:, None, None] - Y)
        return core * np.einsum("psn,n,ps->p", sgn * phi, wg, half)

    fns = [f for f in (sigma.break_function(),) if f is not None]
    gt, gx = sigma.grid_breaks()
    return _z_integral(point_fn, box[0], box[1], fns, gt, gx, tol, n)


def _pair_terms(eq, sigma, tau, T, X, n):
    """Shared pieces of J and C: fiber integrals from v to u and endpoint values."""
    xg, wg = gl_rule(n)
    u = sigma.value(T, X)
    v = tau.value(T, X)
    half = 0.5 * (u - v)
    Y = (0.5 * (u + v))[:, None] + half[:, None] * xg
    TT = np.broadcast_to(T[:, None], Y.shape)
    XX = np.broadcast_to(X[:, None], Y.shape)
    f1, f2, _ = eq.field(TT, XX, Y)
    dv = eq.divergence(TT, XX, Y)
    d1, d2, de = (half * (f @ wg) for f in (f1, f2, dv))
    return u, v, d1, d2, de


def _pair_breaks(sigma, tau):
    fns = [f for f in (sigma.break_function(), tau.break_function()) if f is not None]
    fns.append(lambda t, x: sigma.value(t, x) - tau.value(t, x))
    gt = tuple(sigma.grid_breaks()[0]) + tuple(tau.grid_breaks()[0])
    gx = tuple(sigma.grid_breaks()[1]) + tuple(tau.grid_breaks()[1])
    return fns, gt, gx


def J_functional(eq: QuasiEq, sigma: Section, tau: Section, zeta, tol: float = Z_TOL,
                 n: int = ORDER) -> float:
    """<J(rho, sigma, tau), zeta> for a Lipschitz section tau and test zeta(t, x)."""
    if not tau.lipschitz:
        raise ConstraintViolation("J needs a Lipschitz second section")
    box = zeta.box[:2]

    def point_fn(T, X):
        u, v, d1, d2, de = _pair_terms(eq, sigma, tau, T, X, n)
        vt, vx = tau.grad(T, X)
        x1v, x2v, _ = eq.field(T, X, v)
        x3u = _ev(eq.X3, T, X, u)
        z = zeta.value(T, X)
        zt, zx = zeta.grad(T, X)
        return np.sign(u - v) * (d1 * zt + d2 * zx + (x3u - x1v * vt - x2v * vx + de) * z)

    fns, gt, gx = _pair_breaks(sigma, tau)
    return _z_integral(point_fn, box[0], box[1], fns, gt, gx, tol, n)


def C_functional(eq: QuasiEq, sigma: Section, tau: Section, zeta, tol: float = Z_TOL,
                 n: int = ORDER) -> float:
    """<C(rho, sigma, tau), zeta>, the integral of d(rho -| zeta) over |sigma, tau|."""
    box = zeta.box[:2]

    def point_fn(T, X):
        u, v, d1, d2, de = _pair_terms(eq, sigma, tau, T, X, n)
        x3u = _ev(eq.X3, T, X, u)
        x3v = _ev(eq.X3, T, X, v)
        z = zeta.value(T, X)
        zt, zx = zeta.grad(T, X)
        return np.sign(u - v) * (d1 * zt + d2 * zx + (x3u - x3v + de) * z)

    fns, gt, gx = _pair_breaks(sigma, tau)
    return _z_integral(point_fn, box[0], box[1], fns, gt, gx, tol, n)


def identity_residual(eq, sigma, tau, zeta, **kw) -> float:
    """J(sigma, tau) + J(tau, sigma) - C(sigma, tau); zero for Lipschitz pairs."""
    return (J_functional(eq, sigma, tau, zeta, **kw) + J_functional(eq, tau, sigma, zeta, **kw)
            - C_functional(eq, sigma, tau, zeta, **kw))


# ------------------------------------------------------------ disintegration

@dataclass(frozen=True)
class ProductDensity:
    """phi(t, x, y) = l(y) * zeta(t, x) for bumps l and zeta."""

    zeta: object
    l_center: float
    l_halfwidth: float

    @property
    def dims(self):
        return 3

    @property
    def box(self):
        return list(self.zeta.box[:2]) + [(self.l_center - self.l_halfwidth, self.l_center + self.l_halfwidth)]

    def l(self, y):
        v, _ = _bump1((np.asarray(y, float) - self.l_center) / self.l_halfwidth)
        return v

    def value(self, t, x, y):
        return self.l(y) * self.zeta.value(t, x)

    def grad(self, t, x, y):
        gt, gx = self.zeta.grad(t, x)
        ly = self.l(y)
        return ly * gt, ly * gx


def disintegration_check(eq: QuasiEq, sigma: Section, zeta, l_center: float, l_halfwidth: float,
                         tol: float = 1e-9, y_order: int = 10):
    """Both sides of the disintegration identity for phi = l(y) zeta(z).

    lhs integrates J(sigma, kappa(y), zeta) l(y) over y by adaptive quadrature,
    rhs evaluates I with the product test function directly.
    """
    prod = ProductDensity(zeta, l_center, l_halfwidth)
    lo, hi = prod.box[2]

    def j_of_y(ys):
        return np.array([J_functional(eq, sigma, constant_section(y), zeta) for y in ys]) * prod.l(ys)

    lhs = float(integrate(j_of_y, lo, hi, tol=tol, n=y_order))
    rhs = I_functional(eq, sigma, prod)
    return lhs, rhs, lhs - rhs


def disintegration_limit(eq: QuasiEq, sigma: Section, zeta, y0: float, widths) -> list:
    """Averages of J(sigma, kappa(y0 + y), zeta) against shrinking symmetric
    unit-mass bumps; they approach J(sigma, kappa(y0), zeta).
    """
    out = []
    for w in widths:
        mass = w * 256.0 / 315.0

        def f(ys, w=w, mass=mass):
            vals = np.array([J_functional(eq, sigma, constant_section(y), zeta) for y in ys])
            return vals * _bump1((ys - y0) / w)[0] / mass
        out.append(float(integrate(f, y0 - w, y0 + w, tol=1e-10, n=10)))
    return out


# ---------------------------------------------------------------- shocks

def _normal_pairing(eq: QuasiEq, t: float, x: float, normal, ys):
    x1, x2, _ = eq.field(t, x, ys)
    return normal[0] * x1 + normal[1] * x2


def rh_residual(eq: QuasiEq, sol: PiecewiseSolution, z, tol: float = 1e-12) -> float:
    """<d level, integral from u+ to u- of (X1, X2) dy> at a point of the shock."""
    t, x = (float(c) for c in z)
    _on_shock(sol, t, x)
    um, up = sol.sides(t, x)
    if um == up:
        return 0.0
    normal = sol.level_gradient(t, x)
    return float(integrate(lambda y: _normal_pairing(eq, t, x, normal, y), up, um, tol=tol))


def _on_shock(sol, t, x):
    lev = float(_ev(sol.level, t, x))
    g = np.hypot(*sol.level_gradient(t, x))
    if g == 0:
        raise ConstraintViolation("level function has vanishing gradient on the shock")
    if abs(lev) > 1e-8 * max(1.0, g):
        raise ConstraintViolation(f"point ({t}, {x}) is not on the shock (level {lev:.3e})")


def admissibility_check(eq: QuasiEq, sol: PiecewiseSolution, z, k_grid: int = 65,
                        tol: float = 1e-10) -> dict:
    """Jump admissibility at a shock point.

    The jump inequality is tested on ``k_grid`` values k between u- and u+ as
    margin(k) = <dphi, int_{|u-,k|} X> - <dphi, int_{|k,u+|} X> >= 0 with
    unoriented fiber integrals. The endpoint conditions require the
    characteristic field to point into the shock from both sides.
    """
    t, x = (float(c) for c in z)
    _on_shock(sol, t, x)
    um, up = sol.sides(t, x)
    normal = sol.level_gradient(t, x)
    scale = float(np.hypot(*normal))
    rep = {"z": [t, x], "u_minus": um, "u_plus": up, "normal": list(normal)}
    rh = rh_residual(eq, sol, (t, x))
    rep["rankine_hugoniot"] = {"value": rh, "pass": abs(rh) <= 1e-8 * scale * (1 + abs(um - up))}
    plus_side = float(_normal_pairing(eq, t, x, normal, up))
    minus_side = float(_normal_pairing(eq, t, x, normal, um))
    # without a jump there is no shock to enter
    rep["entering_plus"] = {"value": plus_side, "pass": um == up or plus_side <= tol * scale}
    rep["entering_minus"] = {"value": minus_side, "pass": um == up or minus_side >= -tol * scale}
    if um == up:
        rep["jump_inequality"] = {"worst_margin": 0.0, "worst_k": um, "secant_gap": 0.0, "pass": True}
    else:
        lo, hi = min(um, up), max(um, up)
        ks = np.linspace(lo, hi, k_grid)
        # cumulative pairing F(k) = int_lo^k <dphi, X>
        cum = integrate_batch(lambda y, own: _normal_pairing(eq, t, x, normal, y),
                              np.full(ks.size, lo), ks, tol=1e-13)
        total = cum[-1]
        f_minus = cum if um == lo else total - cum      # int over |u-, k|
        f_plus = total - cum if up == hi else cum       # int over |k, u+|
        margin = f_minus - f_plus
        w = int(np.argmin(margin))
        rep["jump_inequality"] = {"worst_margin": float(margin[w]), "worst_k": float(ks[w]),
                                  "secant_gap": float(margin[w]) / 2.0,
                                  "pass": bool(margin[w] >= -tol * scale * (1 + hi - lo))}
    lax = rep["rankine_hugoniot"]["pass"] and rep["entering_plus"]["pass"] and rep["entering_minus"]["pass"]
    if eq.is_flat_projective() and lax:
        rep["lax_implies_jump"] = rep["jump_inequality"]["pass"]
    rep["pass"] = bool(lax and rep["jump_inequality"]["pass"])
    return rep


def shock_check(eq: QuasiEq, sol: PiecewiseSolution, t_range, x_range, n: int = 64,
                k_grid: int = 65, tol: float = 1e-10) -> dict:
    """Admissibility at shock points sampled on an n-point t grid, plus the
    classical residual of both pieces off the shock.
    """
    pts = sol.shock_points(t_range, x_range, n)
    reports = [admissibility_check(eq, sol, p, k_grid, tol) for p in pts]
    ts = np.linspace(*t_range, 17)
    xs = np.linspace(*x_range, 17)
    T, X = np.meshgrid(ts, xs, indexing="ij")
    lev = _ev(sol.level, T, X)
    res = 0.0
    for expr, mask in ((sol.minus, lev < 0), (sol.plus, lev > 0)):
        if mask.any():
            res = max(res, float(np.max(np.abs(eq.classical_residual(expr, T[mask], X[mask])))))
    out = {"points": len(pts), "classical_residual": res,
           "worst_rh": max((abs(r["rankine_hugoniot"]["value"]) for r in reports), default=0.0),
           "worst_jump_margin": min((r["jump_inequality"]["worst_margin"] for r in reports), default=0.0),
           "worst_entering_plus": max((r["entering_plus"]["value"] for r in reports), default=-math.inf),
           "worst_entering_minus": min((r["entering_minus"]["value"] for r in reports), default=math.inf),
           "all_pass": all(r["pass"] for r in reports) and res <= 1e-8,
           "reports": reports}
    return out
