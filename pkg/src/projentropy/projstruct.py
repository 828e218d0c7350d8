"""Projective connections on a plane chart and reduction to Burgers' equation.

Conventions. A connection is stored through its Christoffel-type tensor
B = (B^i_jk) with geodesics z'' + B(z', z') = 0 up to reparametrization.
Its projective class is B modulo the image of Q, and the ker Q representative
is encoded by four functions (a, b, c, d): the unparametrized geodesics
x = g(t) transversal to the x direction satisfy

    g'' = a g'^3 + b g'^2 + c g' + d,

which is also the characteristic system of u_t + u u_x = a u^3 + b u^2 + c u + d.
The chart is flat (locally projectively equivalent to straight lines) iff the
two curvature expressions computed by :func:`flatness_residual` vanish.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (AtInfinity, LeftDomain, MonotonicityFailed, NotInKernel, SingularJacobian,
                     TransversalityFailed)
from .exprcalc import (Expr, Jet, Num, _add, _mul, as_expr, diff, diff_alias, evaluate, jet_eval, quotient,
                       substitute, to_text)
from .kruzhkov import QuasiEq, T_NAMES, X_NAMES

GeneralEq = QuasiEq

DEFAULT_STEPS = 1024
KERNEL_TOL = 1e-10
FIT_TOL = 1e-9
MIN_SAMPLES = 8
DENSE_FIBER = 257

_SEEDS = {"t": 0, "z1": 0, "x": 1, "z2": 1}
_SEEDS_SWAPPED = {"x": 0, "z2": 0, "t": 1, "z1": 1}


def _env(t, x, y=None) -> dict:
    env = {"t": t, "z1": t, "x": x, "z2": x}
    if y is not None:
        env["y"] = y
    return env


def _ev(expr: Expr, t, x, y=None) -> np.ndarray:
    shape = np.broadcast(t, x, 0.0 if y is None else y).shape
    return np.broadcast_to(np.asarray(evaluate(expr, _env(t, x, y)), dtype=float), shape)


def _box2(box) -> dict:
    box = dict(box or {})
    return {k: (float(box.get(k, (-10.0, 10.0))[0]), float(box.get(k, (-10.0, 10.0))[1]))
            for k in ("t", "x")}


# ----------------------------------------------------------- bilinear maps

class SymBil:
    """Symmetric bilinear map E x E -> E for dim E = 2.

    ``data[i]`` holds the i-th output component on (e1e1, e1e2, e2e2). Leading
    axes beyond the (2, 3) block are allowed and broadcast.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        data = np.asarray(data, dtype=float)
        if data.shape[-2:] != (2, 3):
            raise ValueError(f"expected trailing shape (2, 3), got {data.shape}")
        self.data = data

    @classmethod
    def zero(cls) -> "SymBil":
        return cls(np.zeros((2, 3)))

    @classmethod
    def from_tensor(cls, t) -> "SymBil":
        """From a (..., 2, 2, 2) array indexed [i, j, k]; symmetrized in (j, k)."""
        t = np.asarray(t, dtype=float)
        off = 0.5 * (t[..., 0, 1] + t[..., 1, 0])
        return cls(np.stack([t[..., 0, 0], off, t[..., 1, 1]], axis=-1))

    def tensor(self) -> np.ndarray:
        d = self.data
        t = np.empty(d.shape[:-1] + (2, 2))
        t[..., 0, 0] = d[..., 0]
        t[..., 0, 1] = t[..., 1, 0] = d[..., 1]
        t[..., 1, 1] = d[..., 2]
        return t

    def __call__(self, u, v) -> np.ndarray:
        return np.einsum("...ijk,...j,...k->...i", self.tensor(), np.asarray(u, float),
                         np.asarray(v, float))

    def __add__(self, other: "SymBil") -> "SymBil":
        return SymBil(self.data + other.data)

    def __sub__(self, other: "SymBil") -> "SymBil":
        return SymBil(self.data - other.data)

    def scale(self, c) -> "SymBil":
        return SymBil(self.data * c)

    def trace_form(self) -> np.ndarray:
        """Covector u -> tr B(u, .)."""
        return np.einsum("...iji->...j", self.tensor())

    def pullback(self, s) -> "SymBil":
        """(S*B)(u, v) = S^-1 B(S u, S v)."""
        s = np.asarray(s, dtype=float)
        sinv = np.linalg.inv(s)
        t = np.einsum("...ai,...ijk,...jb,...kc->...abc", sinv, self.tensor(), s, s)
        return SymBil.from_tensor(t)

    def pushforward(self, s) -> "SymBil":
        return self.pullback(np.linalg.inv(np.asarray(s, dtype=float)))

    def norm(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def __repr__(self):
        return f"SymBil({self.data.tolist()})"


def q_project(b: SymBil) -> SymBil:
    """QB(u, v) = (tr B(u,.) v + tr B(v,.) u) / 3."""
    tau = b.trace_form() / 3.0
    d = np.zeros(b.data.shape)
    # component i on (e1e1, e1e2, e2e2)
    d[..., 0, 0] = 2.0 * tau[..., 0]
    d[..., 0, 1] = tau[..., 1]
    d[..., 1, 1] = tau[..., 0]
    d[..., 1, 2] = 2.0 * tau[..., 1]
    return SymBil(d)


def q_complement(b: SymBil) -> SymBil:
    return b - q_project(b)


def _poly(b: SymBil):
    """Coefficients of h B^1(w, w) - B^2(w, w) with w = e1 + h e2."""
    d = b.data
    a = d[..., 0, 2]
    bb = 2.0 * d[..., 0, 1] - d[..., 1, 2]
    c = d[..., 0, 0] - 2.0 * d[..., 1, 1]
    dd = -d[..., 1, 0]
    return a, bb, c, dd


def coeffs_from_B(b: SymBil, splitting=None, tol: float = KERNEL_TOL):
    """(a, b, c, d) of a ker Q element.

    ``splitting`` is an optional 2x2 matrix whose columns are the vectors
    (e, h) spanning the transversal line and the distinguished line; by
    default e = e1 and H = R e2.
    """
    if splitting is not None:
        b = b.pullback(splitting)
    q = q_project(b)
    if q.norm() > tol * max(1.0, b.norm()):
        raise NotInKernel(f"|QB| = {q.norm():.3e} exceeds {tol:g}")
    out = _poly(b)
    return tuple(float(v) if np.ndim(v) == 0 else v for v in out)


def B_from_coeffs(a, b, c, d) -> SymBil:
    a, b, c, d = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, d)))
    data = np.empty(a.shape + (2, 3))
    data[..., 0, 0] = c / 3.0
    data[..., 0, 1] = b / 3.0
    data[..., 0, 2] = a
    data[..., 1, 0] = -d
    data[..., 1, 1] = -c / 3.0
    data[..., 1, 2] = -b / 3.0
    return SymBil(data)


def cubic(coeffs, h):
    a, b, c, d = coeffs
    return ((a * h + b) * h + c) * h + d


# ------------------------------------------------------------- connections

@dataclass(frozen=True, eq=False)
class Connection2D:
    """Coefficient expressions a, b, c, d in (t, x) (alias z1, z2) on a box."""

    a: Expr
    b: Expr
    c: Expr
    d: Expr
    box: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, as_expr(getattr(self, name)))
        object.__setattr__(self, "box", _box2(self.box))

    @classmethod
    def zero(cls, box=None) -> "Connection2D":
        return cls("0", "0", "0", "0", box or {})

    @property
    def exprs(self):
        return self.a, self.b, self.c, self.d

    def coeffs(self, t, x):
        return tuple(_ev(e, t, x) for e in self.exprs)

    def jets(self, t, x):
        env = _env(np.asarray(t, float), np.asarray(x, float))
        return [jet_eval(e, env, _SEEDS, 2) for e in self.exprs]

    def texts(self):
        return [to_text(e) for e in self.exprs]


def _flatness_from_jets(ja: Jet, jb: Jet, jc: Jet, jd: Jet):
    a, b, c, d = ja.val, jb.val, jc.val, jd.val
    a1, a2 = ja.grad[0], ja.grad[1]
    b1, b2 = jb.grad[0], jb.grad[1]
    c1, c2 = jc.grad[0], jc.grad[1]
    d1, d2 = jd.grad[0], jd.grad[1]
    a11 = ja.hess[0, 0]
    b11, b12 = jb.hess[0, 0], jb.hess[1, 0]
    c12, c22 = jc.hess[0, 1], jc.hess[1, 1]
    d22 = jd.hess[1, 1]
    r1 = (c22 / 3.0 - 2.0 * b12 / 3.0 + a11 - 2.0 * b * b1 / 3.0 + a * c1 + c * a1
          + b * c2 / 3.0 - 2.0 * a * d2 - d * a2)
    r2 = (b11 / 3.0 - 2.0 * c12 / 3.0 + d22 + 2.0 * c * c2 / 3.0 - d * b2 - b * d2
          - c * b1 / 3.0 + 2.0 * d * a1 + a * d1)
    return r1, r2


def flatness_residual(conn, z):
    """Both projective curvature expressions at z = (z1, z2); vectorized.

    ``conn`` is anything with ``jets(z1, z2)`` returning four second-order
    jets (a Connection2D or a fitted connection).
    """
    t, x = (np.asarray(v, dtype=float) for v in z)
    r1, r2 = _flatness_from_jets(*conn.jets(t, x))
    if np.ndim(r1) == 0:
        return float(r1), float(r2)
    return r1, r2


# ------------------------------------------------------------ chart change

@dataclass(frozen=True, eq=False)
class ChartChange:
    """phi(t, x) = (tau(t, x), xi(t, x)) on a box of the source chart."""

    tau: Expr
    xi: Expr
    box: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tau", as_expr(self.tau))
        object.__setattr__(self, "xi", as_expr(self.xi))
        object.__setattr__(self, "box", _box2(self.box))

    @classmethod
    def identity(cls, box=None) -> "ChartChange":
        return cls("t", "x", box or {})

    @classmethod
    def projective(cls, matrix, box=None) -> "ChartChange":
        """Fractional-linear map with homogeneous coordinates (t, x, 1)."""
        m = np.asarray(getattr(matrix, "matrix", matrix), dtype=float).reshape(3, 3)

        def row(i):
            return f"({float(m[i, 0])!r}*t + {float(m[i, 1])!r}*x + {float(m[i, 2])!r})"
        den = row(2)
        return cls(f"{row(0)}/{den}", f"{row(1)}/{den}", box or {})

    def __call__(self, t, x):
        return _ev(self.tau, t, x), _ev(self.xi, t, x)

    def jets(self, t, x):
        """Value (2, ...), Jacobian J[k, i] = d phi^k / d z_i and Hessian H[k, i, j]."""
        env = _env(np.asarray(t, float), np.asarray(x, float))
        jt = jet_eval(self.tau, env, _SEEDS, 2)
        jx = jet_eval(self.xi, env, _SEEDS, 2)
        shape = np.broadcast(np.asarray(t), np.asarray(x)).shape

        def full(a, extra):
            return np.broadcast_to(a, extra + shape)
        val = np.stack([full(jt.val, ()), full(jx.val, ())])
        jac = np.stack([full(jt.grad, (2,)), full(jx.grad, (2,))])
        hess = np.stack([full(jt.hess, (2, 2)), full(jx.hess, (2, 2))])
        return val, jac, hess

    def jacobian(self, t, x) -> np.ndarray:
        return self.jets(t, x)[1]

    def check(self, n: int = 17) -> float:
        """Smallest |det J| on an n x n grid of the box; SingularJacobian if it vanishes."""
        t, x = np.meshgrid(np.linspace(*self.box["t"], n), np.linspace(*self.box["x"], n),
                           indexing="ij")
        jac = self.jacobian(t, x)
        det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
        worst = float(np.min(np.abs(det)))
        scale = float(np.max(np.abs(jac)))
        if not np.all(np.isfinite(det)) or worst <= 1e-12 * max(scale * scale, 1e-300):
            raise SingularJacobian(f"Jacobian determinant reaches {worst:.3e} on the box")
        return worst

    def compose(self, after: "ChartChange") -> "ChartChange":
        """The chart change ``after`` applied on top of this one."""
        sub = {"t": self.tau, "z1": self.tau, "x": self.xi, "z2": self.xi}
        return ChartChange(substitute(after.tau, sub), substitute(after.xi, sub), self.box)

    def inverse_point(self, tt, xx, guess=None, tol: float = 1e-13, maxiter: int = 60):
        """Solve phi(t, x) = (tt, xx) by Newton's method from ``guess``."""
        if guess is None:
            guess = [0.5 * sum(self.box["t"]), 0.5 * sum(self.box["x"])]
        z = np.array(guess, dtype=float)
        target = np.array([tt, xx], dtype=float)
        for _ in range(maxiter):
            val, jac, _ = self.jets(z[0], z[1])
            r = val - target
            step = np.linalg.solve(_nonsingular(jac), r)
            z = z - step
            if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(z))):
                return float(z[0]), float(z[1])
        raise SingularJacobian("Newton iteration for the inverse point did not converge")


def _nonsingular(jac: np.ndarray) -> np.ndarray:
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    scale = np.max(np.abs(jac))
    if not np.isfinite(det) or abs(det) <= 1e-13 * max(scale * scale, 1e-300):
        raise SingularJacobian(f"Jacobian determinant {det:.3e}")
    return jac


def transform_tensor(b: SymBil, jac, hess) -> SymBil:
    """Connection tensor in the target chart from the source tensor at a point."""
    jinv = np.linalg.inv(jac)
    t = (np.einsum("ai,ijk,jb,kc->abc", jac, b.tensor(), jinv, jinv)
         - np.einsum("aij,ib,jc->abc", hess, jinv, jinv))
    return SymBil.from_tensor(t)


def transform_connection(conn, chart: ChartChange, p, basis=None):
    """Coefficients (a', b', c', d') at phi(p) of the connection given at p.

    ``conn`` may be a Connection2D or anything with ``coeffs(t, x)``. With
    ``basis`` (columns e, h) the coefficients are taken in that splitting of
    the target chart instead of the standard one.
    """
    t, x = (float(v) for v in p)
    _, jac, hess = chart.jets(t, x)
    jac = _nonsingular(np.asarray(jac, dtype=float))
    src = B_from_coeffs(*(float(v) for v in conn.coeffs(t, x)))
    out = q_complement(transform_tensor(src, jac, np.asarray(hess, dtype=float)))
    return coeffs_from_B(out, splitting=basis, tol=1e-8)


def transform_section(chart: ChartChange, u, t, x, basis=None):
    """Slope of the image direction: (xi_t + xi_x u) / (tau_t + tau_x u)."""
    u = np.asarray(u, dtype=float)
    jac = chart.jacobian(t, x)
    lead = jac[0, 0] + jac[0, 1] * u
    other = jac[1, 0] + jac[1, 1] * u
    if basis is not None:
        sinv = np.linalg.inv(np.asarray(basis, dtype=float))
        lead, other = sinv[0, 0] * lead + sinv[0, 1] * other, sinv[1, 0] * lead + sinv[1, 1] * other
    scale = np.maximum(np.abs(lead), np.abs(other))
    if np.any(np.abs(lead) <= 1e-14 * np.maximum(scale, 1e-300)):
        raise AtInfinity("image direction is parallel to the distinguished line")
    out = other / lead
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------- characteristics

@dataclass(frozen=True)
class Trace:
    t: np.ndarray
    g: np.ndarray
    gdot: np.ndarray

    def rows(self):
        """(t, g, g') rows; one block per trajectory when several were traced."""
        if self.g.ndim == 1:
            return np.column_stack([self.t, self.g, self.gdot])
        n = self.g.shape[1]
        return np.column_stack([np.repeat(self.t, n), self.g.ravel(), self.gdot.ravel()])


def trace_characteristic(conn, t0: float, g0, v0, t1: float, steps: int = DEFAULT_STEPS) -> Trace:
    """Classic RK4 for g'' = a g'^3 + b g'^2 + c g' + d with fixed step.

    ``g0`` and ``v0`` may be arrays (one trajectory each). Raises LeftDomain
    as soon as a stage point leaves the connection's box.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    g = np.array(g0, dtype=float)
    v = np.array(v0, dtype=float)
    g, v = np.broadcast_arrays(g, v)
    g, v = g.copy(), v.copy()
    h = (float(t1) - float(t0)) / steps
    (tlo, thi), (xlo, xhi) = conn.box["t"], conn.box["x"]
    slack = 1e-12 * max(1.0, abs(thi - tlo), abs(xhi - xlo))

    def rhs(t, g, v):
        if not (tlo - slack <= t <= thi + slack) or np.any((g < xlo - slack) | (g > xhi + slack)):
            raise LeftDomain(f"trajectory left the domain near t = {t:.6g}")
        a, b, c, d = conn.coeffs(t, g)
        return v, ((a * v + b) * v + c) * v + d

    ts = float(t0) + h * np.arange(steps + 1)
    gs = np.empty((steps + 1,) + g.shape)
    vs = np.empty_like(gs)
    gs[0], vs[0] = g, v
    for n in range(steps):
        t = ts[n]
        k1g, k1v = rhs(t, g, v)
        k2g, k2v = rhs(t + 0.5 * h, g + 0.5 * h * k1g, v + 0.5 * h * k1v)
        k3g, k3v = rhs(t + 0.5 * h, g + 0.5 * h * k2g, v + 0.5 * h * k2v)
        k4g, k4v = rhs(t + h, g + h * k3g, v + h * k3v)
        g = g + h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        v = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        gs[n + 1], vs[n + 1] = g, v
    ts[-1] = float(t1)
    rhs(ts[-1], g, v)
    return Trace(ts, gs, vs)


# ------------------------------------------------------------ reduction

def _spread(j: Jet, shape) -> Jet:
    def lift(a, lead):
        a = np.asarray(a)
        pad = (1,) * (len(shape) - (a.ndim - lead))
        return np.broadcast_to(a.reshape(a.shape[:lead] + pad + a.shape[lead:]),
                               a.shape[:lead] + shape)
    return Jet(lift(j.val, 0), lift(j.grad, 1), lift(j.hess, 2))


def _jsum(j: Jet) -> Jet:
    return Jet(j.val.sum(-1), j.grad.sum(-1), j.hess.sum(-1))


def _jet_solve(mat, rhs):
    """Gaussian elimination without pivoting on a symmetric positive system of jets."""
    n = len(rhs)
    m = [row[:] for row in mat]
    r = rhs[:]
    for k in range(n):
        inv = m[k][k].reciprocal()
        for i in range(k + 1, n):
            f = m[i][k] * inv
            for j in range(k, n):
                m[i][j] = m[i][j] - f * m[k][j]
            r[i] = r[i] - f * r[k]
    sol = [None] * n
    for k in range(n - 1, -1, -1):
        acc = r[k]
        for j in range(k + 1, n):
            acc = acc - m[k][j] * sol[j]
        sol[k] = acc / m[k][k]
    return sol


@dataclass(frozen=True, eq=False)
class FittedConnection:
    """Cubic-fit coefficients of a general equation as a connection field.

    Coordinates are (z1, z2) of the reduction chart: (t, x), or (x, t) when
    the indices were swapped. ``lhs`` and ``w`` are expressions in t, x, y.
    """

    lhs: Expr
    w: Expr
    samples: np.ndarray
    swapped: bool
    box: dict

    def _tx(self, z1, z2):
        return (z2, z1) if self.swapped else (z1, z2)

    def _design(self, w):
        return np.stack([w ** 3, w ** 2, w, np.ones_like(w)], axis=-1)

    def coeffs(self, z1, z2):
        t, x = self._tx(np.asarray(z1, float), np.asarray(z2, float))
        shape = np.broadcast(t, x).shape
        y = self.samples.reshape((1,) * len(shape) + (-1,))
        t, x = np.asarray(t)[..., None], np.asarray(x)[..., None]
        w = _ev(self.w, t, x, y)
        lhs = _ev(self.lhs, t, x, y)
        v = self._design(w)
        coef = np.linalg.lstsq(v.reshape(-1, v.shape[-1]), lhs.reshape(-1), rcond=None)[0] \
            if not shape else _batched_lstsq(v, lhs)
        return tuple(coef[..., k] for k in range(4))

    def residual(self, z1, z2):
        """Max deviation of the left-hand side from the fitted cubic over the samples."""
        t, x = self._tx(np.asarray(z1, float)[..., None], np.asarray(z2, float)[..., None])
        y = self.samples
        w = _ev(self.w, t, x, y)
        lhs = _ev(self.lhs, t, x, y)
        a, b, c, d = (k[..., None] for k in self.coeffs(z1, z2))
        return np.max(np.abs(lhs - cubic((a, b, c, d), w)), axis=-1)

    def jets(self, z1, z2):
        """Second-order jets of the fitted coefficients, through the normal equations."""
        t, x = self._tx(np.asarray(z1, float), np.asarray(z2, float))
        shape = np.broadcast(t, x).shape
        env = _env(np.asarray(t)[..., None], np.asarray(x)[..., None])
        env["y"] = self.samples.reshape((1,) * len(shape) + (-1,))
        seeds = _SEEDS_SWAPPED if self.swapped else _SEEDS
        jw = jet_eval(self.w, env, seeds, 2)
        jl = jet_eval(self.lhs, env, seeds, 2)
        full = shape + (self.samples.size,)
        jw, jl = _spread(jw, full), _spread(jl, full)
        one = Jet.const(np.ones(full), 2)
        pw = [one, jw]
        for _ in range(5):
            pw.append(pw[-1] * jw)
        cols = [pw[3], pw[2], pw[1], pw[0]]
        mat = [[_jsum(pw[6 - i - j]) for j in range(4)] for i in range(4)]
        rhs = [_jsum(cols[i] * jl) for i in range(4)]
        return _jet_solve(mat, rhs)


def _batched_lstsq(v, lhs):
    flat_v = v.reshape((-1,) + v.shape[-2:])
    flat_l = lhs.reshape((-1, lhs.shape[-1]))
    out = np.empty((flat_v.shape[0], 4))
    for i in range(flat_v.shape[0]):
        out[i] = np.linalg.lstsq(flat_v[i], flat_l[i], rcond=None)[0]
    return out.reshape(v.shape[:-2] + (4,))


@dataclass
class ReductionReport:
    swapped: bool
    w: str
    lhs: str
    grid_t: np.ndarray
    grid_x: np.ndarray
    samples: np.ndarray
    coefficients: dict
    residual: np.ndarray
    max_residual: float
    scale: float
    tol: float
    reducible: bool
    monotone_sign: int
    pushforward: str
    connection: FittedConnection = field(repr=False)

    def to_dict(self) -> dict:
        coeffs = {k: np.asarray(v).tolist() for k, v in self.coefficients.items()}
        zero = all(np.max(np.abs(v)) <= self.tol * max(self.scale, 1.0)
                   for v in self.coefficients.values())
        return {
            "reducible": self.reducible,
            "index_swap": self.swapped,
            "w": self.w,
            "lhs": self.lhs,
            "w_monotone_sign": self.monotone_sign,
            "samples": self.samples.tolist(),
            "grid": {"t": self.grid_t.tolist(), "x": self.grid_x.tolist()},
            "coefficients": coeffs,
            "coefficients_vanish": bool(zero),
            "fit_residual": self.max_residual,
            "lhs_scale": self.scale,
            "tol": self.tol,
            "pushforward": self.pushforward if self.reducible else None,
        }


def _strict_sign(v, scale) -> bool:
    return bool(np.all(v > 1e-12 * scale) or np.all(v < -1e-12 * scale))


def _orientation(eq: GeneralEq, t, x, y):
    x1 = _ev(eq.X1, t, x, y)
    x2 = _ev(eq.X2, t, x, y)
    scale = max(float(np.max(np.abs(x1))), float(np.max(np.abs(x2))), 1e-300)
    if _strict_sign(x1, scale):
        return False
    if _strict_sign(x2, scale):
        return True
    raise TransversalityFailed("neither X1 nor X2 keeps a strict sign on the sampled region")


def reduction_test(eq: GeneralEq, grid_t, grid_x, samples, tol: float = FIT_TOL) -> ReductionReport:
    """Certify on samples that the slope equation is cubic in w = X2/X1.

    With w the slope of the characteristic projection, the left-hand side
    w_{z1} + w w_{z2} + (X3/X1) w_y must be a cubic polynomial in w whose
    coefficients depend on z only. When X1 vanishes somewhere but X2 does
    not, the roles of t and x are exchanged.
    """
    grid_t = np.asarray(grid_t, dtype=float)
    grid_x = np.asarray(grid_x, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} fiber samples, got {samples.size}")
    t, x = np.meshgrid(grid_t, grid_x, indexing="ij")
    t3, x3, y3 = t[..., None], x[..., None], samples
    # conditions are checked on a dense fiber grid, not only at the fit samples
    dense = np.linspace(samples.min(), samples.max(), DENSE_FIBER)
    swapped = _orientation(eq, t3, x3, dense)
    lead, other = (eq.X2, eq.X1) if swapped else (eq.X1, eq.X2)
    d1, d2 = (X_NAMES, T_NAMES) if swapped else (T_NAMES, X_NAMES)
    w = quotient(other, lead)
    wy = diff(w, "y")
    wyv = _ev(wy, t3, x3, dense)
    if not _strict_sign(wyv, max(float(np.max(np.abs(wyv))), 1e-300)):
        raise MonotonicityFailed("the slope X2/X1 is not strictly monotone in y on the samples")
    sign = 1 if wyv.flat[0] > 0 else -1
    lhs = _add(_add(diff_alias(w, d1), _mul(w, diff_alias(w, d2))),
               _mul(quotient(eq.X3, lead), wy))
    box = {"t": (float(grid_t.min()), float(grid_t.max())),
           "x": (float(grid_x.min()), float(grid_x.max()))}
    if swapped:
        box = {"t": box["x"], "x": box["t"]}
    conn = FittedConnection(lhs, w, samples, swapped, box)
    z1, z2 = (x, t) if swapped else (t, x)
    a, b, c, d = conn.coeffs(z1, z2)
    res = conn.residual(z1, z2)
    lhs_vals = _ev(lhs, t3, x3, y3)
    scale = float(np.max(np.abs(lhs_vals)))
    worst = float(np.max(res))
    reducible = worst == 0.0 or worst <= tol * scale
    push = to_text(w)
    return ReductionReport(swapped, to_text(w), to_text(lhs), grid_t, grid_x, samples,
                           {"a": a, "b": b, "c": c, "d": d}, res, worst, scale, tol,
                           bool(reducible), sign, push, conn)


@dataclass
class PipelineReport:
    reduction: ReductionReport
    flatness: dict | None = None
    characteristics: dict | None = None
    chart: dict | None = None
    passed: bool = False

    def to_dict(self) -> dict:
        return {
            "reduction": self.reduction.to_dict(),
            "flatness": self.flatness,
            "characteristics": self.characteristics,
            "chart": self.chart,
            "pass": self.passed,
        }


def _characteristic_check(eq, rep: ReductionReport, initial, starts, span, steps):
    """Trace the general equation's characteristics and the cubic ones side by side.

    Along a characteristic of X1 u_t + X2 u_x = X3 starting at (z0, v0(z0))
    the slope w(z, y) must coincide with g' of the characteristic of the
    reduced equation from the same start.
    """
    conn = rep.connection
    lead, other = (eq.X2, eq.X1) if rep.swapped else (eq.X1, eq.X2)
    (s_lo, s_hi), (g_lo, g_hi) = conn.box["t"], conn.box["x"]
    s0 = s_lo
    s1 = s_lo + span * (s_hi - s_lo)
    g0 = np.asarray(starts, dtype=float)
    y0 = _ev(as_expr(initial), *((g0, s0) if rep.swapped else (s0, g0)))
    y0 = np.array(np.broadcast_to(y0, g0.shape), dtype=float)

    def tx(s, g):
        return (g, s) if rep.swapped else (s, g)

    def rhs(s, g, y):
        t, x = tx(s, g)
        l = _ev(lead, t, x, y)
        return _ev(other, t, x, y) / l, _ev(eq.X3, t, x, y) / l

    h = (s1 - s0) / steps
    g, y = g0.copy(), y0.copy()
    w0 = _ev(rep.connection.w, *tx(s0, g), y)
    tr = trace_characteristic(conn, s0, g0, w0, s1, steps)
    worst_pos = worst_slope = 0.0
    for n in range(steps):
        s = s0 + n * h
        k1 = rhs(s, g, y)
        k2 = rhs(s + h / 2, g + h / 2 * k1[0], y + h / 2 * k1[1])
        k3 = rhs(s + h / 2, g + h / 2 * k2[0], y + h / 2 * k2[1])
        k4 = rhs(s + h, g + h * k3[0], y + h * k3[1])
        g = g + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y = y + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        w = _ev(rep.connection.w, *tx(s + h, g), y)
        worst_pos = max(worst_pos, float(np.max(np.abs(g - tr.g[n + 1]))))
        worst_slope = max(worst_slope, float(np.max(np.abs(w - tr.gdot[n + 1]))))
    return {"trajectories": int(g0.size), "span": [s0, s1], "steps": steps,
            "position_residual": worst_pos, "slope_residual": worst_slope}


def reduction_pipeline(eq: GeneralEq, grid_t, grid_x, samples, chart: ChartChange | None = None,
                       initial=None, tol: float = FIT_TOL, flat_tol: float = 1e-8,
                       char_tol: float = 1e-8, steps: int = 256) -> PipelineReport:
    """Reduction test, flatness of the fitted coefficients and solution checks.

    ``initial`` is the fiber value v0 along the first base line (an expression
    in the other base coordinate); the default is the midpoint of the sampled
    fiber range. With ``chart`` the fitted coefficients must be carried to
    zero, and traced characteristics must be carried to straight lines of
    constant slope.
    """
    rep = reduction_test(eq, grid_t, grid_x, samples, tol)
    out = PipelineReport(rep)
    if not rep.reducible:
        return out
    conn = rep.connection
    t, x = np.meshgrid(rep.grid_t, rep.grid_x, indexing="ij")
    z1, z2 = (x, t) if rep.swapped else (t, x)
    r1, r2 = flatness_residual(conn, (z1, z2))
    cscale = max([1.0] + [float(np.max(np.abs(v))) for v in rep.coefficients.values()])
    worst = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    out.flatness = {"r1": np.asarray(r1).tolist(), "r2": np.asarray(r2).tolist(),
                    "max_residual": worst, "tol": flat_tol, "pass": worst <= flat_tol * cscale}
    ok = out.flatness["pass"]

    if initial is None:
        initial = Num(float(0.5 * (rep.samples.min() + rep.samples.max())))
    lo, hi = conn.box["x"]
    starts = lo + (hi - lo) * np.array([0.35, 0.45, 0.5, 0.55, 0.65])
    span = 0.5
    for _ in range(6):
        try:
            ch = _characteristic_check(eq, rep, initial, starts, span, steps)
            break
        except LeftDomain:
            span *= 0.5
    else:
        ch = {"error": "characteristics leave the domain immediately"}
    if "error" not in ch:
        ch["tol"] = char_tol
        ch["pass"] = max(ch["position_residual"], ch["slope_residual"]) <= char_tol
    else:
        ch["pass"] = False
    out.characteristics = ch
    ok = ok and ch["pass"]

    if chart is not None:
        out.chart = chart_check(conn, chart, z1, z2, starts, tol=flat_tol)
        ok = ok and out.chart["pass"]
    out.passed = bool(ok)
    return out


def chart_check(conn, chart: ChartChange, z1, z2, starts, tol: float = 1e-8, steps: int = 256):
    """Does ``chart`` carry the connection to the flat one?

    Checks that transformed coefficients vanish on the grid and that traced
    characteristics map to straight lines with constant slope.
    """
    worst_coef = 0.0
    for p in zip(np.ravel(z1), np.ravel(z2)):
        worst_coef = max(worst_coef, max(abs(v) for v in transform_connection(conn, chart, p)))
    s_lo, s_hi = conn.box["t"]
    g0 = np.asarray(starts, dtype=float)
    tr = trace_characteristic(conn, s_lo, g0, np.zeros_like(g0), s_lo + 0.5 * (s_hi - s_lo), steps)
    tt, xx = chart(tr.t[:, None], tr.g)
    slope = transform_section(chart, tr.gdot, tr.t[:, None], tr.g)
    slope_dev = float(np.max(np.abs(slope - slope[0])))
    line_dev = float(np.max(np.abs(xx - xx[0] - slope[0] * (tt - tt[0]))))
    return {"max_transformed_coefficient": worst_coef, "slope_variation": slope_dev,
            "line_deviation": line_dev, "tol": tol,
            "pass": max(worst_coef, slope_dev, line_dev) <= tol}


def reduce_components(eq: GeneralEq, boxes, n: int = 9, n_samples: int = 12, tol: float = FIT_TOL,
                      initial=None) -> dict:
    """Run the pipeline on each box of a domain given as a union of boxes."""
    reports = []
    for box in boxes:
        gt = np.linspace(*box["t"], n)
        gx = np.linspace(*box["x"], n)
        ylo, yhi = box["y"]
        pad = 0.02 * (yhi - ylo)
        ys = np.linspace(ylo + pad, yhi - pad, n_samples)
        reports.append(reduction_pipeline(GeneralEq(eq.X1, eq.X2, eq.X3, box), gt, gx, ys,
                                          initial=initial, tol=tol))
    out = {"components": [r.to_dict() for r in reports],
           "reducible": all(r.reduction.reducible for r in reports),
           "pass": all(r.passed for r in reports)}
    swaps = {r.reduction.swapped for r in reports}
    if len(reports) > 1:
        out["global"] = ("reduction holds on each component separately; the components need "
                         "different index choices, so it is not possible globally with one chart"
                         if len(swaps) > 1 else
                         "reduction holds on each component separately; no global chart is certified")
    return out


__all__ = [
    "GeneralEq", "SymBil", "q_project", "q_complement", "coeffs_from_B", "B_from_coeffs", "cubic",
    "Connection2D", "flatness_residual", "ChartChange", "transform_tensor", "transform_connection",
    "transform_section", "Trace", "trace_characteristic", "FittedConnection", "ReductionReport",
    "reduction_test", "PipelineReport", "reduction_pipeline", "chart_check", "reduce_components",
]
