"""Gauss-Legendre quadrature: fixed rules, adaptive bisection, batched intervals."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureFailure

DEFAULT_TOL = 1e-12
DEFAULT_DEPTH = 40
DEFAULT_ORDER = 20
_EPS = np.finfo(float).eps


@lru_cache(maxsize=None)
def gl_rule(n: int):
    """Nodes and weights of the n-point rule on [-1, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def spectral_integration_matrix(n: int) -> np.ndarray:
    """Matrix M with (M f)_j = integral from -1 to x_j of the interpolant of f.

    The interpolant is the degree n-1 polynomial through the Gauss nodes, so
    the result is exact for polynomials of degree below n.
    """
    x, _ = gl_rule(n)
    vander = np.polynomial.legendre.legvander(x, n - 1)
    # antiderivative of each Legendre basis polynomial, vanishing at -1
    anti = np.empty((n, n))
    for k in range(n):
        coef = np.zeros(n)
        coef[k] = 1.0
        ic = np.polynomial.legendre.legint(coef, lbnd=-1.0)
        anti[:, k] = np.polynomial.legendre.legval(x, ic)
    m = anti @ np.linalg.inv(vander)
    m.setflags(write=False)
    return m


def fixed(f, a: float, b: float, n: int = DEFAULT_ORDER):
    """Single-panel n-point rule; ``f`` maps an array of nodes to values."""
    x, w = gl_rule(n)
    half = 0.5 * (b - a)
    vals = np.asarray(f(0.5 * (a + b) + half * x), dtype=float)
    return half * (vals @ w)


def integrate(f, a: float, b: float, tol: float = DEFAULT_TOL,
              max_depth: int = DEFAULT_DEPTH, n: int = DEFAULT_ORDER):
    """Adaptive Gauss-Legendre by interval bisection.

    ``f`` must accept an array of nodes and return values with the nodes on
    the last axis, so vector-valued integrands are integrated jointly. A panel
    is accepted when its estimate agrees with the sum over its two halves to
    within ``tol`` times the square root of its relative length (or a few ulps
    of the value, whichever is larger). Raises QuadratureFailure when
    ``max_depth`` bisections do not suffice.
    """
    out = integrate_batch(lambda x, idx: f(x), np.array([a], float), np.array([b], float),
                          tol=tol, max_depth=max_depth, n=n)
    return out[..., 0] if np.ndim(out) > 1 else float(out[0])


def integrate_batch(f, a, b, tol: float = DEFAULT_TOL, max_depth: int = DEFAULT_DEPTH,
                    n: int = DEFAULT_ORDER):
    """Adaptively integrate over many intervals at once.

    ``f(x, owner)`` receives a flat array of nodes and the index of the
    interval each node belongs to and returns values shaped ``(len(x),)`` or
    ``(k, len(x))``. Returns an array shaped ``(P,)`` or ``(k, P)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    nint = a.size
    xg, wg = gl_rule(n)
    length = np.abs(b - a)
    length[length == 0] = 1.0

    def panel(lo, hi, owner):
        half = 0.5 * (hi - lo)
        x = (0.5 * (lo + hi))[:, None] + half[:, None] * xg[None, :]
        own = np.repeat(owner, n)
        vals = np.asarray(f(x.ravel(), own), dtype=float)
        vector = vals.ndim == 2
        vals = vals.reshape((vals.shape[0] if vector else 1, lo.size, n))
        return np.einsum("kpn,n->kp", vals, wg) * half[None, :], vector

    lo, hi, owner = a.copy(), b.copy(), np.arange(nint)
    coarse, vector = panel(lo, hi, owner)
    total = np.zeros((coarse.shape[0], nint))
    depth = 0
    while lo.size:
        mid = 0.5 * (lo + hi)
        left, _ = panel(lo, mid, owner)
        right, _ = panel(mid, hi, owner)
        fine = left + right
        err = np.max(np.abs(fine - coarse), axis=0)
        # sqrt share keeps bisection finite at integrable kinks
        share = tol * np.sqrt(np.abs(hi - lo) / length[owner])
        floor = 64.0 * _EPS * np.max(np.abs(fine), axis=0)
        ok = err <= np.maximum(share, floor)
        if depth >= max_depth and not ok.all():
            raise QuadratureFailure(
                f"tolerance {tol:g} not reached after {max_depth} bisections "
                f"(worst panel error {err[~ok].max():.3e})")
        for k in range(total.shape[0]):
            np.add.at(total[k], owner[ok], fine[k, ok])
        bad = ~ok
        lo, mid_b, hi, owner = lo[bad], mid[bad], hi[bad], owner[bad]
        lo = np.concatenate([lo, mid_b])
        hi = np.concatenate([mid_b, hi])
        owner = np.concatenate([owner, owner])
        coarse = np.concatenate([left[:, bad], right[:, bad]], axis=1)
        depth += 1
    return total if vector else total[0]


def breakpoints_panels(breaks, n: int = DEFAULT_ORDER):
    """Tensor nodes and weights over consecutive subintervals given by ``breaks``."""
    xg, wg = gl_rule(n)
    breaks = np.asarray(breaks, dtype=float)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    x = (0.5 * (lo + hi))[:, None] + half[:, None] * xg[None, :]
    w = half[:, None] * wg[None, :]
    return x.ravel(), w.ravel()
