"""Array kernels with a numba path and a pure-numpy path.

Set ``PROJENTROPY_DISABLE_NUMBA=1`` to force the numpy implementations, or
leave it unset to use numba when it imports. Every kernel writes each output
element from a fixed-order loop, so results do not depend on the number of
worker threads.
"""
import os

import numpy as np

DISABLED = os.environ.get("PROJENTROPY_DISABLE_NUMBA", "").strip() not in ("", "0")

try:
    if DISABLED:
        raise ImportError("numba disabled by environment")
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func
        return wrap


# ---------------------------------------------------------------- row sums

def row_dot_numpy(vals, w):
    """Sum over the last axis of ``vals * w`` for 2-D inputs."""
    return np.einsum("ij,ij->i", vals, w)


@njit(parallel=True, cache=True)
def row_dot_numba(vals, w):
    p, n = vals.shape
    out = np.empty(p)
    for i in prange(p):
        s = 0.0
        for j in range(n):
            s += vals[i, j] * w[i, j]
        out[i] = s
    return out


# ------------------------------------------- cumulative spectral integrals

def cumulative_segments_numpy(f, mat, weights, half):
    """Indefinite integrals at nodes of consecutive Gauss segments.

    ``f`` has shape (P, S, n): integrand samples on S consecutive segments per
    point; ``mat`` is the (n, n) spectral integration matrix on [-1, 1],
    ``weights`` the Gauss weights and ``half`` (P, S) the half lengths.
    Returns ``cum`` (P, S, n) with the integral from the start of segment 0 to
    each node, and ``ends`` (P, S+1) with the integral up to each boundary.
    """
    local = np.einsum("jk,psk->psj", mat, f) * half[:, :, None]
    full = np.einsum("k,psk->ps", weights, f) * half
    ends = np.zeros((f.shape[0], f.shape[1] + 1))
    ends[:, 1:] = np.cumsum(full, axis=1)
    cum = local + ends[:, :-1, None]
    return cum, ends


@njit(parallel=True, cache=True)
def cumulative_segments_numba(f, mat, weights, half):
    p, s, n = f.shape
    cum = np.empty((p, s, n))
    ends = np.zeros((p, s + 1))
    for i in prange(p):
        acc = 0.0
        for k in range(s):
            h = half[i, k]
            for j in range(n):
                t = 0.0
                for m in range(n):
                    t += mat[j, m] * f[i, k, m]
                cum[i, k, j] = acc + t * h
            tot = 0.0
            for m in range(n):
                tot += weights[m] * f[i, k, m]
            acc += tot * h
            ends[i, k + 1] = acc
    return cum, ends


# ------------------------------------------------------------ cross ratios

def cross_ratio_terms_numpy(a, b, c, d):
    """Numerator and denominator of the cross-ratio for (N, 2) homogeneous rows."""
    def det(p, q):
        return p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]
    return det(a, c) * det(b, d), det(a, d) * det(b, c)


@njit(parallel=True, cache=True)
def cross_ratio_terms_numba(a, b, c, d):
    n = a.shape[0]
    num = np.empty(n)
    den = np.empty(n)
    for i in prange(n):
        ac = a[i, 0] * c[i, 1] - a[i, 1] * c[i, 0]
        bd = b[i, 0] * d[i, 1] - b[i, 1] * d[i, 0]
        ad = a[i, 0] * d[i, 1] - a[i, 1] * d[i, 0]
        bc = b[i, 0] * c[i, 1] - b[i, 1] * c[i, 0]
        num[i] = ac * bd
        den[i] = ad * bc
    return num, den


# ------------------------------------------------------- barycenter tables

def barycenter_table_numpy(x, m0, m1):
    """Chart barycenters B(x_i, x_j) from cumulative moments on a grid.

    ``m0[k]`` and ``m1[k]`` are the integrals of beta and x*beta from x_0 to
    x_k. The diagonal is the grid point itself.
    """
    d0 = m0[None, :] - m0[:, None]
    d1 = m1[None, :] - m1[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = d1 / d0
    idx = np.arange(len(x))
    out[idx, idx] = x
    return out


@njit(parallel=True, cache=True)
def barycenter_table_numba(x, m0, m1):
    n = x.shape[0]
    out = np.empty((n, n))
    for i in prange(n):
        for j in range(n):
            if i == j:
                out[i, j] = x[i]
            else:
                out[i, j] = (m1[j] - m1[i]) / (m0[j] - m0[i])
    return out


# --------------------------------------------------------------- dispatch

_WEIGHTS_CACHE = {}


def _weights_for(n):
    if n not in _WEIGHTS_CACHE:
        _WEIGHTS_CACHE[n] = np.polynomial.legendre.leggauss(n)[1]
    return _WEIGHTS_CACHE[n]


def row_dot(vals, w):
    vals = np.ascontiguousarray(vals, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if HAVE_NUMBA:
        return row_dot_numba(vals, w)
    return row_dot_numpy(vals, w)


def cumulative_segments(f, mat, half):
    n = mat.shape[0]
    weights = _weights_for(n)
    f = np.ascontiguousarray(f, dtype=float)
    half = np.ascontiguousarray(half, dtype=float)
    if HAVE_NUMBA:
        return cumulative_segments_numba(f, mat, weights, half)
    return cumulative_segments_numpy(f, mat, weights, half)


def cross_ratio_terms(a, b, c, d):
    args = [np.ascontiguousarray(np.atleast_2d(v), dtype=float) for v in (a, b, c, d)]
    if HAVE_NUMBA:
        return cross_ratio_terms_numba(*args)
    return cross_ratio_terms_numpy(*args)


def barycenter_table(x, m0, m1):
    args = [np.ascontiguousarray(v, dtype=float) for v in (x, m0, m1)]
    if HAVE_NUMBA:
        return barycenter_table_numba(*args)
    return barycenter_table_numpy(*args)
