"""Independent reference computations shared by the test modules."""

import numpy as np

from projentropy import projgeom as pg


def burgers_implicit(t, x, amp=0.5, shift=0.1, iters=60):
    """Classical Burgers solution u = u0(x - u t) with u0 = amp*sin + shift (valid while amp*t < 1)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    u = amp * np.sin(x) + shift
    for _ in range(iters):
        s = x - u * t
        f = u - amp * np.sin(s) - shift
        u = u - f / (1.0 + amp * np.cos(s) * t)
    return u


def random_projmap(rng, scale=0.25):
    return np.eye(3) + scale * rng.normal(size=(3, 3))


def pushed_solution(m, u):
    """Image solution of the lifted map: value at an image point via its preimage."""
    lifted = pg.lift_projmap(m)
    inv = pg.ProjMap2(m).inverse()

    def u_img(tt, xx):
        t, x = inv.affine(tt, xx)
        return pg.apply_lift(lifted, t, x, u(t, x))[2]

    return u_img


def burgers_residual_fd(u, t, x, h=1e-4):
    """|u_t + u u_x| by centered differences."""
    ut = (u(t + h, x) - u(t - h, x)) / (2 * h)
    ux = (u(t, x + h) - u(t, x - h)) / (2 * h)
    return np.abs(ut + u(t, x) * ux)


def affine_slope_image(m, t, x, v):
    """Slope of the image of the direction (1, v) at (t, x) under the plane map of m."""
    w = m @ np.array([t, x, 1.0])
    jac = (m[:2, :2] * w[2] - np.outer(w[:2], m[2, :2])) / w[2] ** 2
    d = jac @ np.array([1.0, v])
    return d[1] / d[0]
