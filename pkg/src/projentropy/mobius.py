"""Canonical entropy density on the plane minus a vanishing point, and an explicit
entropic solution of the Burgers direction field built from hyperbola arcs.

Conventions: points of the projective plane are homogeneous vectors (X, Y, W) and
the Euclidean chart is W = 1. Fiber directions over a finite point are tangent
vectors of that chart.

A scene is stored in a normalized frame where the vanishing point is the origin,
p1 and p2 are the directions of the axes and the solution is explicit. ``frame``
maps normalized coordinates to user coordinates. Verification works in user
coordinates only, through the generic density and projective primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .density import FiberDensity, barycenter, interval_vector
from .errors import (AtInfinity, AtVanishingPoint, ConstraintViolation, DegenerateTuple,
                     InShockSet, OutOfChart, SamplingTooCoarse)
from .exprcalc import as_expr, jet_eval
from .projgeom import EQ_TOL, HPoint1, HPoint2, PLine, cross_ratio, det2

RH_TOL = 1e-9
CLASSICAL_TOL = 1e-12
TANGENTIAL_TOL = 1e-12
ARC_SAMPLES = 128
REGION_SAMPLES = 256

ARCS = ("arc_q1_p1", "arc_q2_p2")
REGIONS = ("side_p2_q1", "side_q1_q2", "side_q2_p1")

# normalized pencil centers and flows of the three regions
_CENTER = {"side_p2_q1": (0.0, 1.0, 0.0), "side_q1_q2": (1.0, 0.0, 0.0),
           "side_q2_p1": (0.0, 1.0, 0.0)}
_FLOW = {"side_p2_q1": (0.0, 1.0), "side_q1_q2": (-1.0, 0.0), "side_q2_p1": (0.0, -1.0)}
_ARC_SIDES = {"arc_q1_p1": ("side_p2_q1", "side_q1_q2"),
              "arc_q2_p2": ("side_q1_q2", "side_q2_p1")}


def _hvec(p) -> np.ndarray:
    if isinstance(p, HPoint2):
        return np.array(p.coords)
    v = np.asarray(p, dtype=float).ravel()
    if v.size == 2:
        return np.array([v[0], v[1], 1.0])
    if v.size != 3 or not np.any(v):
        raise ValueError("expected an affine pair or a nonzero homogeneous triple")
    return v


def _dehom_derivative(v, dv):
    """Derivative of the affine image of v(s) in the direction dv."""
    return (dv[:2] * v[2] - v[:2] * dv[2]) / v[2] ** 2


# ------------------------------------------------------------ canonical density

@dataclass(frozen=True, eq=False)
class CanonicalDensity:
    """Density equal to 1 in the (angle, radius) charts around a vanishing point.

    ``frame`` has columns eps1, eps2, eps3, orthonormal for ``gram`` with eps1
    spanning the vanishing point. The sign of eps2 is fixed so that the angular
    direction turns counterclockwise around the vanishing point for omega = +1.
    """

    p_inf: HPoint2
    omega: int = 1
    gram: np.ndarray = field(default_factory=lambda: np.eye(3))
    frame: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.omega not in (1, -1):
            raise ValueError("omega must be +1 or -1")
        p = self.p_inf if isinstance(self.p_inf, HPoint2) else HPoint2(tuple(_hvec(self.p_inf)))
        object.__setattr__(self, "p_inf", p)
        if p.at_infinity:
            raise AtInfinity("the vanishing point must be finite in the working chart")
        g = np.array(self.gram, dtype=float).reshape(3, 3)
        if not np.allclose(g, g.T) or np.any(np.linalg.eigvalsh(g) <= 0):
            raise ValueError("gram must be symmetric positive definite")
        g.setflags(write=False)
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "frame", self._build_frame())

    def _dot(self, a, b):
        return float(a @ self.gram @ b)

    def _build_frame(self):
        e1 = np.array(self.p_inf.coords)
        e1 = e1 / math.sqrt(self._dot(e1, e1))
        rest = []
        for cand in sorted(np.eye(3), key=lambda u: abs(self._dot(u, e1))):
            for b in [e1] + rest:
                cand = cand - self._dot(cand, b) * b
            norm = math.sqrt(self._dot(cand, cand))
            if norm > 1e-8:
                rest.append(cand / norm)
            if len(rest) == 2:
                break
        frame = np.column_stack([e1, rest[0], rest[1]])
        # orientation: angular direction at theta = 0 must turn as omega says
        best = max((sg * frame[:, 0] + frame[:, 2] for sg in (1.0, -1.0)), key=lambda h: abs(h[2]))
        rel = best[:2] / best[2] - np.array(self.p_inf.affine())
        turn = rel[0] * _dehom_derivative(best, frame[:, 1])[1] - rel[1] * _dehom_derivative(best, frame[:, 1])[0]
        if np.sign(turn) != self.omega:
            frame[:, 1] *= -1.0
        frame.setflags(write=False)
        return frame

    def charts(self):
        """Frames of the two covering charts: (eps1, eps2, eps3) and (eps1, eps3, -eps2)."""
        f = self.frame
        return f, np.column_stack([f[:, 0], f[:, 2], -f[:, 1]])

    def frame_coords(self, q) -> np.ndarray:
        return self.frame.T @ self.gram @ _hvec(q)

    def chart_coords(self, q, chart: int):
        """(x, theta) of q in chart 1 or 2; OutOfChart off the chart domain."""
        c = self.frame_coords(q)
        if chart == 2:
            c = np.array([c[0], c[2], -c[1]])
        r = math.hypot(c[1], c[2])
        if r <= EQ_TOL * max(abs(c[0]), 1.0):
            raise AtVanishingPoint("point coincides with the vanishing point")
        if abs(c[2]) <= 1e-14 * r:
            raise OutOfChart(f"point is outside chart {chart}")
        lam = math.copysign(1.0, c[2]) / r
        return lam * c[0], math.atan2(lam * c[1], lam * c[2])

    def preferred_chart(self, q) -> int:
        c = self.frame_coords(q)
        return 1 if abs(c[2]) >= abs(c[1]) else 2

    def tangent_basis(self, q, chart: int = None) -> np.ndarray:
        """Rows e1 = d/dtheta and e2 = d/dx at the finite point q, in affine coordinates."""
        chart = chart or self.preferred_chart(q)
        x, th = self.chart_coords(q, chart)
        f = self.charts()[chart - 1]
        v = x * f[:, 0] + math.sin(th) * f[:, 1] + math.cos(th) * f[:, 2]
        if abs(v[2]) <= EQ_TOL * np.max(np.abs(v)):
            raise AtInfinity("base point lies on the line at infinity")
        d_theta = math.cos(th) * f[:, 1] - math.sin(th) * f[:, 2]
        return np.array([_dehom_derivative(v, d_theta), _dehom_derivative(v, f[:, 0])])


def canonical_fiber_density(cd: CanonicalDensity, q, chart: int = None) -> FiberDensity:
    """The density over the fiber at q: constant 1 in the basis (d/dtheta, d/dx)."""
    q = HPoint2(tuple(_hvec(q)))
    if q == cd.p_inf:
        raise AtVanishingPoint("no fiber density at the vanishing point")
    basis = cd.tangent_basis(q, chart)
    return FiberDensity.from_callable(np.ones_like, (-math.inf, math.inf), basis,
                                      label=f"canonical(omega={cd.omega})")


def arc_vector(fd: FiberDensity, a, b) -> np.ndarray:
    """Vector measure of the fiber arc between directions a and b that avoids the
    excluded direction, independent of the traversal sense.
    """
    s, t = sorted((fd.coordinate(a), fd.coordinate(b)))
    return interval_vector(fd, s, t)


def instantaneous_direction(cd: CanonicalDensity, q) -> HPoint1:
    return HPoint1(tuple(cd.tangent_basis(q)[1]))


# ------------------------------------------------------------ conic harmonic

def _pencil_coords(q: np.ndarray, line: np.ndarray) -> HPoint1:
    # coordinates of a line through q in an orthonormal basis of q-perp
    basis = np.linalg.svd(q.reshape(1, 3))[2][1:]
    return HPoint1(tuple(basis @ line))


def conic_through(p_inf, p1, p2, q) -> np.ndarray:
    """Symmetric matrix of the conic tangent to d(p_inf, p1) at p1 and to
    d(p_inf, p2) at p2 that passes through q.
    """
    p_inf, p1, p2, q = (_hvec(p) for p in (p_inf, p1, p2, q))
    l1, l2, m = np.cross(p_inf, p1), np.cross(p_inf, p2), np.cross(p1, p2)
    pair = 0.5 * (np.outer(l1, l2) + np.outer(l2, l1))
    mm = np.outer(m, m)
    den = float(q @ mm @ q)
    if abs(den) <= EQ_TOL * max(np.max(np.abs(mm)), 1.0):
        raise DegenerateTuple("q lies on the chord p1 p2")
    return pair - (float(q @ pair @ q) / den) * mm


def conic_harmonic_check(conic, p1, p2, q, p_inf=None) -> float:
    """|[tangent at q, d(q, p_inf), d(q, p1), d(q, p2)] + 1| in the pencil through q."""
    c = np.asarray(conic, dtype=float).reshape(3, 3)
    c = 0.5 * (c + c.T)
    p1, p2, q = (_hvec(p) for p in (p1, p2, q))
    for name, p in (("p1", p1), ("p2", p2)):
        if HPoint2(tuple(q)) == HPoint2(tuple(p)):
            raise DegenerateTuple(f"q coincides with {name}")
    scale = np.max(np.abs(c)) * np.dot(q, q)
    if abs(float(q @ c @ q)) > 1e-9 * scale:
        raise ConstraintViolation("q is not on the conic")
    if p_inf is None:
        p_inf = np.cross(c @ p1, c @ p2)
    p_inf = _hvec(p_inf)
    lines = [c @ q, np.cross(q, p_inf), np.cross(q, p1), np.cross(q, p2)]
    cr = cross_ratio(*(_pencil_coords(q, l) for l in lines))
    if cr.is_inf:
        return math.inf
    return abs(cr.value + 1.0)


# ------------------------------------------------------------------ scenes

def _affine_jacobian(m: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Jacobian of the affine action of m at the homogeneous point z."""
    w = m @ z
    return (m[:2, :2] * w[2] - np.outer(w[:2], m[2, :2])) / w[2] ** 2


def _standard_frame(p_inf, p1, p2, r) -> np.ndarray:
    """Matrix sending e3, e1, e2, (1,1,1) to p_inf, p1, p2, r."""
    base = np.column_stack([p1, p2, p_inf])
    try:
        lam = np.linalg.solve(base, r)
    except np.linalg.LinAlgError:
        raise ConstraintViolation("p_inf, p1, p2 are collinear") from None
    if np.any(np.abs(lam) <= 1e-12 * np.max(np.abs(lam))):
        raise ConstraintViolation("r is collinear with two of p_inf, p1, p2")
    return base * lam


_SWAP = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class MobiusScene:
    """Hyperbola arcs and pencil regions outside the quadrilateral p2 q1 q2 p1.

    Normalized data: r = (rx, ry), q1 = (rx, s), q2 = (-c, ry). Arc q1-p1 is
    xy = rx*s with x > rx; arc q2-p2 is xy = -c*ry with y > ry. ``flows``
    holds a sign per region (+1 is the declared orientation).
    """

    frame: np.ndarray
    rx: float
    ry: float
    s: float
    c: float
    omega: int
    variant: str
    flows: dict = field(default_factory=lambda: {k: 1 for k in REGIONS})
    swapped: bool = False

    def __post_init__(self):
        m = np.array(self.frame, dtype=float).reshape(3, 3)
        m = m / np.max(np.abs(m))
        m.setflags(write=False)
        object.__setattr__(self, "frame", m)
        object.__setattr__(self, "flows", {k: int(self.flows.get(k, 1)) for k in REGIONS})

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.frame)

    @property
    def levels(self) -> dict:
        return {"arc_q1_p1": self.rx * self.s, "arc_q2_p2": -self.c * self.ry}

    def normalized_points(self) -> dict:
        rx, ry = self.rx, self.ry
        return {"p_inf": (0.0, 0.0, 1.0), "p1": (1.0, 0.0, 0.0), "p2": (0.0, 1.0, 0.0),
                "r": (rx, ry, 1.0), "p1'": (rx, 0.0, 1.0), "p2'": (0.0, ry, 1.0),
                "q1": (rx, self.s, 1.0), "q2": (-self.c, ry, 1.0)}

    def label(self, name: str) -> str:
        """User-facing name of a normalized point, arc or region."""
        if not self.swapped:
            return name
        swap = {"p1": "p2", "p2": "p1", "q1": "q2", "q2": "q1", "p1'": "p2'", "p2'": "p1'"}
        return "_".join(swap.get(tok, tok) for tok in name.split("_"))

    def marked_points(self) -> dict:
        return {self.label(k): HPoint2(tuple(self.frame @ np.array(v)))
                for k, v in self.normalized_points().items()}

    def conic(self, arc: str) -> np.ndarray:
        """User-coordinate matrix of the hyperbola carrying ``arc``."""
        k = self.levels[arc]
        cn = np.array([[0.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, -k]])
        inv = self.inverse
        return inv.T @ cn @ inv

    def center(self, region: str) -> np.ndarray:
        return self.frame @ np.array(_CENTER[region])

    def with_flow(self, region: str, sign: int) -> "MobiusScene":
        flows = dict(self.flows)
        flows[region] = sign
        return replace(self, flows=flows)

    def transformed(self, matrix, omega_factor: int = None) -> "MobiusScene":
        """Image under the projective map ``matrix``; omega follows the local
        orientation of the map at the vanishing point unless given.
        """
        m = np.asarray(matrix, dtype=float).reshape(3, 3)
        if omega_factor is None:
            p = self.frame @ np.array([0.0, 0.0, 1.0])
            omega_factor = int(np.sign(np.linalg.det(_affine_jacobian(m, p))))
        return replace(self, frame=m @ self.frame, omega=self.omega * omega_factor)

    def density(self, gram=None) -> CanonicalDensity:
        p = self.marked_points()["p_inf"]
        return CanonicalDensity(p, self.omega, np.eye(3) if gram is None else gram)

    def summary(self) -> dict:
        pts = self.marked_points()
        return {
            "variant": self.variant,
            "omega": self.omega,
            "points": {k: list(v.coords) for k, v in pts.items()},
            "arcs": [{"name": self.label(a), "from": self.label(a.split("_")[1]),
                      "to": self.label(a.split("_")[2]), "conic": self.conic(a).tolist()} for a in ARCS],
            "regions": [{"name": self.label(r), "center": self.label("p2" if _CENTER[r][1] else "p1"),
                         "flow": "outward" if self._outward(r) else "inward",
                         "flow_sign": self.flows[r]} for r in REGIONS],
            "projective_arcs": len(ARCS),
            "projective_regions": len(REGIONS),
        }

    def _outward(self, region: str) -> bool:
        # the declared flow points away from its center at infinity
        cx, cy, _ = _CENTER[region]
        fx, fy = _FLOW[region]
        return (cx * fx + cy * fy) * self.flows[region] < 0


def _inside_triangle(p, a, b, c):
    pts = [_hvec(v) for v in (p, a, b, c)]
    if any(abs(v[2]) <= EQ_TOL * np.max(np.abs(v)) for v in pts):
        raise ConstraintViolation("finite variant needs p_inf, p1, p2, r at finite distance")
    p, a, b, c = (v[:2] / v[2] for v in pts)
    signs = [np.sign(det2(v - u, p - u)) for u, v in ((a, b), (b, c), (c, a))]
    if 0 in signs or len(set(signs)) != 1:
        raise ConstraintViolation("p_inf must lie inside the triangle p1 p2 r")


def build_scene(r=(1.0, 1.0), q1=None, q2=None, p_inf=(0.0, 0.0), p1=(1.0, 0.0, 0.0),
                p2=(0.0, 1.0, 0.0), variant: str = "axes", orientation: str = "direct") -> MobiusScene:
    """Build and validate a scene.

    ``variant`` "axes" requires p_inf at the origin and p1, p2 the axis
    directions; "finite" accepts any projective frame. ``orientation``
    "opposite" places q1 on (p2, p1') and q2 on (p2', r).
    """
    if variant not in ("axes", "finite"):
        raise ValueError(f"unknown variant {variant!r}")
    if orientation not in ("direct", "opposite"):
        raise ValueError(f"unknown orientation {orientation!r}")
    P, P1, P2, R = (_hvec(v) for v in (p_inf, p1, p2, r))
    if variant == "axes":
        ok = (HPoint2(tuple(P)) == HPoint2((0.0, 0.0, 1.0)) and HPoint2(tuple(P1)) == HPoint2((1.0, 0.0, 0.0))
              and HPoint2(tuple(P2)) == HPoint2((0.0, 1.0, 0.0)))
        if not ok:
            raise ConstraintViolation("axes variant needs p_inf at the origin and p1, p2 on the axes at infinity")
        if abs(R[2]) <= EQ_TOL or not (R[0] / R[2] > 0 and R[1] / R[2] > 0):
            raise ConstraintViolation("r must lie in the open first quadrant")
    frame = _standard_frame(P, P1, P2, R)
    if np.linalg.det(frame) == 0:
        raise ConstraintViolation("degenerate frame")
    if q1 is None or q2 is None:
        raise ConstraintViolation("q1 and q2 are required")
    Q1, Q2 = _hvec(q1), _hvec(q2)
    if variant == "finite":
        _inside_triangle(P, P1, P2, R)
    n1, n2 = np.linalg.solve(frame, Q1), np.linalg.solve(frame, Q2)
    for name, v in (("q1", n1), ("q2", n2)):
        if abs(v[2]) <= EQ_TOL * np.max(np.abs(v)):
            raise ConstraintViolation(f"{name} lies on the line through p1 and p2")
    n1, n2 = n1[:2] / n1[2], n2[:2] / n2[2]
    swapped = False
    if orientation == "direct":
        if abs(n1[0] - 1.0) > 1e-9 or not 0.0 < n1[1] < 1.0:
            raise ConstraintViolation("q1 must lie on the open segment (p1', r)")
        if abs(n2[1] - 1.0) > 1e-9 or not n2[0] < 0.0:
            raise ConstraintViolation("q2 must lie on d(r, p1) beyond p2' on the side away from r")
        rx, ry, s, c = 1.0, 1.0, float(n1[1]), float(-n2[0])
    else:
        if abs(n1[0] - 1.0) > 1e-9 or not n1[1] < 0.0:
            raise ConstraintViolation("q1 must lie on the open segment (p2, p1')")
        if abs(n2[1] - 1.0) > 1e-9 or not 0.0 < n2[0] < 1.0:
            raise ConstraintViolation("q2 must lie on the open segment (p2', r)")
        # reflect across the diagonal: roles of p1/p2 and q1/q2 exchange
        frame = frame @ _SWAP
        swapped = True
        rx, ry, s, c = 1.0, 1.0, float(n2[0]), float(-n1[1])
    p = frame @ np.array([0.0, 0.0, 1.0])
    if abs(p[2]) <= EQ_TOL * np.max(np.abs(p)):
        raise ConstraintViolation("p_inf must be a finite point")
    omega = int(np.sign(np.linalg.det(_affine_jacobian(frame, np.array([0.0, 0.0, 1.0])))))
    return MobiusScene(frame, rx, ry, s, c, omega, variant, swapped=swapped)


# ------------------------------------------------------------ evaluation

def _normalized(scene: MobiusScene, z) -> np.ndarray:
    zn = scene.inverse @ _hvec(z)
    if abs(zn[2]) <= EQ_TOL * np.max(np.abs(zn)):
        raise AtInfinity("point lies on the line p1 p2")
    return zn[:2] / zn[2]


def _locate_normalized(scene: MobiusScene, x: float, y: float, tol: float = 1e-12):
    """Region name, or ("arc", name), or None inside the closed quadrilateral."""
    k1, k2 = scene.levels["arc_q1_p1"], scene.levels["arc_q2_p2"]
    rx, ry = scene.rx, scene.ry
    if x > rx and abs(x * y - k1) <= tol * max(1.0, abs(k1), abs(x * y)):
        return ("arc", "arc_q1_p1")
    if y > ry and abs(x * y - k2) <= tol * max(1.0, abs(k2), abs(x * y)):
        return ("arc", "arc_q2_p2")
    # line q1 q2 through (rx, s) and (-c, ry)
    below = (y - scene.s) * (rx + scene.c) + (x - rx) * (ry - scene.s) <= 0
    if x <= rx and y <= ry and below:
        return None
    if x > rx and x * y < k1:
        return "side_p2_q1"
    if y > ry and x < 0 and x * y < k2:
        return "side_q2_p1"
    return "side_q1_q2"


def locate(scene: MobiusScene, z) -> str:
    """Region containing z; InShockSet on an arc, ConstraintViolation inside the quadrilateral."""
    x, y = _normalized(scene, z)
    where = _locate_normalized(scene, x, y)
    if where is None:
        raise ConstraintViolation("point lies in the closed quadrilateral p2 q1 q2 p1")
    if isinstance(where, tuple):
        raise InShockSet(_one_sided(scene, z, where[1]), f"point lies on {where[1]}")
    return where


def region_direction(scene: MobiusScene, region: str, z):
    """(direction, flow vector) of the region's pencil at the finite user point z."""
    zh = _hvec(z)
    if abs(zh[2]) <= EQ_TOL * np.max(np.abs(zh)):
        raise AtInfinity("evaluation point must be finite")
    zn = scene.inverse @ zh
    if abs(zn[2]) <= EQ_TOL * np.max(np.abs(zn)):
        raise AtInfinity("point lies on the line p1 p2")
    jac = _affine_jacobian(scene.frame, zn / zn[2])
    flow = scene.flows[region] * (jac @ np.array(_FLOW[region]))
    c = scene.center(region)
    along = c[:2] * zh[2] - zh[:2] * c[2]
    if not np.any(along):
        raise DegenerateTuple("point coincides with the pencil center")
    return HPoint1(tuple(along)), flow


def _one_sided(scene: MobiusScene, z, arc: str) -> dict:
    return {side: region_direction(scene, side, z)[0] for side in _ARC_SIDES[arc]}


def evaluate_solution(scene: MobiusScene, z) -> HPoint1:
    """Direction of the solution at z: the line of the region's pencil through z."""
    return region_direction(scene, locate(scene, z), z)[0]


def flow_vector(scene: MobiusScene, z) -> np.ndarray:
    return region_direction(scene, locate(scene, z), z)[1]


# ------------------------------------------------------------ sampling

def arc_samples(scene: MobiusScene, arc: str, n: int = ARC_SAMPLES) -> np.ndarray:
    """Finite user points on the open arc, as homogeneous rows."""
    tau = (np.arange(n) + 0.5) / n
    k = scene.levels[arc]
    if arc == "arc_q1_p1":
        x = scene.rx / tau
        pts = np.column_stack([x, k / x, np.ones(n)])
    else:
        y = scene.ry / tau
        pts = np.column_stack([k / y, y, np.ones(n)])
    out = pts @ scene.frame.T
    keep = np.abs(out[:, 2]) > 1e-9 * np.max(np.abs(out), axis=1)
    return out[keep] / out[keep, 2:3]


def region_samples(scene: MobiusScene, region: str, n: int = REGION_SAMPLES, seed: int = 0) -> np.ndarray:
    """Deterministic finite user points inside a region, as homogeneous rows."""
    rng = np.random.default_rng(seed + REGIONS.index(region))
    found = []
    span = 6.0 * max(scene.rx, scene.ry, scene.c, 1.0)
    while len(found) < n:
        cand = rng.uniform(-span, span, size=(4 * n, 2))
        for x, y in cand:
            if _locate_normalized(scene, x, y, tol=1e-6) == region:
                h = scene.frame @ np.array([x, y, 1.0])
                if abs(h[2]) > 1e-6 * np.max(np.abs(h)):
                    found.append(h / h[2])
            if len(found) == n:
                break
    return np.array(found)


# ------------------------------------------------------------ verification

def _oriented(fd: FiberDensity, d: HPoint1) -> np.ndarray:
    """Characteristic vector of direction d oriented by the sign of the density."""
    s = fd.coordinate(d)
    vec = fd.basis[0] + s * fd.basis[1]
    return float(np.sign(fd(s))) * vec


def _unit(v):
    return v / np.linalg.norm(v)


def _check_arc(scene: MobiusScene, cd: CanonicalDensity, arc: str, n: int, tol: float) -> dict:
    conic = scene.conic(arc)
    pts = arc_samples(scene, arc, n)
    worst_rh = 0.0
    mismatches = 0
    enter = {"plus": math.inf, "minus": math.inf}
    tangential = 0
    violations = 0
    for z in pts:
        grad = _unit(2.0 * (conic @ z)[:2])
        step = 1e-6 * max(1.0, float(np.linalg.norm(z[:2])))
        side = {}
        for tag, sgn in (("plus", 1.0), ("minus", -1.0)):
            zz = np.append(z[:2] + sgn * step * grad, 1.0)
            side[tag] = _locate_normalized(scene, *_normalized(scene, zz), tol=0.0)
        if side["plus"] == side["minus"] or None in side.values():
            violations += 1
            continue
        fd = canonical_fiber_density(cd, z)
        dirs = {tag: region_direction(scene, side[tag], z) for tag in side}
        # Rankine-Hugoniot: the density barycenter of the jump is tangent to the arc
        vec = arc_vector(fd, dirs["plus"][0], dirs["minus"][0])
        worst_rh = max(worst_rh, abs(float(grad @ vec)) / float(np.linalg.norm(vec)))
        bary = barycenter(fd, *sorted((fd.coordinate(dirs["plus"][0]), fd.coordinate(dirs["minus"][0]))))
        worst_rh = max(worst_rh, abs(float(grad @ _unit(bary.vector()))))
        for tag, sgn in (("plus", -1.0), ("minus", 1.0)):
            char = _unit(_oriented(fd, dirs[tag][0]))
            flow = _unit(dirs[tag][1])
            if float(char @ flow) <= 0:
                mismatches += 1
            margin = sgn * float(grad @ char)
            if abs(margin) <= TANGENTIAL_TOL:
                tangential += 1
            enter[tag] = min(enter[tag], margin)
    ok_rh = worst_rh < tol
    ok_enter = enter["plus"] >= -TANGENTIAL_TOL and enter["minus"] >= -TANGENTIAL_TOL
    ok_orient = mismatches == 0
    return {
        "name": scene.label(arc),
        "samples": int(len(pts)),
        "rankine_hugoniot": float(worst_rh),
        "rankine_hugoniot_pass": bool(ok_rh),
        "entering_plus_margin": float(enter["plus"]),
        "entering_minus_margin": float(enter["minus"]),
        "entering_pass": bool(ok_enter),
        "orientation_mismatches": int(mismatches),
        "tangential": int(tangential),
        "side_violations": int(violations),
        "pass": bool(ok_rh and ok_enter and ok_orient and violations == 0),
    }


def _slope_exprs(center: np.ndarray):
    c0, c1, c2 = (repr(float(v)) for v in center)
    u = as_expr(f"({c1} - {c2}*x)/({c0} - {c2}*t)")
    v = as_expr(f"({c0} - {c2}*t)/({c1} - {c2}*x)")
    return u, v


def _classical_residual(center: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Relative Burgers residual of the pencil slope field, in whichever of the
    (t, x) or (x, t) charts keeps the slope finite.
    """
    t, x = pts[:, 0], pts[:, 1]
    d0, d1 = center[0] - center[2] * t, center[1] - center[2] * x
    swap = np.abs(d0) < np.abs(d1)
    out = np.zeros(len(pts))
    u_expr, v_expr = _slope_exprs(center)
    for mask, expr, seeds in ((~swap, u_expr, {"t": 0, "x": 1}), (swap, v_expr, {"x": 0, "t": 1})):
        if not mask.any():
            continue
        j = jet_eval(expr, {"t": t[mask], "x": x[mask]}, seeds, 2, order=1)
        val = np.broadcast_to(j.val, t[mask].shape)
        g0 = np.broadcast_to(j.grad[0], val.shape)
        g1 = np.broadcast_to(j.grad[1], val.shape)
        scale = np.abs(g0) + np.abs(val * g1) + 1e-300
        out[mask] = np.abs(g0 + val * g1) / np.maximum(scale, 1.0)
    return out


def _check_region(scene: MobiusScene, cd: CanonicalDensity, region: str, n: int, seed: int) -> dict:
    pts = region_samples(scene, region, n, seed)
    center = scene.center(region)
    classical = _classical_residual(center, pts)
    located = sum(locate(scene, z) == region for z in pts)
    orient_bad = 0
    parallel = 0.0
    for z in pts:
        d, flow = region_direction(scene, region, z)
        parallel = max(parallel, abs(det2(_unit(d.vector()), _unit(flow))))
        fd = canonical_fiber_density(cd, z)
        if float(_oriented(fd, d) @ flow) <= 0:
            orient_bad += 1
    ok = classical.max() <= CLASSICAL_TOL and parallel <= 1e-12 and orient_bad == 0 and located == len(pts)
    return {
        "name": scene.label(region),
        "samples": int(len(pts)),
        "center": list(HPoint2(tuple(center)).coords),
        "classical_residual": float(classical.max()),
        "flow_along_pencil": float(parallel),
        "orientation_mismatches": int(orient_bad),
        "pass": bool(ok),
    }


def verify_scene(scene: MobiusScene, density: CanonicalDensity = None, arc_samples_n: int = ARC_SAMPLES,
                 region_samples_n: int = REGION_SAMPLES, tol: float = RH_TOL, seed: int = 0) -> dict:
    """Check the shock conditions on every arc and the classical equation and
    density orientation in every region.
    """
    cd = density or scene.density()
    arcs = [_check_arc(scene, cd, a, arc_samples_n, tol) for a in ARCS]
    regions = [_check_region(scene, cd, r, region_samples_n, seed) for r in REGIONS]
    return {
        "omega": cd.omega,
        "arcs": arcs,
        "regions": regions,
        "failed_arcs": [a["name"] for a in arcs if not a["pass"]],
        "failed_regions": [r["name"] for r in regions if not r["pass"]],
        "max_rankine_hugoniot": max(a["rankine_hugoniot"] for a in arcs),
        "max_classical_residual": max(r["classical_residual"] for r in regions),
        "pass": all(a["pass"] for a in arcs) and all(r["pass"] for r in regions),
    }


# ------------------------------------------------------------ holonomy

def line_loop(line, n: int = 256, turns: int = 1) -> np.ndarray:
    """Closed loop traversing a projective line ``turns`` times."""
    l = np.asarray(line.covector if isinstance(line, PLine) else line, dtype=float)
    basis = np.linalg.svd(l.reshape(1, 3))[2][1:]
    ang = np.pi * turns * np.arange(n + 1) / n
    return np.cos(ang)[:, None] * basis[0] + np.sin(ang)[:, None] * basis[1]


def circle_loop(center, radius: float, n: int = 256, turns: int = 1) -> np.ndarray:
    ang = 2 * np.pi * turns * np.arange(n + 1) / n
    cx, cy = center
    return np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang), np.ones(n + 1)])


def orientation_holonomy(cd: CanonicalDensity, loop, switch_ratio: float = 0.5,
                         max_step: float = 0.5) -> int:
    """Sign picked up by the fiber-chart orientation transported along a closed loop.

    The transport stays in one chart while it is comfortably valid and crosses
    to the other through the gluing, where the x coordinate is kept on U+ and
    reversed on U-. Consecutive samples must be close in the current chart.
    """
    pts = [_hvec(p) for p in loop]
    if len(pts) < 3:
        raise SamplingTooCoarse("a loop needs at least three samples")
    if HPoint2(tuple(pts[0])) != HPoint2(tuple(pts[-1])):
        raise ValueError("loop must be closed")

    def ratio(p, chart):
        c = cd.frame_coords(p)
        if chart == 2:
            c = np.array([c[0], c[2], -c[1]])
        r = math.hypot(c[1], c[2])
        if r <= EQ_TOL * max(abs(c[0]), 1.0):
            raise AtVanishingPoint("loop passes through the vanishing point")
        return abs(c[2]) / r

    def switch(p, frm):
        x, th = cd.chart_coords(p, frm)
        x2, th2 = cd.chart_coords(p, 3 - frm)
        delta = (th2 - th) if frm == 1 else (th - th2)
        return 1 if math.cos(delta - math.pi / 2) > 0 else -1

    sign = 1
    start = chart = 1 if ratio(pts[0], 1) >= ratio(pts[0], 2) else 2
    prev = cd.chart_coords(pts[0], chart)
    for p in pts[1:]:
        if ratio(p, chart) < switch_ratio:
            sign *= switch(p, chart)
            chart = 3 - chart
            prev = None
        try:
            cur = cd.chart_coords(p, chart)
        except OutOfChart:
            raise SamplingTooCoarse("consecutive samples leave a common chart") from None
        if prev is not None and abs(cur[1] - prev[1]) > max_step:
            raise SamplingTooCoarse("angular step between samples is too large")
        prev = cur
    if chart != start:
        sign *= switch(pts[-1], chart)
    return sign


__all__ = [
    "ARCS", "REGIONS", "CanonicalDensity", "canonical_fiber_density", "arc_vector",
    "instantaneous_direction", "conic_through", "conic_harmonic_check", "MobiusScene",
    "build_scene", "locate", "region_direction", "evaluate_solution", "flow_vector",
    "arc_samples", "region_samples", "verify_scene", "line_loop", "circle_loop",
    "orientation_holonomy",
]
