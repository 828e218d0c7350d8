"""Command-line front end: read a JSON problem, run checks, write a JSON report.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for input errors.
Reports are deterministic for fixed input, flags and seed; wall time goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import density as dn
from . import kruzhkov as kz
from . import mobius as mb
from . import projgeom as pg
from . import projstruct as ps
from .errors import NotInKernel, NotProjective, ProjEntropyError, ZeroMass
from .exprcalc import ExprSyntaxError, as_expr, evaluate


class InputError(Exception):
    """Malformed problem file or arguments (exit code 2)."""


# ------------------------------------------------------------------ output

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (pg.HPoint1, pg.HPoint2)):
        return list(obj.coords)
    if isinstance(obj, pg.ExtReal):
        return {"num": obj.num, "den": obj.den, "value": obj.value if not obj.is_inf else "inf"}
    return obj


def check(name: str, tag: str, value, ok: bool, margin=None) -> dict:
    """One report line; ``tag`` names the identity or inequality being checked."""
    return {"name": name, "tag": tag, "value": value, "margin": margin, "pass": bool(ok)}


class Ctx:
    def __init__(self, args, problem):
        self.args = args
        self.problem = problem
        self.csv_dir = Path(args.csv) if args.csv else None

    def tol(self, default: float) -> float:
        return self.args.tol if self.args.tol is not None else default

    def grid(self, default: int) -> int:
        return self.args.grid if self.args.grid is not None else default

    def write_csv(self, name: str, header, rows):
        if self.csv_dir is None:
            return
        self.csv_dir.mkdir(parents=True, exist_ok=True)
        with open(self.csv_dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ------------------------------------------------------------------ parsing

def _need(d: dict, key: str):
    if key not in d:
        raise InputError(f"missing field {key!r}")
    return d[key]


def _grid(spec, default_n: int = 9) -> np.ndarray:
    if isinstance(spec, dict):
        n = int(spec.get("n", default_n))
        return np.linspace(float(_need(spec, "min")), float(_need(spec, "max")), n)
    arr = np.asarray(spec, dtype=float).ravel()
    if arr.size == 0:
        raise InputError("empty grid")
    return arr


def _box(d, keys=("t", "x", "y")) -> dict:
    box = {}
    for k in keys:
        if k in d:
            lo, hi = (float(v) for v in d[k])
            if not lo < hi:
                raise InputError(f"empty range for {k}")
            box[k] = (lo, hi)
    return box


def _point1(v) -> pg.HPoint1:
    if v == "inf" or v is None:
        return pg.HPoint1.infinity()
    if isinstance(v, (int, float)):
        return pg.HPoint1.from_affine(float(v))
    return pg.HPoint1(tuple(float(c) for c in v))


def _equation(p: dict) -> kz.QuasiEq:
    box = _box(p.get("box", {}))
    full = {"t": (-10.0, 10.0), "x": (-10.0, 10.0), "y": (-10.0, 10.0)}
    full.update(box)
    return kz.QuasiEq(str(_need(p, "X1")), str(_need(p, "X2")), str(p.get("X3", "0")), full)


def _section(s):
    if isinstance(s, (int, float)):
        return kz.constant_section(float(s))
    if isinstance(s, str):
        return kz.ExprSection(s)
    if "constant" in s:
        return kz.constant_section(float(s["constant"]))
    if "level" in s:
        return kz.PiecewiseSolution(s["level"], _need(s, "minus"), _need(s, "plus"))
    return kz.ExprSection(_need(s, "expr"))


def _test_function(s: dict):
    if "bump" in s:
        b = s["bump"]
        return kz.BumpDensity(tuple(_need(b, "center")), tuple(_need(b, "halfwidth")), float(b.get("scale", 1.0)))
    return kz.ExprDensity(_need(s, "expr"), [tuple(v) for v in _need(s, "box")], bool(s.get("nonnegative", False)))


def _density(p: dict) -> dn.FiberDensity:
    basis = p.get("basis")
    if "grid" in p:
        g = p["grid"]
        return dn.FiberDensity.from_grid(_need(g, "x"), _need(g, "values"), basis)
    interval = [float(v) if not isinstance(v, str) else float(v.replace("inf", "Infinity"))
                for v in _need(p, "interval")]
    return dn.FiberDensity.from_expr(str(_need(p, "beta")), interval, basis, var=p.get("var", "x"),
                                     covers_circle=bool(p.get("covers_circle", False)))


def _bmap(p: dict) -> dn.BarycentricMap:
    if "beta" in p or "grid" in p:
        return dn.BarycentricMap.from_density(_density(p))
    if p.get("map") == "midpoint":
        return dn.midpoint_map(_need(p, "interval"))
    return dn.BarycentricMap.from_expr(str(_need(p, "map")), _need(p, "interval"), p.get("basis"),
                                       tuple(p.get("vars", ("p", "q"))))


def _connection(p: dict) -> ps.Connection2D:
    box = _box(p.get("box", {}), ("t", "x"))
    return ps.Connection2D(*(str(p.get(k, "0")) for k in "abcd"), box)


def _chart(p: dict) -> ps.ChartChange:
    box = _box(p.get("box", {}), ("t", "x"))
    if "matrix" in p:
        return ps.ChartChange.projective(np.asarray(p["matrix"], dtype=float), box)
    return ps.ChartChange(str(_need(p, "tau")), str(_need(p, "xi")), box)


def _points2(spec) -> np.ndarray:
    if isinstance(spec, dict):
        t = _grid(_need(spec, "t"))
        x = _grid(_need(spec, "x"))
        T, X = np.meshgrid(t, x, indexing="ij")
        return np.column_stack([T.ravel(), X.ravel()])
    pts = np.asarray(spec, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError("points must be a list of [t, x] pairs")
    return pts


_SCENE_KEYS = ("r", "q1", "q2", "p_inf", "p1", "p2", "variant", "orientation")


def _scene(p: dict) -> mb.MobiusScene:
    kw = {k: p[k] for k in _SCENE_KEYS if k in p}
    for k in ("r", "q1", "q2", "p_inf", "p1", "p2"):
        if k in kw:
            kw[k] = tuple(float(v) for v in kw[k])
    scene = mb.build_scene(**kw)
    for region in p.get("reverse_flows", []):
        if region not in mb.REGIONS:
            raise InputError(f"unknown region {region!r}; expected one of {list(mb.REGIONS)}")
        scene = scene.with_flow(region, -scene.flows[region])
    return scene


# ------------------------------------------------------------------ projgeom

def cmd_crossratio(ctx: Ctx) -> dict:
    p = ctx.problem
    pts = [_point1(v) for v in _need(p, "points")]
    if len(pts) != 4:
        raise InputError("crossratio needs four points")
    cr = pg.cross_ratio(*pts)
    rng = np.random.default_rng(ctx.args.seed)
    trials = ctx.grid(20)
    worst = 0.0
    for _ in range(trials):
        m = rng.normal(size=(2, 2))
        while abs(np.linalg.det(m)) < 0.1:
            m = rng.normal(size=(2, 2))
        img = pg.cross_ratio(*(pg.HPoint1(tuple(m @ np.array(q.coords))) for q in pts))
        if cr.is_inf or img.is_inf:
            dev = 0.0 if cr.is_inf == img.is_inf else math.inf
        else:
            dev = abs(img.value - cr.value) / max(1.0, abs(cr.value))
        worst = max(worst, dev)
    tol = ctx.tol(1e-12)
    return {"result": {"cross_ratio": cr},
            "checks": [check("projective_invariance", "cross-ratio invariance", worst, worst <= tol, tol - worst)]}


def cmd_harmonic(ctx: Ctx) -> dict:
    p = ctx.problem
    a, x, y = (_point1(_need(p, k)) for k in ("p", "x", "y"))
    h = pg.harmonic_conjugate(a, x, y)
    cr = pg.cross_ratio(h, a, x, y)
    dev = math.inf if cr.is_inf else abs(cr.value + 1.0)
    tol = ctx.tol(1e-12)
    return {"result": {"conjugate": h, "cross_ratio": cr},
            "checks": [check("harmonic_cross_ratio", "cross-ratio equals -1", dev, dev <= tol, tol - dev)]}


def cmd_lift(ctx: Ctx) -> dict:
    p = ctx.problem
    m = np.asarray(_need(p, "matrix"), dtype=float).reshape(3, 3)
    lifted = pg.lift_projmap(m)
    pts = np.asarray(_need(p, "points"), dtype=float).reshape(-1, 3)
    t, x, v = pts.T
    tt, xx, vv = pg.apply_lift(lifted, t, x, v)
    # oracle: push the tangent (1, v) through the Jacobian of the affine action
    worst = 0.0
    s = pg.ProjMap2(m)
    for ti, xi, vi, vo in zip(t, x, v, vv):
        w = m @ np.array([ti, xi, 1.0])
        jac = (m[:2, :2] * w[2] - np.outer(w[:2], m[2, :2])) / w[2] ** 2
        d = jac @ np.array([1.0, vi])
        pred = d[1] / d[0] if d[0] != 0 else math.inf
        worst = max(worst, abs(pred - vo) / (1.0 + abs(pred)))
    rng = np.random.default_rng(ctx.args.seed)
    other = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    comp = pg.lift_projmap(m @ other)
    inner = pg.lift_projmap(other)
    a = pg.apply_lift(comp, t, x, v)
    b = pg.apply_lift(lifted, *pg.apply_lift(inner, t, x, v))
    func = float(max(np.max(np.abs(np.asarray(a[i]) - np.asarray(b[i])) / (1 + np.abs(np.asarray(a[i]))))
                     for i in range(3)))
    pos = np.max(np.abs(np.column_stack(s.affine(t, x)) - np.column_stack([tt, xx])))
    tol = ctx.tol(1e-10)
    rows = np.column_stack([t, x, v, tt, xx, vv])
    ctx.write_csv("lift.csv", ["t", "x", "v", "t_img", "x_img", "v_img"], rows)
    return {"result": {"images": rows},
            "checks": [check("base_point_image", "lift covers the plane map", float(pos), pos <= tol),
                       check("slope_matches_jacobian", "lift of a slope", worst, worst <= tol),
                       check("functoriality", "lift(S1 S2) = lift(S1) lift(S2)", func, func <= tol)]}


def cmd_jet_test(ctx: Ctx) -> dict:
    p = ctx.problem
    comps = [str(c) for c in _need(p, "components")]
    variables = p.get("variables")
    z = np.asarray(_need(p, "point"), dtype=float)
    tol = ctx.tol(1e-8)
    try:
        res = pg.projective_jet_test(comps, z, variables, tol)
        return {"result": {"projective": True, "xi": res.xi, "trace_residual": res.residual,
                           "sample_residual": res.sample_residual},
                "checks": [check("projective_jet", "second jet has projective form", res.residual, True)]}
    except NotProjective as e:
        return {"result": {"projective": False, "reason": str(e)},
                "checks": [check("projective_jet", "second jet has projective form", e.residual, False)]}


# ------------------------------------------------------------------ density

def cmd_barycenter(ctx: Ctx) -> dict:
    p = ctx.problem
    fd = _density(p)
    pairs = np.asarray(_need(p, "pairs"), dtype=float).reshape(-1, 2)
    out, inside = [], True
    for a, b in pairs:
        try:
            bc = dn.barycenter(fd, float(a), float(b))
        except ZeroMass:
            out.append({"pair": [a, b], "barycenter": None, "chart": None})
            inside = False
            continue
        try:
            c = fd.coordinate(bc)
        except ProjEntropyError:
            c = math.inf
        inside = inside and (a == b or min(a, b) < c < max(a, b))
        out.append({"pair": [a, b], "barycenter": bc, "chart": c})
    return {"result": {"barycenters": out},
            "checks": [check("barycenter_inside", "barycenter lies in the open arc", None, inside)]}


def cmd_nine_check(ctx: Ctx) -> dict:
    fd = _density(ctx.problem)
    r = dn.check_nine_assertions(fd, n=ctx.grid(24))
    if r["rejected"]:
        return {"result": r, "checks": [check("domain", "proper subinterval", None, False)]}
    keys = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix")
    checks = [check(f"assertion_{k}", "positivity characterization", r[k], r[k]) for k in keys]
    checks.append(check("equivalence", "all nine agree", r["consistent"], r["consistent"]))
    return {"result": r, "checks": checks}


def cmd_axioms_check(ctx: Ctx) -> dict:
    bmap = _bmap(ctx.problem)
    r = dn.check_axioms(bmap, n=ctx.grid(9), seed=ctx.args.seed, tol=ctx.tol(1e-8))
    keys = ("H1", "H2", "H3", "H4", "H5", "H6", "H7", "C2", "C4", "C6")
    checks = [check(k, "barycentric map axiom" if k[0] == "H" else "barycentric map consequence", r[k], bool(r[k]))
              for k in keys]
    return {"result": r, "checks": checks}


def cmd_reconstruct(ctx: Ctx) -> dict:
    """Rebuild a density from a barycentric map and compare it with the reference.

    The reference is the generating density, the optional "expected"
    expression, or a constant for maps given directly.
    """
    p = ctx.problem
    bmap = _bmap(p)
    lo, hi = bmap.interval
    n = ctx.grid(200)
    grid = np.linspace(lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo), n)
    a = p.get("anchor", {})
    u0 = float(a.get("u0", lo + 0.25 * (hi - lo)))
    v0 = float(a.get("v0", lo + 0.75 * (hi - lo)))
    q = a.get("q", "inf")
    anchor = dn.ReconstructionAnchor(_point1(q) if q != "inf" else pg.HPoint1(tuple(bmap.basis[1])),
                                     u0, v0, bmap.point(u0, v0).coords)
    rec = dn.reconstruct_density(bmap, anchor, grid)
    if "beta" in p or "grid" in p:
        truth = _density(p)(grid)
    elif "expected" in p:
        truth = np.broadcast_to(evaluate(as_expr(str(p["expected"])), {"x": grid}), grid.shape)
    else:
        truth = np.ones_like(grid)
    got = rec(grid)
    ratio = got / truth
    factor = float(np.median(ratio))
    dev = float(np.max(np.abs(ratio / factor - 1.0)))
    tol = ctx.tol(1e-4)
    ctx.write_csv("reconstruct.csv", ["x", "beta", "reconstructed"], np.column_stack([grid, truth, got]))
    return {"result": {"factor": factor, "max_relative_deviation": dev, "grid": n},
            "checks": [check("round_trip", "density recovered up to a constant", dev, dev <= tol, tol - dev)]}


# ------------------------------------------------------------------ kruzhkov

def cmd_kruzhkov_i(ctx: Ctx) -> dict:
    p = ctx.problem
    eq = _equation(p)
    sigma = _section(_need(p, "solution"))
    psi = _test_function(_need(p, "test"))
    val = kz.I_functional(eq, sigma, psi)
    tol = ctx.tol(1e-8)
    nonneg = getattr(psi, "nonnegative", False)
    if sigma.lipschitz and p.get("classical", True):
        ok, tag = abs(val) <= tol, "vanishes on classical solutions"
    else:
        ok, tag = (val >= -tol) if nonneg else True, "nonnegative on nonnegative tests"
    return {"result": {"I": val, "nonnegative_test": nonneg},
            "checks": [check("entropy_inequality", tag, val, ok, val + tol)]}


def _pair_inputs(p):
    eq = _equation(p)
    return eq, _section(_need(p, "solution")), _section(_need(p, "other")), _test_function(_need(p, "test"))


def cmd_kruzhkov_j(ctx: Ctx) -> dict:
    eq, s, t, z = _pair_inputs(ctx.problem)
    val = kz.J_functional(eq, s, t, z)
    both = s.lipschitz and t.lipschitz
    res = kz.identity_residual(eq, s, t, z) if both else None
    tol = ctx.tol(1e-8)
    checks = []
    if res is not None:
        checks.append(check("pair_identity", "J(s,t) + J(t,s) = C(s,t)", res, abs(res) <= tol))
    else:
        checks.append(check("evaluated", "J functional", val, math.isfinite(val)))
    return {"result": {"J": val, "identity_residual": res}, "checks": checks}


def cmd_kruzhkov_c(ctx: Ctx) -> dict:
    eq, s, t, z = _pair_inputs(ctx.problem)
    val = kz.C_functional(eq, s, t, z)
    tol = ctx.tol(1e-8)
    if ctx.problem.get("entropic", False) and getattr(z, "nonnegative", False):
        return {"result": {"C": val}, "checks": [check("contraction_sign", "C >= 0 on entropic pairs", val, val >= -tol)]}
    return {"result": {"C": val}, "checks": [check("evaluated", "C functional", val, math.isfinite(val))]}


def cmd_disintegrate(ctx: Ctx) -> dict:
    p = ctx.problem
    eq = _equation(p)
    sigma = _section(_need(p, "solution"))
    zeta = _test_function(_need(p, "test"))
    lhs, rhs, diff = kz.disintegration_check(eq, sigma, zeta, float(_need(p, "l_center")), float(_need(p, "l_halfwidth")))
    rel = abs(diff) / max(abs(lhs), abs(rhs), 1e-300)
    tol = ctx.tol(1e-6)
    ok = rel <= tol or abs(diff) <= 1e-12
    return {"result": {"lhs": lhs, "rhs": rhs, "relative_difference": rel},
            "checks": [check("disintegration", "I(l zeta) = integral of J(kappa(y)) l(y) dy", rel, ok, tol - rel)]}


def cmd_shock_check(ctx: Ctx) -> dict:
    p = ctx.problem
    eq = _equation(p)
    sol = _section(_need(p, "solution"))
    if not isinstance(sol, kz.PiecewiseSolution):
        raise InputError("shock-check needs a piecewise solution with level, minus, plus")
    r = kz.shock_check(eq, sol, tuple(_need(p, "t_range")), tuple(_need(p, "x_range")), n=ctx.grid(16),
                       tol=ctx.tol(1e-10))
    reps = r["reports"]
    worst = min(reps, key=lambda q: q["jump_inequality"]["worst_margin"]) if reps else None
    checks = [
        check("shock_found", "shock curve sampled", r["points"], r["points"] > 0),
        check("rankine_hugoniot", "jump condition", r["worst_rh"], all(q["rankine_hugoniot"]["pass"] for q in reps)),
        check("entering_plus", "characteristics enter from the plus side", r["worst_entering_plus"],
              all(q["entering_plus"]["pass"] for q in reps)),
        check("entering_minus", "characteristics enter from the minus side", r["worst_entering_minus"],
              all(q["entering_minus"]["pass"] for q in reps)),
        check("jump_inequality", "Kruzhkov jump inequality for all k", r["worst_jump_margin"],
              all(q["jump_inequality"]["pass"] for q in reps),
              worst["jump_inequality"]["worst_margin"] if worst else None),
        check("classical_pieces", "classical equation off the shock", r["classical_residual"],
              r["classical_residual"] <= 1e-8),
    ]
    summary = {k: v for k, v in r.items() if k != "reports"}
    if worst:
        summary["worst_k"] = worst["jump_inequality"]["worst_k"]
        summary["worst_point"] = worst["z"]
    ctx.write_csv("shock.csv", ["t", "x", "u_minus", "u_plus", "rh", "jump_margin"],
                  [[q["z"][0], q["z"][1], q["u_minus"], q["u_plus"], q["rankine_hugoniot"]["value"],
                    q["jump_inequality"]["worst_margin"]] for q in reps])
    return {"result": summary, "checks": checks}


# ------------------------------------------------------------------ projstruct

def cmd_flatness(ctx: Ctx) -> dict:
    p = ctx.problem
    conn = _connection(p)
    pts = _points2(p["points"]) if "points" in p else _default_points(conn, ctx.grid(5))
    r1, r2 = ps.flatness_residual(conn, (pts[:, 0], pts[:, 1]))
    r1, r2 = np.broadcast_to(r1, pts[:, 0].shape), np.broadcast_to(r2, pts[:, 0].shape)
    worst = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    tol = ctx.tol(1e-10)
    ctx.write_csv("flatness.csv", ["t", "x", "r1", "r2"], np.column_stack([pts, r1, r2]))
    return {"result": {"coefficients": conn.texts(), "r1": r1, "r2": r2, "points": pts},
            "checks": [check("flatness", "both flatness residuals vanish", worst, worst <= tol, tol - worst)]}


def _default_points(conn, n):
    (tl, th), (xl, xh) = conn.box["t"], conn.box["x"]
    T, X = np.meshgrid(np.linspace(tl, th, n), np.linspace(xl, xh, n), indexing="ij")
    return np.column_stack([T.ravel(), X.ravel()])


def cmd_characteristics(ctx: Ctx) -> dict:
    p = ctx.problem
    conn = _connection(p)
    init = _need(p, "initial")
    t0, t1 = float(_need(init, "t0")), float(_need(init, "t1"))
    g0 = np.asarray(_need(init, "g0"), dtype=float)
    v0 = np.asarray(_need(init, "v0"), dtype=float)
    steps = ctx.grid(512)
    tr = ps.trace_characteristic(conn, t0, g0, v0, t1, steps)
    fine = ps.trace_characteristic(conn, t0, g0, v0, t1, 2 * steps)
    err = float(max(np.max(np.abs(tr.g[-1] - fine.g[-1])), np.max(np.abs(tr.gdot[-1] - fine.gdot[-1]))))
    tol = ctx.tol(1e-8)
    ctx.write_csv("characteristics.csv", ["t", "g", "gdot"], tr.rows())
    return {"result": {"end": {"t": t1, "g": tr.g[-1], "gdot": tr.gdot[-1]}, "steps": steps},
            "checks": [check("step_refinement", "RK4 endpoint stable under step halving", err, err <= tol, tol - err)]}


def cmd_transform_connection(ctx: Ctx) -> dict:
    p = ctx.problem
    conn = _connection(p)
    chart = _chart(_need(p, "chart"))
    pts = _points2(_need(p, "points"))
    rows, ok, err = [], True, None
    for t, x in pts:
        try:
            rows.append([t, x, *chart(t, x), *ps.transform_connection(conn, chart, (t, x))])
        except NotInKernel as e:
            ok, err = False, str(e)
            break
    ctx.write_csv("transform.csv", ["t", "x", "t_img", "x_img", "a", "b", "c", "d"], rows)
    checks = [check("kernel_membership", "transformed tensor lies in the kernel of the projection", err, ok)]
    if "expect" in p and ok:
        want = np.asarray(p["expect"], dtype=float)
        dev = float(np.max(np.abs(np.asarray(rows)[:, 4:] - want)))
        checks.append(check("expected_coefficients", "transformed coefficients", dev, dev <= ctx.tol(1e-9)))
    return {"result": {"rows": rows}, "checks": checks}


def _reduce_one(ctx, eq, p):
    box = eq.box
    n = ctx.grid(9)
    gt = np.linspace(*box["t"], n)
    gx = np.linspace(*box["x"], n)
    ylo, yhi = box["y"]
    pad = 0.02 * (yhi - ylo)
    ys = np.linspace(ylo + pad, yhi - pad, int(p.get("fiber_samples", 12)))
    chart = _chart(p["chart"]) if "chart" in p else None
    return ps.reduction_pipeline(eq, gt, gx, ys, chart=chart, initial=p.get("initial"), tol=ctx.tol(ps.FIT_TOL))


def cmd_reduce(ctx: Ctx) -> dict:
    p = ctx.problem
    if "domains" in p:
        eq = _equation({**p, "box": p["domains"][0]})
        boxes = [{k: tuple(float(v) for v in d[k]) for k in ("t", "x", "y")} for d in p["domains"]]
        r = ps.reduce_components(eq, boxes, n=ctx.grid(9), initial=p.get("initial"), tol=ctx.tol(ps.FIT_TOL))
        checks = []
        for i, c in enumerate(r["components"]):
            red = c["reduction"]
            checks.append(check(f"component_{i}_reducible", "slope equation is cubic", red["fit_residual"],
                                red["reducible"]))
            if c["flatness"]:
                checks.append(check(f"component_{i}_flat", "flatness of the fitted connection",
                                    c["flatness"]["max_residual"], c["flatness"]["pass"]))
            if c["characteristics"]:
                checks.append(check(f"component_{i}_characteristics", "characteristics agree",
                                    c["characteristics"].get("slope_residual"), c["characteristics"]["pass"]))
        return {"result": r, "checks": checks}
    eq = _equation(p)
    rep = _reduce_one(ctx, eq, p)
    d = rep.to_dict()
    red = d["reduction"]
    checks = [check("reducible", "slope equation is cubic", red["fit_residual"], red["reducible"])]
    if d["flatness"]:
        checks.append(check("flatness", "flatness of the fitted connection", d["flatness"]["max_residual"],
                            d["flatness"]["pass"]))
    if d["characteristics"]:
        checks.append(check("characteristics", "characteristics agree", d["characteristics"].get("slope_residual"),
                            d["characteristics"]["pass"]))
    if d["chart"]:
        checks.append(check("chart", "chart carries the connection to the flat one",
                            d["chart"]["max_transformed_coefficient"], d["chart"]["pass"]))
    if "expect_reducible" in p:
        checks = [check("reducible", "slope equation is cubic", red["fit_residual"],
                        red["reducible"] == bool(p["expect_reducible"]))] + checks[1:]
    return {"result": d, "checks": checks}


# ------------------------------------------------------------------ mobius

def cmd_mobius_build(ctx: Ctx) -> dict:
    scene = _scene(ctx.problem)
    summary = scene.summary()
    cd = scene.density()
    worst = 0.0
    for arc in mb.ARCS:
        conic = scene.conic(arc)
        pts = scene.marked_points()
        for q in mb.arc_samples(scene, arc, 16):
            worst = max(worst, mb.conic_harmonic_check(conic, pts["p1"].coords, pts["p2"].coords, q,
                                                       pts["p_inf"].coords))
    if ctx.csv_dir is not None:
        n = ctx.grid(mb.ARC_SAMPLES)
        ctx.write_csv("arcs.csv", ["arc", "X", "Y"],
                      [[scene.label(a), *z[:2]] for a in mb.ARCS for z in mb.arc_samples(scene, a, n)])
        rows = []
        for r in mb.REGIONS:
            for z in mb.region_samples(scene, r, 2 * n, ctx.args.seed):
                d, f = mb.region_direction(scene, r, z)
                rows.append([scene.label(r), z[0], z[1], *d.coords, *f])
        ctx.write_csv("regions.csv", ["region", "X", "Y", "dir_x", "dir_y", "flow_x", "flow_y"], rows)
    summary["density_frame"] = cd.frame
    tol = ctx.tol(1e-10)
    return {"result": summary,
            "checks": [check("conic_harmonic", "arc tangent is harmonic to the radial line", worst, worst <= tol)]}


def cmd_mobius_verify(ctx: Ctx) -> dict:
    p = ctx.problem
    scene = _scene(p)
    omega = int(p.get("omega", scene.omega))
    cd = mb.CanonicalDensity(scene.marked_points()["p_inf"], omega)
    n = ctx.grid(mb.ARC_SAMPLES)
    r = mb.verify_scene(scene, cd, n, 2 * n, ctx.tol(mb.RH_TOL), ctx.args.seed)
    checks = []
    for a in r["arcs"]:
        checks.append(check(f"{a['name']}_rankine_hugoniot", "barycenter of the jump is tangent",
                            a["rankine_hugoniot"], a["rankine_hugoniot_pass"]))
        checks.append(check(f"{a['name']}_entering", "characteristics enter the arc from both sides",
                            [a["entering_plus_margin"], a["entering_minus_margin"]], a["entering_pass"],
                            min(a["entering_plus_margin"], a["entering_minus_margin"])))
        checks.append(check(f"{a['name']}_orientation", "declared flow follows the density orientation",
                            a["orientation_mismatches"], a["orientation_mismatches"] == 0))
    for g in r["regions"]:
        checks.append(check(f"{g['name']}_classical", "classical equation in the region",
                            g["classical_residual"], g["classical_residual"] <= mb.CLASSICAL_TOL))
        checks.append(check(f"{g['name']}_orientation", "declared flow follows the density orientation",
                            g["orientation_mismatches"], g["orientation_mismatches"] == 0))
    return {"result": r, "checks": checks}


def cmd_holonomy(ctx: Ctx) -> dict:
    p = ctx.problem
    cd = mb.CanonicalDensity(pg.HPoint2(tuple(_homog(p.get("p_inf", (0.0, 0.0))))), int(p.get("omega", 1)))
    loop = _need(p, "loop")
    n = ctx.grid(int(loop.get("samples", 256)))
    turns = int(loop.get("turns", 1))
    kind = _need(loop, "kind")
    if kind == "line":
        pts = mb.line_loop(pg.PLine(tuple(float(v) for v in _need(loop, "covector"))), n, turns)
    elif kind == "circle":
        pts = mb.circle_loop(tuple(_need(loop, "center")), float(_need(loop, "radius")), n, turns)
    elif kind == "points":
        pts = [_homog(v) for v in _need(loop, "points")]
    else:
        raise InputError(f"unknown loop kind {kind!r}")
    sign = mb.orientation_holonomy(cd, pts)
    checks = []
    if "expected" in p:
        checks.append(check("holonomy", "transported orientation sign", sign, sign == int(p["expected"])))
    else:
        checks.append(check("holonomy", "transported orientation sign", sign, True))
    return {"result": {"sign": sign, "samples": len(pts)}, "checks": checks}


def _homog(v):
    v = [float(c) for c in v]
    return v + [1.0] if len(v) == 2 else v


# ------------------------------------------------------------------ driver

COMMANDS = {
    "crossratio": cmd_crossratio,
    "harmonic": cmd_harmonic,
    "lift": cmd_lift,
    "jet-test": cmd_jet_test,
    "barycenter": cmd_barycenter,
    "nine-check": cmd_nine_check,
    "axioms-check": cmd_axioms_check,
    "reconstruct": cmd_reconstruct,
    "kruzhkov-i": cmd_kruzhkov_i,
    "kruzhkov-j": cmd_kruzhkov_j,
    "kruzhkov-c": cmd_kruzhkov_c,
    "disintegrate": cmd_disintegrate,
    "shock-check": cmd_shock_check,
    "flatness": cmd_flatness,
    "characteristics": cmd_characteristics,
    "transform-connection": cmd_transform_connection,
    "reduce": cmd_reduce,
    "mobius-build": cmd_mobius_build,
    "mobius-verify": cmd_mobius_verify,
    "holonomy": cmd_holonomy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--in", dest="infile", required=True, help="JSON problem file")
    common.add_argument("--out", help="report file (default: stdout)")
    common.add_argument("--csv", help="directory for CSV side outputs")
    common.add_argument("--tol", type=float, help="override the command's tolerance")
    common.add_argument("--grid", type=int, help="override the command's sample count")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("--quiet", action="store_true", help="suppress timing on stderr")
    parser = argparse.ArgumentParser(prog="projentropy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _digest(problem, args) -> str:
    flags = {"tol": args.tol, "grid": args.grid, "seed": args.seed}
    blob = json.dumps({"problem": problem, "flags": flags}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    start = time.perf_counter()
    try:
        with open(args.infile) as fh:
            problem = json.load(fh)
        if not isinstance(problem, dict):
            raise InputError("problem file must hold a JSON object")
        body = COMMANDS[args.command](Ctx(args, problem))
    except (OSError, json.JSONDecodeError, InputError, ExprSyntaxError, KeyError, TypeError, ValueError,
            ProjEntropyError) as e:
        print(f"projentropy {args.command}: input error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    passed = all(c["pass"] for c in body["checks"])
    report = {"command": args.command, "inputs_digest": _digest(problem, args), "checks": body["checks"],
              "result": body["result"], "pass": passed}
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if not args.quiet:
        print(f"wall time {time.perf_counter() - start:.3f} s", file=sys.stderr)
    return 0 if passed else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
