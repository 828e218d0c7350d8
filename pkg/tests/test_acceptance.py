"""Acceptance suite: twelve criteria at their stated tolerances and time limits.

Each test records one line "criterion N: PASS|FAIL ..." that is printed in
the pytest terminal summary. Running this file directly prints the same
lines without pytest.
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from projentropy import density as dn
from projentropy import kruzhkov as kr
from projentropy import mobius as mb
from projentropy import projgeom as pg
from projentropy import projstruct as ps
from projentropy.projgeom import HPoint1, HPoint2, PLine

sys.path.insert(0, str(Path(__file__).resolve().parent))
from oracles import burgers_implicit, burgers_residual_fd, pushed_solution, random_projmap  # noqa: E402

ROOT = Path(__file__).resolve().parent.parent
RESULTS = {}


def record(number, title, ok, detail, elapsed, limit):
    in_time = limit is None or elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    budget = "" if limit is None else f" / {limit:g} s"
    RESULTS[number] = f"criterion {number:2d} {title}: {status} ({detail}; {elapsed:.2f} s{budget})"
    assert ok, RESULTS[number]
    assert in_time, RESULTS[number]


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ------------------------------------------------------------------ 1

def _cross_ratio_suite():
    rng = np.random.default_rng(1)
    worst_norm = worst_inv = 0.0
    for x in rng.uniform(-20, 20, 100):
        got = pg.cross_ratio(HPoint1((1, x)), HPoint1((1, 1)), HPoint1((1, 0)), HPoint1((0, 1))).value
        worst_norm = max(worst_norm, abs(got - x) / max(abs(x), 1e-300))
    done = 0
    while done < 100:
        pts = rng.normal(size=(4, 2))
        m = np.eye(2) + 0.5 * rng.normal(size=(2, 2))
        unit = pts / np.linalg.norm(pts, axis=1)[:, None]
        seps = [abs(pg.det2(unit[i], unit[j])) for i in range(4) for j in range(i + 1, 4)]
        if min(seps) < 0.05 or abs(np.linalg.det(m)) < 0.2:
            continue
        a = pg.cross_ratio(*(HPoint1(tuple(p)) for p in pts)).value
        b = pg.cross_ratio(*(HPoint1(tuple(m @ p)) for p in pts)).value
        worst_inv = max(worst_inv, abs(a - b) / abs(a))
        done += 1
    return worst_norm, worst_inv


def test_criterion_01_cross_ratio():
    (norm, inv), dt = timed(_cross_ratio_suite)
    record(1, "cross-ratio suite", norm < 1e-12 and inv < 1e-12,
           f"normalization rel err {norm:.1e}, invariance rel err {inv:.1e}", dt, 1.0)


# ------------------------------------------------------------------ 2

def _lift_suite():
    rng = np.random.default_rng(2)
    worst_res = worst_func = 0.0
    maps = 0
    while maps < 20:
        m = random_projmap(rng)
        t, x = rng.uniform(0.1, 0.4, 200), rng.uniform(-0.5, 0.5, 200)
        w = m @ np.vstack([t, x, np.ones_like(t)])
        if np.min(np.abs(w[2])) < 0.2 or abs(np.linalg.det(m)) < 0.2:
            continue
        try:
            tt, xx = pg.ProjMap2(m).affine(t, x)
            res = burgers_residual_fd(pushed_solution(m, burgers_implicit), tt, xx)
            other = random_projmap(rng)
            v = burgers_implicit(t, x)
            lhs = pg.apply_lift(pg.lift_projmap(m @ other), t, x, v)
            rhs = pg.apply_lift(pg.lift_projmap(m), *pg.apply_lift(pg.lift_projmap(other), t, x, v))
        except pg.AtInfinity:
            continue
        worst_res = max(worst_res, float(np.max(res)))
        worst_func = max(worst_func, max(float(np.max(np.abs(a - b) / (1 + np.abs(a)))) for a, b in zip(lhs, rhs)))
        maps += 1
    return worst_res, worst_func


def test_criterion_02_lift():
    (res, func), dt = timed(_lift_suite)
    record(2, "lift of projective maps", res < 1e-6 and func < 1e-10,
           f"image Burgers residual {res:.1e}, functoriality {func:.1e}", dt, 5.0)


# ------------------------------------------------------------------ 3

EQ = kr.QuasiEq.burgers()


def _corpus(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = (rng.uniform(0.3, 0.7), rng.uniform(-0.4, 0.4), rng.uniform(-1.2, 1.2))
        h = (rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.5), rng.uniform(0.2, 1.0))
        out.append(kr.BumpDensity(c, h))
    return out


def _kruzhkov_signs():
    classical = [kr.ExprSection("x/(1+t)"), kr.ExprSection("0.3"), kr.ExprSection("(x + 0.2)/(t + 2)")]
    corpus20 = _corpus(20, 30)
    worst_classical = max(abs(kr.I_functional(EQ, s, psi)) for psi in corpus20 for s in classical)
    corpus50 = _corpus(50, 31)
    good = kr.PiecewiseSolution("x", "1", "-1")
    bad = kr.PiecewiseSolution("x", "-1", "1")
    worst_good = min(kr.I_functional(EQ, good, psi) for psi in corpus50)
    worst_bad = min(kr.I_functional(EQ, bad, psi) for psi in corpus50)
    return worst_classical, worst_good, worst_bad


def test_criterion_03_kruzhkov_signs():
    (cl, good, bad), dt = timed(_kruzhkov_signs)
    record(3, "Kruzhkov signs", cl < 1e-8 and good >= -1e-8 and bad < -1e-3,
           f"classical max |I| {cl:.1e}, entropic min {good:.2e}, reversed min {bad:.2e}", dt, 30.0)


# ------------------------------------------------------------------ 4

def _disintegration():
    zeta = kr.BumpDensity((0.5, 0.1), (0.4, 0.6))
    smooth = ["0.3*sin(x) + 0.2*t", "x^2 - 0.5", "0.4*x*t + 0.1", "cos(2*x) - t", "0.5*x - 0.2"]
    shocks = [("x", "1", "-1"), ("x - 0.1", "0.8", "-0.6"), ("x - 0.5*t", "1.5", "-0.5"),
              ("x + 0.2", "0.3", "-1.1"), ("x", "-1", "1")]
    cases = [kr.ExprSection(e) for e in smooth] + [kr.PiecewiseSolution(*s) for s in shocks]
    centers = [(0.2, 0.5), (0.0, 0.8), (-0.1, 0.6), (0.3, 0.7), (0.1, 0.9)] * 2
    worst = 0.0
    for sec, (c, w) in zip(cases, centers):
        lhs, rhs, res = kr.disintegration_check(EQ, sec, zeta, c, w)
        worst = max(worst, abs(res) / max(abs(rhs), 1e-12))
    return worst


def test_criterion_04_disintegration():
    worst, dt = timed(_disintegration)
    record(4, "disintegration", worst < 1e-6, f"max relative gap {worst:.1e} over 10 cases", dt, 30.0)


# ------------------------------------------------------------------ 5

def _identity_and_comparison():
    zeta = kr.BumpDensity((0.5, 0.1), (0.4, 0.6))
    lipschitz = [kr.ExprSection("x/(1+t)"), kr.ExprSection("0.5*x/(1+t) + 0.2"), kr.ExprSection("0.3*sin(x)"),
                 kr.ExprSection("0.1*t - 0.2*x")]
    ident = max(kr.identity_residual(EQ, a, b, zeta) for i, a in enumerate(lipschitz) for b in lipschitz[i + 1:])
    entropic = [kr.PiecewiseSolution("x", "1", "-1"), kr.PiecewiseSolution("x - 0.1", "1", "-1"),
                kr.PiecewiseSolution("x - 0.25*t", "1", "-0.5"), kr.ExprSection("x/(1+t)")]
    comp = min(kr.C_functional(EQ, a, b, zeta) for a in entropic for b in entropic)
    return ident, comp


def test_criterion_05_identity_and_comparison():
    (ident, comp), dt = timed(_identity_and_comparison)
    record(5, "pair identity and comparison", ident < 1e-8 and comp >= -1e-8,
           f"identity residual {ident:.1e}, min C {comp:.1e}", dt, 20.0)


# ------------------------------------------------------------------ 6

def _lit(v):
    return f"({float(v)!r})"


def _shock_calculus():
    rng = np.random.default_rng(6)
    worst_speed = 0.0
    mismatches = 0
    for um, up in rng.uniform(-3, 3, size=(20, 2)):
        r = [kr.rh_residual(EQ, kr.PiecewiseSolution(f"x - {s}*t", _lit(um), _lit(up)), (0.0, 0.0)) for s in (0.0, 1.0)]
        worst_speed = max(worst_speed, abs(r[0] / (r[0] - r[1]) - (um + up) / 2))
        s = (um + up) / 2
        rep = kr.admissibility_check(EQ, kr.PiecewiseSolution(f"x - {_lit(s)}*t", _lit(um), _lit(up)), (0.5, 0.5 * s))
        lax = um >= up
        oleinik = rep["jump_inequality"]["pass"]
        entering = rep["entering_plus"]["pass"] and rep["entering_minus"]["pass"]
        mismatches += int(not (lax == oleinik == entering == rep["pass"]))
    return worst_speed, mismatches


def test_criterion_06_shock_calculus():
    (speed, mism), dt = timed(_shock_calculus)
    record(6, "shock calculus", speed < 1e-12 and mism == 0,
           f"speed error {speed:.1e}, classification mismatches {mism}/20", dt, 2.0)


# ------------------------------------------------------------------ 7

def _flatness_oracle():
    cases = {"1.7": lambda z: 0.0, "z2": lambda z: 0.0, "z2^2": lambda z: 2.0, "sin(z2)": lambda z: -math.sin(z)}
    rng = np.random.default_rng(7)
    exact = True
    for d, second in cases.items():
        conn = ps.Connection2D("0", "0", "0", d)
        for z1, z2 in rng.uniform(-2, 2, size=(10, 2)):
            r1, r2 = ps.flatness_residual(conn, (z1, z2))
            exact = exact and r1 == 0.0 and r2 == second(z2)
            flat = r1 == 0.0 and r2 == 0.0
            exact = exact and flat == (d in ("1.7", "z2"))
    return exact


def test_criterion_07_flatness():
    exact, dt = timed(_flatness_oracle)
    record(7, "flatness oracle", exact, "residual equals the exact second derivative" if exact else "mismatch", dt, 1.0)


# ------------------------------------------------------------------ 8

def _reduction():
    eq = kr.QuasiEq("cos(y)", "sin(y)", "0", {"t": (0.1, 1), "x": (-1, 1), "y": (-1.2, 1.2)})
    out = ps.reduction_pipeline(eq, np.linspace(0.1, 1, 5), np.linspace(-1, 1, 5), np.linspace(-1.2, 1.2, 10))
    d = out.to_dict()
    ch = d["characteristics"]
    ok_cos = (out.passed and d["reduction"]["coefficients_vanish"] and d["reduction"]["pushforward"] == "tan(y)"
              and max(ch["position_residual"], ch["slope_residual"]) < 1e-8)
    quartic = kr.QuasiEq("1", "y", "y^4", {"t": (0, 1), "x": (-1, 1), "y": (-1, 1)})
    rep = ps.reduction_test(quartic, np.linspace(0, 1, 5), np.linspace(-1, 1, 5), np.linspace(-1, 1, 9))
    return ok_cos, max(ch["position_residual"], ch["slope_residual"]), (not rep.reducible), rep.max_residual


def test_criterion_08_reduction():
    (ok_cos, char_res, not_red, fit), dt = timed(_reduction)
    record(8, "reduction pipeline", ok_cos and not_red and fit > 0.1,
           f"cos/sin reducible with tan pushforward (characteristic residual {char_res:.1e}); "
           f"quartic cubic-fit residual {fit:.3f}", dt, 10.0)


# ------------------------------------------------------------------ 9

def _barycentric_calculus():
    rng = np.random.default_rng(9)
    worst = {"characteristic": 0.0, "multiplicative": 0.0, "cocycle": 0.0, "quotient": 0.0}
    for _ in range(10):
        c = rng.uniform(-0.8, 0.8, 3)
        fd = dn.FiberDensity.from_expr(f"exp({c[0]:.6f}*x + {c[1]:.6f}*x^2) + {abs(c[2]):.6f}", (0.0, 1.0))
        bm = dn.BarycentricMap.from_density(fd)
        for _ in range(4):
            p, q, r, s, w, z = rng.permutation(np.sort(rng.uniform(0.05, 0.95, 6)))
            left = pg.cross_ratio(bm.point(p, q), bm.point(p, r), bm.point(p, s), bm.point(r, s)).value
            right = pg.cross_ratio(bm.point(p, q), bm.point(q, r), bm.point(q, s), bm.point(r, s)).value
            worst["characteristic"] = max(worst["characteristic"], abs(left - right) / (1 + abs(left)))
            inf = math.inf
            mult = dn.rq(bm, p, q, s, inf).value * dn.rq(bm, q, r, s, inf).value - dn.rq(bm, p, r, s, inf).value
            worst["multiplicative"] = max(worst["multiplicative"], abs(mult))
            coc = dn.dq(bm, p, q, r, s, inf) * dn.dq(bm, r, s, w, z, inf) - dn.dq(bm, p, q, w, z, inf)
            worst["cocycle"] = max(worst["cocycle"], abs(coc))
            quot = dn.dq(bm, p, q, r, s, 2.0) / dn.dq(bm, p, q, r, s, inf)
            cr = pg.cross_ratio(bm.point(p, q), bm.point(r, s), HPoint1.from_affine(2.0), HPoint1.infinity()).value
            worst["quotient"] = max(worst["quotient"], abs(quot - cr) / (1 + abs(cr)))
    return worst


def test_criterion_09_barycentric_calculus():
    worst, dt = timed(_barycentric_calculus)
    record(9, "barycentric calculus", max(worst.values()) < 1e-8,
           ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), dt, 10.0)


# ------------------------------------------------------------------ 10

def _reconstruction():
    devs = {}
    grid = np.linspace(-0.995, 0.995, 200)
    for text in ("1", "1 + x^2", "exp(x)"):
        fd = dn.FiberDensity.from_expr(text, (-1.0, 1.0))
        bm = dn.BarycentricMap.from_density(fd)
        anchor = dn.ReconstructionAnchor(math.inf, -0.5, 0.5, bm.point(-0.5, 0.5).coords)
        ratio = dn.reconstruct_density(bm, anchor, grid)(grid) / fd(grid)
        devs[text] = float(np.max(np.abs(ratio / np.median(ratio) - 1)))
    mid = dn.midpoint_map((-1.0, 1.0))
    vals = dn.reconstruct_density(mid, dn.ReconstructionAnchor(math.inf, -0.5, 0.5, (1, 0)), grid)(grid)
    devs["midpoint"] = float(np.max(np.abs(vals / np.median(vals) - 1)))
    return devs


def test_criterion_10_reconstruction():
    devs, dt = timed(_reconstruction)
    record(10, "density reconstruction", max(devs.values()) < 1e-4,
           ", ".join(f"{k}: {v:.1e}" for k, v in devs.items()), dt, 10.0)


# ------------------------------------------------------------------ 11

def _mobius():
    scene = mb.build_scene(r=(1, 1), q1=(1, 0.4), q2=(-0.7, 1))
    rep = mb.verify_scene(scene)
    signs_ok = all(a["entering_plus_margin"] >= 0 and a["entering_minus_margin"] >= 0 for a in rep["arcs"])
    cd = scene.density()
    once = mb.orientation_holonomy(cd, mb.line_loop(PLine((0, 0, 1.0)), 256))
    contractible = mb.orientation_holonomy(cd, mb.circle_loop((3, 2), 1.0, 256))
    tampered = mb.verify_scene(scene.with_flow("side_p2_q1", -1), arc_samples_n=64, region_samples_n=64)
    return rep, signs_ok, once, contractible, tampered["failed_arcs"]


def test_criterion_11_mobius():
    (rep, signs_ok, once, contractible, failed), dt = timed(_mobius)
    ok = (rep["pass"] and rep["max_rankine_hugoniot"] < 1e-9 and rep["max_classical_residual"] <= 1e-12
          and signs_ok and once == -1 and contractible == 1 and failed == ["arc_q1_p1"])
    record(11, "Mobius scene", ok,
           f"RH {rep['max_rankine_hugoniot']:.1e}, classical {rep['max_classical_residual']:.1e}, "
           f"holonomy {once:+d}/{contractible:+d}, tampered fails {failed}", dt, 20.0)


# ------------------------------------------------------------------ 12

DETERMINISM_RUNS = [
    ("mobius-verify", "mobius_axes"),
    ("axioms-check", "density_exp"),
    ("reduce", "reduce_cos_sin"),
    ("barycenter", "density_positive"),
    ("nine-check", "density_positive"),
]


def _determinism():
    many = str(max(2, os.cpu_count() or 2))
    differing = []
    for command, name in DETERMINISM_RUNS:
        outs = []
        for threads in ("1", many):
            env = {**os.environ, "NUMBA_NUM_THREADS": threads}
            proc = subprocess.run([sys.executable, "-m", "projentropy.cli", command, "--in",
                                   f"problems/{name}.json", "--quiet"], capture_output=True, cwd=ROOT, env=env)
            outs.append(proc.stdout)
        if outs[0] != outs[1] or not outs[0]:
            differing.append(command)
    return differing, many


def test_criterion_12_determinism():
    (differing, many), dt = timed(_determinism)
    record(12, "determinism", not differing,
           f"{len(DETERMINISM_RUNS)} commands byte-identical with 1 and {many} threads"
           if not differing else f"reports differ for {differing}", dt, None)


if __name__ == "__main__":
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    failed = 0
    for fn in tests:
        try:
            fn()
        except AssertionError:
            failed += 1
    for key in sorted(RESULTS):
        print(RESULTS[key])
    sys.exit(1 if failed else 0)
