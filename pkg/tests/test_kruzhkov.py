import numpy as np
import pytest
from scipy import integrate as si

from projentropy import kruzhkov as kr
from projentropy.errors import ConstraintViolation

EQ = kr.QuasiEq.burgers()
ZETA = kr.BumpDensity((0.5, 0.1), (0.4, 0.6))
SHOCK = kr.PiecewiseSolution("x", "1", "-1")
BAD = kr.PiecewiseSolution("x", "-1", "1")
RAREFACTION = kr.ExprSection("x/(1+t)")


def bump_corpus(count, seed, y_range=(-1.0, 1.0), x_center=(-0.5, 0.5)):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = (rng.uniform(0.3, 0.7), rng.uniform(*x_center), rng.uniform(*y_range))
        h = (rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.5), rng.uniform(0.2, 1.0))
        out.append(kr.BumpDensity(c, h))
    return out


# ---------------------------------------------------------- fiber primitive

def test_fiber_primitive_burgers():
    assert kr.fiber_primitive(EQ, 1, (0.0, 0.0), 3.0) == pytest.approx(3.0)
    assert kr.fiber_primitive(EQ, 2, (0.0, 0.0), 3.0) == pytest.approx(4.5)
    eq = kr.QuasiEq("1", "2.5", "0")
    assert kr.fiber_primitive(eq, 2, (0.1, 0.2), -1.2) == pytest.approx(-3.0)


def test_fiber_primitive_derivative():
    eq = kr.QuasiEq("1 + t*y^2", "sin(y + x)", "0")
    rng = np.random.default_rng(0)
    h = 1e-4
    for t, x, y in rng.uniform(-1, 1, size=(50, 3)):
        for i, col in ((1, 0), (2, 1)):
            fd = (kr.fiber_primitive(eq, i, (t, x), y + h) - kr.fiber_primitive(eq, i, (t, x), y - h)) / (2 * h)
            assert fd == pytest.approx(float(eq.field(t, x, y)[col]), abs=1e-8)


# ------------------------------------------------------------ I functional

def test_I_classical_zero():
    for psi in bump_corpus(5, 1):
        assert abs(kr.I_functional(EQ, RAREFACTION, psi)) < 1e-8


def test_I_matches_pointwise_for_smooth_sections():
    sec = kr.ExprSection("0.3*sin(x) + 0.2*t")
    for psi in bump_corpus(3, 2):
        assert abs(kr.I_functional(EQ, sec, psi) - kr.I_classical(EQ, sec, psi)) < 1e-8


def test_I_shock_closed_form():
    psi = kr.BumpDensity((0.5, 0.0, 0.2), (0.4, 0.6, 0.9))
    closed = si.dblquad(lambda y, t: psi.value(t, 0.0, y) * (1 - y * y) * (abs(y) < 1),
                        0.1, 0.9, -0.7, 1.1, epsabs=1e-12)[0]
    assert kr.I_functional(EQ, SHOCK, psi) == pytest.approx(closed, rel=1e-8)
    assert kr.I_functional(EQ, BAD, psi) == pytest.approx(-closed, rel=1e-8)


def test_I_sign_invariant_under_base_rescaling():
    scaled = EQ.scaled("1 + 0.5*t^2 + 0.2*x^2")
    for psi in bump_corpus(6, 3):
        for sec in (SHOCK, BAD):
            a, b = kr.I_functional(EQ, sec, psi), kr.I_functional(scaled, sec, psi)
            assert (a >= -1e-10) == (b >= -1e-10)


def test_rescaling_rejects_fiber_dependence():
    with pytest.raises(ConstraintViolation):
        EQ.scaled("1 + y^2")


# -------------------------------------------------------- J and C functionals

def test_J_examples():
    for k in (-0.5, 0.0, 0.3):
        assert abs(kr.J_functional(EQ, RAREFACTION, kr.constant_section(k), ZETA)) < 1e-8
    assert kr.J_functional(EQ, SHOCK, kr.constant_section(0.0), ZETA) >= 0


def test_C_examples():
    assert kr.C_functional(EQ, SHOCK, SHOCK, ZETA) == pytest.approx(0.0, abs=1e-14)
    other = kr.PiecewiseSolution("x - 0.1", "1", "-1")
    assert kr.C_functional(EQ, SHOCK, other, ZETA) >= -1e-8


def test_identity_for_lipschitz_pairs():
    pairs = [(RAREFACTION, kr.ExprSection("0.5*x/(1+t) + 0.2")),
             (kr.ExprSection("0.3*sin(x)"), kr.ExprSection("0.1*t - 0.2*x")),
             (kr.ExprSection("0.4*x + 0.1*t^2"), kr.ExprSection("0.2 - 0.3*x*t"))]
    for s, t in pairs:
        assert kr.identity_residual(EQ, s, t, ZETA) < 1e-8


def test_corollary_one_spot_check():
    ys = np.linspace(-1.5, 1.5, 7)
    j_nonneg = all(kr.J_functional(EQ, SHOCK, kr.constant_section(y), ZETA) >= -1e-10 for y in ys)
    i_nonneg = all(kr.I_functional(EQ, SHOCK, psi) >= -1e-10 for psi in bump_corpus(8, 4))
    assert j_nonneg and i_nonneg
    j_bad = all(kr.J_functional(EQ, BAD, kr.constant_section(y), ZETA) >= -1e-10 for y in ys)
    i_bad = all(kr.I_functional(EQ, BAD, psi) >= -1e-10 for psi in bump_corpus(8, 4))
    assert not j_bad and not i_bad


# ----------------------------------------------------------- disintegration

def test_disintegration_classical_zero():
    lhs, rhs, res = kr.disintegration_check(EQ, RAREFACTION, ZETA, 0.2, 0.5)
    assert abs(lhs) < 1e-10 and abs(rhs) < 1e-10


def test_disintegration_shock():
    lhs, rhs, res = kr.disintegration_check(EQ, SHOCK, ZETA, 0.2, 0.5)
    assert abs(res) <= 1e-6 * abs(rhs)


def test_disintegration_limit_converges():
    target = kr.J_functional(EQ, SHOCK, kr.constant_section(0.3), ZETA)
    vals = kr.disintegration_limit(EQ, SHOCK, ZETA, 0.3, [0.2, 0.1, 0.05])
    errs = [abs(v - target) for v in vals]
    assert errs[0] > errs[1] > errs[2]


# ----------------------------------------------------------------- shocks

def test_rh_residual_examples():
    assert abs(kr.rh_residual(EQ, SHOCK, (0.3, 0.0))) < 1e-14
    assert kr.rh_residual(EQ, kr.PiecewiseSolution("x", "0.5", "0.5"), (0.3, 0.0)) == 0.0
    assert abs(kr.rh_residual(EQ, kr.PiecewiseSolution("x - t", "2", "0"), (0.5, 0.5))) < 1e-14


def test_rh_off_shock_rejected():
    with pytest.raises(ConstraintViolation):
        kr.rh_residual(EQ, SHOCK, (0.3, 0.4))


def lit(v):
    return f"({float(v)!r})"


def rh_speed(um, up):
    r = [kr.rh_residual(EQ, kr.PiecewiseSolution(f"x - {s}*t", lit(um), lit(up)), (0.0, 0.0)) for s in (0.0, 1.0)]
    return r[0] / (r[0] - r[1])


def test_rh_speed_is_mean():
    rng = np.random.default_rng(7)
    for um, up in rng.uniform(-3, 3, size=(20, 2)):
        assert rh_speed(um, up) == pytest.approx((um + up) / 2, abs=1e-12)


def test_admissibility_examples():
    good = kr.admissibility_check(EQ, SHOCK, (0.3, 0.0))
    assert good["pass"] and good["entering_plus"]["value"] == pytest.approx(-1.0)
    assert good["entering_minus"]["value"] == pytest.approx(1.0)
    bad = kr.admissibility_check(EQ, BAD, (0.3, 0.0))
    assert not bad["pass"]
    assert bad["jump_inequality"]["worst_k"] == pytest.approx(0.0, abs=1e-15)
    assert bad["jump_inequality"]["secant_gap"] == pytest.approx(-0.5)
    flat = kr.admissibility_check(EQ, kr.PiecewiseSolution("x", "0.4", "0.4"), (0.3, 0.0))
    assert flat["pass"]


def test_lax_classification_matches_jump_inequality():
    rng = np.random.default_rng(8)
    for um, up in rng.uniform(-3, 3, size=(20, 2)):
        s = (um + up) / 2
        sol = kr.PiecewiseSolution(f"x - {lit(s)}*t", lit(um), lit(up))
        rep = kr.admissibility_check(EQ, sol, (0.5, 0.5 * s))
        lax = rep["entering_plus"]["pass"] and rep["entering_minus"]["pass"]
        assert lax == (um >= up) == rep["jump_inequality"]["pass"] == rep["pass"]


def test_shock_check_summary():
    out = kr.shock_check(EQ, SHOCK, (0.1, 0.9), (-1, 1), n=8)
    assert out["all_pass"] and out["points"] == 8
    assert not kr.shock_check(EQ, BAD, (0.1, 0.9), (-1, 1), n=8)["all_pass"]
