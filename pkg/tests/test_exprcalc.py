import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from projentropy import exprcalc as ec
from projentropy.errors import DomainError, UnboundVariable

CORPUS = [
    "y^2 + sin(z1)",
    "1/(3 - z1)",
    "z1*z2 - 3*z2^3",
    "exp(z1)*cos(z2) + log(2 + z1^2)",
    "sqrt(4 + z1*z2) / (2 + tan(z2/3))",
    "-z1^2 + z2^0.5",
    "(z1 - z2)/(z1 + 3)",
    "abs(z1 - 5)*sgn(z2 + 5) + z1^3*z2",
]


def test_parse_shapes():
    assert ec.parse("y^2 + sin(z1)") == ec.Add(ec.Pow(ec.Var("y"), ec.Num(2.0)), ec.Func("sin", ec.Var("z1")))
    assert isinstance(ec.parse("1/(1 - x)"), ec.Div)


def test_parse_precedence_and_associativity():
    assert ec.evaluate(ec.parse("8 - 3 - 2"), {}) == 3
    assert ec.evaluate(ec.parse("8/4/2"), {}) == 1
    assert ec.evaluate(ec.parse("-2^2"), {}) == -4
    assert ec.evaluate(ec.parse("2*3^2"), {}) == 18


def test_parse_error_column():
    with pytest.raises(ec.ExprSyntaxError) as err:
        ec.parse("2 ** x")
    assert err.value.column == 3
    with pytest.raises(ec.ExprSyntaxError):
        ec.parse("sin(x")


@pytest.mark.parametrize("text", CORPUS)
def test_roundtrip(text):
    e = ec.parse(text)
    assert ec.parse(ec.to_text(e)) == e


def test_eval_examples():
    assert ec.evaluate(ec.parse("z1*z2"), {"z1": 3, "z2": 4}) == 12
    assert ec.evaluate(ec.parse("tan(y)"), {"y": 0.0}) == 0
    with pytest.raises(DomainError):
        ec.evaluate(ec.parse("log(z1)"), {"z1": -1.0})
    with pytest.raises(DomainError):
        ec.evaluate(ec.parse("1/z1"), {"z1": 0.0})
    with pytest.raises(UnboundVariable):
        ec.evaluate(ec.parse("z1 + q"), {"z1": 1.0})


def test_free_vars():
    assert ec.free_vars(ec.parse("y^2 + sin(z1)*y")) == {"y", "z1"}


def test_jet2_examples():
    j = ec.eval_jet2(ec.parse("z1*z2"), {"z1": 0.3, "z2": -2.0}, ["z1", "z2"])
    assert j.hessian[("z1", "z2")] == 1.0 and j.hessian[("z1", "z1")] == 0.0
    for y in (-1.0, 0.2, 1.3):
        jt = ec.eval_jet2(ec.parse("tan(y)"), {"y": y}, ["y"])
        assert jt.gradient["y"] == pytest.approx(1 + math.tan(y) ** 2, rel=1e-14)


def test_pythagorean_identity_jets():
    rng = np.random.default_rng(0)
    e = ec.parse("sin(z1)^2 + cos(z1)^2")
    for z in rng.uniform(-4, 4, 20):
        j = ec.eval_jet2(e, {"z1": z}, ["z1"])
        assert abs(j.gradient["z1"]) < 1e-14 and abs(j.hessian[("z1", "z1")]) < 1e-13


def test_sgn_abs_kink():
    with pytest.raises(DomainError):
        ec.eval_jet2(ec.parse("abs(z1)"), {"z1": 0.0}, ["z1"])
    j = ec.eval_jet2(ec.parse("sgn(z1)"), {"z1": 2.0}, ["z1"])
    assert j.gradient["z1"] == 0.0


def _fd(e, z, h=1e-5):
    f = lambda a, b: ec.evaluate(e, {"z1": a, "z2": b, "y": 0.7})
    g = np.array([(f(z[0] + h, z[1]) - f(z[0] - h, z[1])) / (2 * h),
                  (f(z[0], z[1] + h) - f(z[0], z[1] - h)) / (2 * h)])
    hxx = (f(z[0] + h, z[1]) - 2 * f(*z) + f(z[0] - h, z[1])) / h ** 2
    hyy = (f(z[0], z[1] + h) - 2 * f(*z) + f(z[0], z[1] - h)) / h ** 2
    hxy = (f(z[0] + h, z[1] + h) - f(z[0] + h, z[1] - h) - f(z[0] - h, z[1] + h) + f(z[0] - h, z[1] - h)) / (4 * h * h)
    return g, np.array([[hxx, hxy], [hxy, hyy]])


@pytest.mark.parametrize("text", CORPUS)
def test_jets_match_finite_differences(text):
    e = ec.parse(text)
    rng = np.random.default_rng(CORPUS.index(text))
    for z in rng.uniform(0.2, 1.5, size=(50, 2)):
        j = ec.eval_jet2(e, {"z1": z[0], "z2": z[1], "y": 0.7}, ["z1", "z2"])
        g = np.array([j.gradient["z1"], j.gradient["z2"]])
        h = np.array([[j.hessian[(a, b)] for b in ("z1", "z2")] for a in ("z1", "z2")])
        gf, hf = _fd(e, z)
        assert np.allclose(g, gf, rtol=1e-6, atol=1e-6)
        # second differences at step 1e-5 carry ~1e-6 rounding noise
        assert np.allclose(h, hf, rtol=1e-3, atol=1e-3)
        assert h[0, 1] == h[1, 0]


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 2), st.floats(0.1, 2))
def test_jet_linearity(alpha, beta, z1, z2):
    f, g = ec.parse("sin(z1)*z2^2"), ec.parse("exp(z1 - z2)")
    combo = ec.Add(ec.Mul(ec.Num(alpha), f), ec.Mul(ec.Num(beta), g))
    env, vs = {"z1": z1, "z2": z2}, ["z1", "z2"]
    jf, jg, jc = (ec.eval_jet2(e, env, vs) for e in (f, g, combo))
    for key in jc.gradient:
        assert jc.gradient[key] == pytest.approx(alpha * jf.gradient[key] + beta * jg.gradient[key], rel=1e-12, abs=1e-12)
    for key in jc.hessian:
        assert jc.hessian[key] == pytest.approx(alpha * jf.hessian[key] + beta * jg.hessian[key], rel=1e-12, abs=1e-12)


def test_polynomial_jets_exact():
    j = ec.eval_jet2(ec.parse("z1^3*z2 - 2*z2^2"), {"z1": 1.5, "z2": -0.5}, ["z1", "z2"])
    assert j.gradient == {"z1": 3 * 1.5 ** 2 * -0.5, "z2": 1.5 ** 3 + 2.0}
    assert j.hessian[("z1", "z1")] == 6 * 1.5 * -0.5
    assert j.hessian[("z1", "z2")] == 3 * 1.5 ** 2
    assert j.hessian[("z2", "z2")] == -4.0


def test_vectorized_evaluation():
    e = ec.parse("z1*z2 + 1")
    out = ec.evaluate(e, {"z1": np.arange(3.0), "z2": 2.0})
    assert np.array_equal(out, [1.0, 3.0, 5.0])
