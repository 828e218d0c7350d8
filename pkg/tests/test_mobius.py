import math

import numpy as np
import pytest

from projentropy import density as dn
from projentropy import mobius as mb
from projentropy.errors import AtVanishingPoint, ConstraintViolation, DegenerateTuple, InShockSet, SamplingTooCoarse
from projentropy.projgeom import HPoint1, HPoint2, PLine, harmonic_conjugate

HYPERBOLA = np.array([[0, 0.5, 0], [0.5, 0, 0], [0, 0, -1.0]])
CIRCLE = np.diag([1.0, 1.0, -1.0])
GRAM = np.array([[2.0, 0.3, 0.1], [0.3, 1.0, -0.2], [0.1, -0.2, 1.5]])


@pytest.fixture(scope="module")
def scene():
    return mb.build_scene(r=(1, 1), q1=(1, 0.4), q2=(-0.7, 1))


def finite_scene():
    s = np.array([[1, 0.2, 0.1], [0.1, 1, -0.2], [0.05, 0.03, 1]])
    pts = {k: s @ np.array(v) for k, v in {"p_inf": (0, 0, 1), "p1": (3, 0.2, 1), "p2": (0.3, 2.5, 1.0)}.items()}
    r = s @ np.array([-1.5, -1.2, 1.0])
    cols = np.column_stack([pts["p1"], pts["p2"], pts["p_inf"]])
    frame = cols * np.linalg.solve(cols, r)
    q1, q2 = frame @ np.array([1, 0.3, 1]), frame @ np.array([-0.6, 1, 1])
    return mb.build_scene(r=r, q1=q1, q2=q2, p_inf=pts["p_inf"], p1=pts["p1"], p2=pts["p2"], variant="finite")


def random_base_points(n, seed, center=(0.0, 0.0)):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, n)
    rad = rng.uniform(0.3, 4.0, n)
    return np.column_stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)])


# ------------------------------------------------------- conic harmonic

def test_hyperbola_harmonic():
    p1, p2, origin = (1, 0, 0), (0, 1, 0), (0, 0, 1)
    assert mb.conic_harmonic_check(HYPERBOLA, p1, p2, (2, 0.5), origin) < 1e-15
    assert mb.conic_harmonic_check(HYPERBOLA, p1, p2, (1, 1), origin) < 1e-15


def test_circle_harmonic():
    for th in np.linspace(0.3, 6.0, 25):
        q = (math.cos(th), math.sin(th))
        assert mb.conic_harmonic_check(CIRCLE, (1, 0), (0, 1), q, (1, 1)) < 1e-10


def test_conic_harmonic_errors():
    with pytest.raises(DegenerateTuple):
        mb.conic_harmonic_check(HYPERBOLA, (1, 0, 0), (0, 1, 0), (1, 0, 0))
    with pytest.raises(ConstraintViolation):
        mb.conic_harmonic_check(HYPERBOLA, (1, 0, 0), (0, 1, 0), (2, 2))


# ----------------------------------------------------- canonical density

def test_fiber_density_is_one():
    cd = mb.CanonicalDensity(HPoint2((0, 0, 1)))
    fd = mb.canonical_fiber_density(cd, (1.0, 2.0))
    assert np.all(fd(np.linspace(-50, 50, 11)) == 1.0)
    with pytest.raises(AtVanishingPoint):
        mb.canonical_fiber_density(cd, (0.0, 0.0))


def test_charts_agree_on_overlap():
    cd = mb.CanonicalDensity(HPoint2((0.5, -0.3, 1)), gram=GRAM)
    q = (1.7, 1.1)
    a, b = HPoint1((1.0, 0.3)), HPoint1((0.2, 1.0))
    v1 = mb.arc_vector(mb.canonical_fiber_density(cd, q, 1), a, b)
    v2 = mb.arc_vector(mb.canonical_fiber_density(cd, q, 2), a, b)
    assert np.allclose(v1, v2, rtol=1e-10)


@pytest.mark.parametrize("p_inf, gram", [((0, 0, 1), np.eye(3)), ((0.5, -0.3, 1), GRAM)])
def test_barycenter_is_harmonic_conjugate(p_inf, gram):
    cd = mb.CanonicalDensity(HPoint2(p_inf), gram=gram)
    rng = np.random.default_rng(1)
    for q in random_base_points(20, 2, center=HPoint2(p_inf).affine()):
        fd = mb.canonical_fiber_density(cd, q)
        inst = mb.instantaneous_direction(cd, q)
        a, b = (HPoint1(tuple(rng.normal(size=2))) for _ in range(2))
        s, t = sorted((fd.coordinate(a), fd.coordinate(b)))
        bc = dn.barycenter(fd, s, t)
        hc = harmonic_conjugate(inst, a, b)
        u, w = np.array(bc.coords), np.array(hc.coords)
        assert abs(u[0] * w[1] - u[1] * w[0]) < 1e-10


def test_orientation_flip_negates():
    plus, minus = mb.CanonicalDensity(HPoint2((0, 0, 1)), 1), mb.CanonicalDensity(HPoint2((0, 0, 1)), -1)
    rng = np.random.default_rng(3)
    for q in random_base_points(10, 4):
        a, b = (HPoint1(tuple(rng.normal(size=2))) for _ in range(2))
        vp = mb.arc_vector(mb.canonical_fiber_density(plus, q), a, b)
        vm = mb.arc_vector(mb.canonical_fiber_density(minus, q), a, b)
        assert np.allclose(vp, -vm, rtol=1e-12, atol=1e-14)


def test_scalar_product_change_is_positive_base_factor():
    d1 = mb.CanonicalDensity(HPoint2((0, 0, 1)))
    d2 = mb.CanonicalDensity(HPoint2((0, 0, 1)), gram=GRAM)
    rng = np.random.default_rng(5)
    for q in random_base_points(8, 6):
        ratios = []
        for _ in range(5):
            a, b = (HPoint1(tuple(rng.normal(size=2))) for _ in range(2))
            v1 = mb.arc_vector(mb.canonical_fiber_density(d1, q), a, b)
            v2 = mb.arc_vector(mb.canonical_fiber_density(d2, q), a, b)
            k = float(v2 @ v1 / (v1 @ v1))
            assert np.allclose(v2, k * v1, rtol=1e-9, atol=1e-12)
            ratios.append(k)
        assert min(ratios) > 0 and np.ptp(ratios) < 1e-9 * max(ratios)


# ---------------------------------------------------------------- scenes

def test_scene_structure(scene):
    s = scene.summary()
    assert s["projective_arcs"] == 2 and s["projective_regions"] == 3 and s["omega"] == 1
    pts = scene.marked_points()
    for arc in mb.ARCS:
        conic = scene.conic(arc)
        for name in arc.split("_")[1:]:
            v = np.array(pts[name].coords)
            assert abs(v @ conic @ v) < 1e-12


def test_scene_constraint_violations():
    with pytest.raises(ConstraintViolation):
        mb.build_scene(r=(1, 1), q1=(1, 1), q2=(-0.7, 1))
    with pytest.raises(ConstraintViolation):
        mb.build_scene(r=(1, 1), q1=(1, 0.4), q2=(0.7, 1))


def test_evaluate_solution_regions(scene):
    assert mb.evaluate_solution(scene, (0.5, 3)) == HPoint1((1, 0))
    assert mb.evaluate_solution(scene, (3, -2)) == HPoint1((0, 1))
    for z in [(0.5, 3), (2.0, 3), (0.0, 5)]:
        assert mb.evaluate_solution(scene, z) == HPoint1((1, 0))
    with pytest.raises(ConstraintViolation):
        mb.evaluate_solution(scene, (0.5, 0.5))


def test_arc_one_sided_values_average_to_tangent(scene):
    cd = scene.density()
    for arc in mb.ARCS:
        conic = scene.conic(arc)
        for z in mb.arc_samples(scene, arc, 12):
            with pytest.raises(InShockSet) as err:
                mb.evaluate_solution(scene, z[:2])
            left, right = err.value.one_sided.values()
            assert left != right
            fd = mb.canonical_fiber_density(cd, z[:2])
            s, t = sorted((fd.coordinate(left), fd.coordinate(right)))
            bc = np.array(dn.barycenter(fd, s, t).coords)
            normal = (conic @ z)[:2]
            assert abs(bc @ normal) < 1e-9 * np.linalg.norm(bc) * np.linalg.norm(normal)


def test_canonical_scene_verifies(scene):
    rep = mb.verify_scene(scene)
    assert rep["pass"]
    assert rep["max_rankine_hugoniot"] < 1e-9
    assert rep["max_classical_residual"] <= 1e-12
    for arc in rep["arcs"]:
        assert arc["entering_plus_margin"] >= 0 and arc["entering_minus_margin"] >= 0


@pytest.mark.parametrize("region, arcs", [("side_p2_q1", ["arc_q1_p1"]), ("side_q2_p1", ["arc_q2_p2"]),
                                          ("side_q1_q2", ["arc_q1_p1", "arc_q2_p2"])])
def test_tampered_flow_fails_adjacent_arcs(scene, region, arcs):
    rep = mb.verify_scene(scene.with_flow(region, -1), arc_samples_n=32, region_samples_n=32)
    assert not rep["pass"] and sorted(rep["failed_arcs"]) == arcs
    assert rep["failed_regions"] == [region]


def test_wrong_orientation_fails(scene):
    rep = mb.verify_scene(scene, density=mb.CanonicalDensity(HPoint2((0, 0, 1)), -1),
                          arc_samples_n=32, region_samples_n=32)
    assert not rep["pass"] and len(rep["failed_arcs"]) == 2


def test_opposite_orientation_scene():
    op = mb.build_scene(r=(2, 1), q1=(2, -0.5), q2=(0.8, 1), orientation="opposite")
    assert op.omega == -1
    assert mb.verify_scene(op, arc_samples_n=32, region_samples_n=32)["pass"]


def test_finite_variant_verifies():
    fin = finite_scene()
    assert mb.verify_scene(fin, arc_samples_n=32, region_samples_n=32)["pass"]


def test_transformed_scene_verifies(scene):
    t = np.array([[1.2, 0.3, 0], [-0.2, 0.9, 0], [0.1, 0.2, 1]])
    image = scene.transformed(t)
    assert image.omega == 1
    assert mb.verify_scene(image, arc_samples_n=32, region_samples_n=32)["pass"]


def test_verify_with_other_scalar_product(scene):
    rep = mb.verify_scene(scene, density=scene.density(GRAM), arc_samples_n=32, region_samples_n=32)
    assert rep["pass"]


# -------------------------------------------------------------- holonomy

def test_holonomy(scene):
    cd = scene.density()
    at_infinity = PLine((0, 0, 1.0))
    assert mb.orientation_holonomy(cd, mb.line_loop(at_infinity, 256)) == -1
    assert mb.orientation_holonomy(cd, mb.line_loop(at_infinity, 512, turns=2)) == 1
    assert mb.orientation_holonomy(cd, mb.line_loop(PLine((1, 1, -3.0)), 256)) == -1
    assert mb.orientation_holonomy(cd, mb.circle_loop((3, 2), 1.0, 256)) == 1


def test_holonomy_coarse_sampling(scene):
    with pytest.raises(SamplingTooCoarse):
        mb.orientation_holonomy(scene.density(), mb.line_loop(PLine((0, 0, 1.0)), 4))
