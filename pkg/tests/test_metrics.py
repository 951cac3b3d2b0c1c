import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerjet import expr as ex
from finslerjet.curvature import metric_spray
from finslerjet.jet import Jet, JetConfig, einsum, seed_point
from finslerjet.metrics import (DegenerateConfigurationError, DomainError, Euclidean,
                                FunkBall3, Randers, Riemannian, default_family42,
                                extract_PQ, fundamental_tensor, metric_from_data, validate,
                                validate_point)
from finslerjet.sampling import InsufficientSamplesError, Sampler, sample_points

from conftest import ZOO

CFG = JetConfig(3, 1, 4)


def _funk_alpha_beta(p, y):
    lam = 1 - p[0] ** 2 - p[1] ** 2
    rot = -p[1] * y[0] + p[0] * y[1]
    alpha = np.sqrt(rot ** 2 + (y @ y) * lam) / lam
    return alpha, rot / lam


# -- F^2 examples -----------------------------------------------------------------------

def test_euclidean_F2_is_sum_of_squares():
    x, y = np.array([0.3, -0.2, 0.1]), np.array([1.0, 2.0, -0.5])
    F2 = Euclidean(3).eval_F2(x, y, CFG)
    _, ys = seed_point(x, y, CFG)
    ref = ys[0] * ys[0] + ys[1] * ys[1] + ys[2] * ys[2]
    np.testing.assert_array_equal(F2.coeffs, ref.coeffs)


def test_funk_at_origin():
    assert FunkBall3().eval_F2([0, 0, 0], [1, 0, 0], CFG).value() == pytest.approx(1.0, abs=0)


def test_funk_matches_closed_forms():
    p, y = np.array([0.1, 0.2, 0.0]), np.array([1.0, 0.3, 0.2])
    a, b = _funk_alpha_beta(p, y)
    assert FunkBall3().eval_F2(p, y, CFG).value() == pytest.approx((a + b) ** 2, rel=1e-15)


def test_funk_outside_ball_is_a_domain_error():
    with pytest.raises(DomainError, match="unit ball"):
        FunkBall3().eval_F2([0.8, 0.7, 0], [1, 0, 0], CFG)


def test_family42_domain_error_names_constraint():
    spec = default_family42()
    with pytest.raises(DomainError, match="domain radius"):
        spec.eval_F2([0.9, 0, 0], [1, 0, 0], CFG)
    bad = default_family42(a=-1.0)
    with pytest.raises(DomainError, match="a \\+ b r\\^2"):
        bad.eval_F2([0.1, 0, 0], [1, 0, 0], CFG)


def test_family42_closed_form():
    spec = default_family42(h="0.5 + r**2", s0=2.0)
    x, y = np.array([0.2, -0.1, 0.3]), np.array([0.4, 1.0, -0.3])
    r, u, v = np.linalg.norm(x), np.linalg.norm(y), x @ y
    s = v / u
    phi = s * (0.5 + r ** 2) - (s / 2.0 - 1) / (1 + r ** 2) ** 2
    assert spec.F_value(x, y) == pytest.approx(u * phi, rel=1e-14)


# -- validation ----------------------------------------------------------------------------

def _random_points(n, seed=0, box=0.4):
    rng = np.random.default_rng(seed)
    return [(rng.uniform(-box, box, 3), rng.normal(size=3)) for _ in range(n)]


def test_euclidean_validates_everywhere():
    assert validate(Euclidean(3), _random_points(10)).all_ok


def test_randers_with_long_one_form_is_not_finsler():
    eye = (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "1"))
    spec = Randers(3, eye, ("1.2", "0", "0"))
    rep = validate(spec, _random_points(10))
    bad = rep.failures()
    assert bad and all(p.status == "not_finsler" for p in bad)
    assert any("positive definite" in m or "not positive" in m for p in bad for m in p.messages)


def test_validation_separates_domain_from_axioms():
    rec = validate_point(FunkBall3(), [0.9, 0.9, 0], [1, 0, 0])
    assert rec.status == "outside_domain"
    assert validate_point(FunkBall3(), [0.1, 0.1, 0], [1, 0, 0]).ok


def test_family42_default_instance_validates_on_its_domain():
    spec = default_family42()
    rng = np.random.default_rng(5)
    pts = []
    for _ in range(20):
        d = rng.normal(size=3)
        pts.append((d / np.linalg.norm(d) * rng.uniform(0.1, 0.5), rng.normal(size=3)))
    assert validate(spec, pts).all_ok


def test_validate_needs_points():
    with pytest.raises(ValueError):
        validate(Euclidean(3), [])


# -- fundamental tensor and homogeneity -----------------------------------------------------

def test_euclidean_fundamental_tensor_is_identity():
    g, ginv = fundamental_tensor(Euclidean(3).eval_F2([0.1, 0, 0], [1, 2, 3], CFG))
    np.testing.assert_allclose(g.coeffs[..., 0], np.eye(3))
    assert np.max(np.abs(g.coeffs[..., 1:])) == 0
    np.testing.assert_allclose(ginv.value(), np.eye(3))


def test_riemannian_fundamental_tensor_is_y_independent():
    spec = ZOO["conformal"]
    g, _ = fundamental_tensor(spec.eval_F2([0.2, 0.1, 0], [1, 2, 3], JetConfig(3, 0, 4)))
    assert np.max(np.abs(g.coeffs[..., 1:])) == 0  # x_order 0: only pure-y coefficients


@pytest.mark.parametrize("name", sorted(ZOO))
def test_euler_identities(name):
    spec = ZOO[name]
    x, y = np.array([0.3, 0.2, 0.1]), np.array([1.0, 0.3, -0.4])
    F2 = spec.eval_F2(x, y, CFG)
    g, ginv = fundamental_tensor(F2)
    _, ys = seed_point(x, y, CFG)
    yv = Jet.stack(ys)
    gyy = einsum("ij,i,j->", g, yv, yv)
    scale = np.max(np.abs(F2.coeffs))
    assert np.max(np.abs((gyy - F2).coeffs)) <= 1e-11 * scale
    gy = einsum("ij,j->i", g, yv)
    half_grad = F2.grad_y() * 0.5
    assert np.max(np.abs((gy - half_grad).coeffs)) <= 1e-11 * scale
    eye = einsum("ij,jk->ik", g, ginv)
    assert np.max(np.abs(eye.value() - np.eye(3))) <= 1e-11


@pytest.mark.parametrize("name", sorted(ZOO))
@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
def test_F_is_positively_homogeneous(name, lam):
    spec = ZOO[name]
    x, y = np.array([0.3, 0.2, 0.1]), np.array([1.0, 0.3, -0.4])
    assert spec.F_value(x, lam * y) == pytest.approx(lam * spec.F_value(x, y), rel=1e-10)


# -- spray scalars P, Q ---------------------------------------------------------------

def test_euclidean_PQ_zero():
    sp = metric_spray(Euclidean(3), [0.2, 0, 0], [0, 1, 0], JetConfig(3, 1, 2))
    pq = extract_PQ(sp.G, [0.2, 0, 0], [0, 1, 0])
    assert pq.P == 0 and pq.Q == 0 and pq.residual == 0


def test_family42_spray_lies_in_span_of_x_and_y():
    x, y = np.array([0.3, 0.0, 0.1]), np.array([0.0, 1.0, 0.0])  # x orthogonal to y
    sp = metric_spray(default_family42(), x, y, JetConfig(3, 1, 2))
    pq = extract_PQ(sp.G, x, y)
    assert pq.residual <= 1e-9 * np.max(np.abs(sp.G.value()))
    u = np.linalg.norm(y)
    np.testing.assert_allclose(u * pq.P * y + u * u * pq.Q * x, sp.G.value(), atol=1e-12)


def test_funk_spray_leaves_span_of_x_and_y():
    x, y = np.array([0.3, 0.2, 0.1]), np.array([1.0, 0.3, -0.4])
    sp = metric_spray(FunkBall3(), x, y, JetConfig(3, 1, 2))
    assert extract_PQ(sp.G, x, y).relative_residual > 1e-3


def test_extract_PQ_rejects_parallel_vectors():
    with pytest.raises(DegenerateConfigurationError):
        extract_PQ(np.ones(3), [0.1, 0.2, 0.3], [0.2, 0.4, 0.6])


# -- expressions and metric documents --------------------------------------------------------

exprs = st.sampled_from([
    "x1*y2 - 3.5*x2**2", "sqrt(1 + r**2) * s", "(u + v) / (2 + r**2)**1.5",
    "-(x3 - y1)**3 + 0.25", "s**2 / (1 + s**2)**0.25 - r*s",
])


@settings(max_examples=20, deadline=None)
@given(exprs, st.integers(0, 1000))
def test_parse_print_round_trip(text, seed):
    e = ex.parse(text)
    e2 = ex.parse(str(e))
    e3 = ex.from_data(e.to_data())
    rng = np.random.default_rng(seed)
    env = ex.coordinate_env(list(rng.uniform(-0.5, 0.5, 3)), list(rng.normal(size=3) + 2))
    v = e.evaluate(env)
    assert e2.evaluate(env) == pytest.approx(v, rel=1e-14)
    assert e3.evaluate(env) == pytest.approx(v, rel=1e-14)


@pytest.mark.parametrize("bad", ["x1 +", "import os", "z9", "f(x1)", "x1 < 2", "True"])
def test_parse_rejects_non_expressions(bad):
    with pytest.raises(ex.ExprError):
        ex.parse(bad)


def test_params_become_constants():
    e = ex.parse("k*x1", {"k": 2.0})
    assert e.evaluate({"x1": 3.0}) == 6.0


@pytest.mark.parametrize("name", sorted(ZOO))
def test_metric_documents_round_trip(name):
    spec = ZOO[name]
    again = metric_from_data(spec.to_data())
    x, y = np.array([0.3, 0.2, 0.1]), np.array([1.0, 0.3, -0.4])
    assert again.F_value(x, y) == pytest.approx(spec.F_value(x, y), rel=1e-14)


@pytest.mark.parametrize("doc", [{"kind": "nope"}, {"kind": "riemannian", "dim": 3},
                                 {"kind": "sphsym_family42", "a": 1}])
def test_bad_metric_documents(doc):
    with pytest.raises(ValueError):
        metric_from_data(doc)


def test_riemannian_rejects_velocity_dependence():
    with pytest.raises(ValueError):
        Riemannian(2, (("1 + y1", "0"), ("0", "1")))


# -- sampling -------------------------------------------------------------------------------------

def test_sampling_is_deterministic_and_valid():
    a = sample_points(FunkBall3(), Sampler(seed=42, count=8))
    b = sample_points(FunkBall3(), Sampler(seed=42, count=8))
    assert len(a) == 8
    for (x1, y1), (x2, y2) in zip(a, b):
        np.testing.assert_array_equal(x1, x2)
        np.testing.assert_array_equal(y1, y2)
        assert validate_point(FunkBall3(), x1, y1).ok
        assert abs(x1 @ y1) <= 0.99 * np.linalg.norm(x1) * np.linalg.norm(y1)


def test_sampling_exhaustion():
    with pytest.raises(InsufficientSamplesError):
        sample_points(FunkBall3(), Sampler(count=5, x_box=(2.0, 3.0)), minimum=5)
