import numpy as np
import pytest

from finslerjet.classify import (FLAGS, IMPLICATIONS, ClassificationReport, Tolerances,
                                 classify_metric, classify_point, extract_omega, parallel_map,
                                 worker_count)
from finslerjet.curvature import CurvatureBundle
from finslerjet.jet import einsum
from finslerjet.checks import max_abs
from finslerjet.metrics import Euclidean, FunkBall3, default_family42
from finslerjet.sampling import InsufficientSamplesError, Sampler

from conftest import ZOO, bundles, point_bundle

NAMES = sorted(ZOO)


def verdicts(name):
    return classify_point(point_bundle(name)).flags


def test_euclidean_everything_holds_vacuously():
    rec = classify_point(point_bundle("euclidean"))
    for k in FLAGS:
        assert rec.flag(k), k
        assert all(r.absolute <= 1e-13 for r in rec.flags[k].residuals.values())
    assert rec.flags["weakly_weyl"].vacuous
    assert rec.flags["generalized_weakly_weyl"].vacuous


def test_funk_single_point():
    f = verdicts("funk")
    assert f["weyl"].passed and f["gdw"].passed
    assert f["weakly_weyl"].passed and f["weakly_weyl"].vacuous
    assert not f["douglas"].passed and f["douglas"].relative >= 1e-4


def test_family42_single_point():
    f = verdicts("family42")
    assert not f["weyl"].passed and f["weyl"].relative >= 1e-4
    assert f["w_quadratic"].passed and f["douglas"].passed and f["weakly_weyl"].passed


def test_generic_spherical_metric_is_outside_every_weak_class():
    f = verdicts("generic_sph")
    for k in ("weyl", "w_quadratic", "weakly_weyl", "douglas", "berwald"):
        assert not f[k].passed, k


def test_w_quadratic_coefficient_is_constant_in_y():
    b = point_bundle("family42")
    Omega = b.W.grad_y().grad_y()
    assert max_abs(Omega.grad_y()) <= 1e-8 * max_abs(Omega)


def test_conformal_riemannian_metric_is_berwald():
    rep = classify_metric(ZOO["conformal"], Sampler(seed=3, count=5))
    assert rep.verdict("berwald") and rep.verdict("douglas")
    assert rep.consistent


def test_family42_lambda_one_is_weyl():
    rep = classify_metric(default_family42(lam=1.0), Sampler(seed=42, count=5))
    assert rep.verdict("weyl")
    assert rep.consistent


@pytest.mark.parametrize("name", NAMES)
def test_implications_hold_on_zoo(name):
    rep = ClassificationReport({}, {}, {}, [classify_point(point_bundle(name))])
    assert rep.consistent, rep.implications()
    assert [(i["if"], i["then"]) for i in rep.implications()] == list(IMPLICATIONS)


@pytest.mark.parametrize("name", ["funk", "family42", "generic_sph", "randers"])
def test_tightening_tolerances_never_adds_flags(name):
    b = point_bundle(name)
    loose = classify_point(b, Tolerances(default=1e-6))
    for tol in (1e-7, 1e-9, 1e-11):
        tight = classify_point(b, Tolerances(default=tol))
        for k in FLAGS:
            assert loose.flag(k) or not tight.flag(k), (k, tol)
        loose = tight


def test_per_flag_override():
    b = point_bundle("funk")
    rec = classify_point(b, Tolerances().with_overrides({"douglas": 10.0}))
    assert rec.flag("douglas")
    assert not classify_point(b).flag("douglas")


@pytest.mark.parametrize("name", ["generic_sph", "family42", "funk"])
def test_omega_reconstruction_is_self_consistent(name):
    b = point_bundle(name)
    omega, resid = extract_omega(b)
    recon = einsum("jkl,i->jikl", omega, b.y)
    rec = classify_point(b)
    r1 = rec.flags["weakly_weyl"].residuals["Wt_minus_omega_y"]
    assert max_abs(b.Wt - recon) == pytest.approx(r1.absolute, rel=1e-12, abs=1e-300)


def test_mu_fit_is_zero_homogeneous():
    # mu F and omega_|0 / omega are both 0-homogeneous in y, so mu(x, 2y) = mu(x, y)
    b = point_bundle("generic_sph")
    b2 = CurvatureBundle.from_metric(ZOO["generic_sph"], b.x0, 2.0 * b.y0)
    mu1 = classify_point(b).fitted["mu"]["mu"]
    mu2 = classify_point(b2).fitted["mu"]["mu"]
    assert mu2 == pytest.approx(mu1, rel=1e-8)


def test_gww_fit_reports_rank():
    rec = classify_point(point_bundle("generic_sph"))
    fit = rec.fitted["gww"]
    assert 1 <= fit["rank"] <= 4 and len(fit["lambda"]) == 3


def test_insufficient_samples():
    with pytest.raises(InsufficientSamplesError):
        classify_metric(FunkBall3(), Sampler(count=3, x_box=(0.9, 0.99)))


def test_classify_metric_is_deterministic():
    a = classify_metric(Euclidean(3), Sampler(seed=7, count=5)).to_data()
    b = classify_metric(Euclidean(3), Sampler(seed=7, count=5)).to_data()
    assert repr(a) == repr(b)


def test_funk_verdicts_at_every_seeded_sample():
    for b in bundles("funk", 42, 20):
        f = classify_point(b).flags
        assert f["weyl"].passed and f["gdw"].passed and not f["douglas"].passed


def _square(v):
    return v * v


def test_parallel_map_preserves_order(monkeypatch):
    assert parallel_map(_square, range(6), workers=2) == [v * v for v in range(6)]
    monkeypatch.setenv("FINSLERJET_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("FINSLERJET_WORKERS", "many")
    assert worker_count() == 1


def test_report_summary_shape():
    recs = [classify_point(point_bundle("funk"))]
    data = ClassificationReport({"kind": "funk_ball3"}, {}, {}, recs).to_data()
    assert set(data["summary"]) == set(FLAGS)
    assert data["summary"]["douglas"]["decisive_failure"]
    assert np.isfinite(data["summary"]["weyl"]["max"])
