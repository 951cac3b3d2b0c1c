"""End-to-end acceptance criteria.

Each test records one ``PASS``/``FAIL`` line (criterion number, what was
checked, the tolerance and the worst value seen). The lines are printed as
the test runs (visible with ``-s``) and again in the pytest terminal summary.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerjet import cli
from finslerjet import projective as pj
from finslerjet import verify as V
from finslerjet.checks import max_abs
from finslerjet.classify import classify_point, riemann_scale
from finslerjet.curvature import CurvatureBundle
from finslerjet.jet import Jet, JetConfig, einsum, fd_oracle, layout, partial
from finslerjet.verify import check_douglas_forms, check_ricci_identities

from conftest import ZOO, bundles, point_bundle
from test_jet import all_indices

LINES: list = []


def record(n: int, what: str, ok: bool, tol: float, worst: float) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {what} (tol {tol:g}, worst {worst:.3g})"
    LINES.append(line)
    print(line)
    assert ok, line


def rel(diff, *scales) -> float:
    s = max(max_abs(t) if not isinstance(t, float) else t for t in scales)
    return max_abs(diff) / max(s, 1e-300)


# -- 1. flat baseline --------------------------------------------------------------------

def test_criterion_1_flat_baseline():
    tol, worst = 1e-12, 0.0
    for name in ("euclidean", "constant_riemannian"):
        for b in bundles(name, 42, 20):
            for T in (b.G, b.R, b.B, b.D, b.W, b.Wt):
                worst = max(worst, max_abs(T))
    record(1, "flat metrics have vanishing G, R, B, D, W, Wt at 20 points",
           worst <= tol, tol, worst)


# -- 2. oracle equivalence ---------------------------------------------------------------

def test_criterion_2_oracle_equivalence():
    tol, worst = 1e-4, 0.0
    for name in ("funk", "family42"):
        spec = ZOO[name]
        cfg = JetConfig(3, 3, 3)
        idx = list(all_indices(3, 3))
        for x, y in [(b.x0, b.y0) for b in bundles(name, 42, 10)]:
            F2 = spec.eval_F2(x, y, cfg)
            exact = np.array([partial(F2, m) for m in idx])
            approx = np.array([fd_oracle(spec.F2_value, x, y, m) for m in idx])
            worst = max(worst, float(np.max(np.abs(exact - approx)) / np.max(np.abs(exact))))
    record(2, "F^2 partials of order <= 3 match finite differences, 10 points each",
           worst <= tol, tol, worst)


# -- 3. Funk ball classification ---------------------------------------------------------

def test_criterion_3_funk_classification():
    tol, floor = 1e-7, 1e-4
    recs = [classify_point(b) for b in bundles("funk", 42, 20)]
    weyl = max(r.flags["weyl"].relative for r in recs)
    douglas = min(r.flags["douglas"].relative for r in recs)
    ok = (all(r.flag("weyl") and r.flag("gdw") and not r.flag("douglas") for r in recs)
          and weyl <= tol and douglas >= floor)
    record(3, f"Funk ball is weyl and gdw, not douglas (min douglas relative {douglas:.3g})",
           ok, tol, weyl)


# -- 4. spherical family classification and Weyl formula ---------------------------------

def test_criterion_4_family42():
    tol = 1e-6
    spec = ZOO["family42"]
    bs = bundles("family42", 42, 10)
    recs = [classify_point(b) for b in bs]
    flags_ok = all(not r.flag("weyl") and r.flag("w_quadratic") and r.flag("weakly_weyl")
                   and r.flag("douglas") for r in recs)
    formula = V.check_example_4_2_weyl_formula(spec, None, tol=tol, bundles=bs)
    one = len(formula.details["matching"]) == 1
    alt = V.alternative_h(spec)
    h_worst = 0.0
    for b in bs[:3]:
        b2 = CurvatureBundle.from_metric(alt, b.x0, b.y0)
        h_worst = max(h_worst, rel(b2.W - b.W, b.W, riemann_scale(b)))
    ok = flags_ok and one and formula.passed and h_worst <= tol
    worst = max(formula.residuals[f"pairing_{p}"].relative for p in formula.details["matching"])
    record(4, f"family classified, unique pairing {formula.details['matching']}, "
              f"W independent of h ({h_worst:.3g})", ok, tol, max(worst, h_worst))


# -- 5. Weyl/Douglas identity ------------------------------------------------------------

def test_criterion_5_weyl_douglas_identity():
    tol, worst, ok = 1e-7, 0.0, True
    for name in ("funk", "family42"):
        for b in bundles(name, 42, 10):
            out = V.check_theorem_1_3(b, tol)
            ok &= out.passed
            worst = max(worst, out.relative)
    record(5, "Wt = D|0 - theta y/(n+1) on Funk ball and family, 10 points each",
           ok, tol, worst)


# -- 6. generalized Sakaguchi ------------------------------------------------------------

def test_criterion_6_generalized_sakaguchi():
    tol, worst, ok, members = 1e-7, 0.0, True, []
    for name in sorted(ZOO):
        b = point_bundle(name)
        rec = classify_point(b)
        if not rec.flag("weakly_weyl"):
            continue
        members.append(name)
        out = V.check_gsakaguchi(b, rec, tol)
        res = out.residuals["D0_minus_T_y"]
        # inconclusive means every term vanished below the floor: the identity holds as 0 = 0
        ok &= out.status == "pass" or (out.status == "inconclusive" and res.passes(tol))
        worst = max(worst, res.relative)
    ok &= {"funk", "family42"} <= set(members)
    record(6, f"D|0 = (omega + theta/(n+1)) y on weakly-Weyl zoo members {members}",
           ok, tol, worst)


# -- 7. projective invariance ------------------------------------------------------------

LINEAR = pj.LinearForm(["0.1 + 0.2*x2", "-0.3*x1", "0.05 + 0.1*x3**2"])


def test_criterion_7_projective_invariance():
    inv_tol, lemma_tol, gww_tol = 1e-8, 1e-8, 1e-7
    inv = lemma = gww = 0.0
    ok = True
    for name in ("funk", "family42", "generic_sph", "randers"):
        b = point_bundle(name)
        for f in (LINEAR, pj.ScaledF(0.1, ZOO[name])):
            a = pj.check_invariants_under_change(b, f, inv_tol)
            c = pj.check_riemann_relation(b, f, "base", lemma_tol)
            g = pj.check_gww_closure(b, f, gww_tol)
            ok &= a.passed and c.passed
            ok &= g.residuals["displayed"].passes(gww_tol) and g.residuals["full"].passes(gww_tol)
            inv, lemma = max(inv, a.relative), max(lemma, c.relative)
            gww = max(gww, g.residuals["displayed"].relative, g.residuals["full"].relative)
    record(7, f"W, D, Wt invariant; Riemann relation ({lemma:.3g}, tol {lemma_tol:g}); "
              f"|0 expansion ({gww:.3g}, tol {gww_tol:g})", ok, inv_tol, inv)


# -- 8. spherical decomposition ----------------------------------------------------------

def test_criterion_8_spherical_decomposition():
    fit_tol, tol, thm_tol = 1e-9, 1e-8, 1e-6
    spec = ZOO["family42"]
    bs = bundles("family42", 42, 10)
    fit = rel_worst = 0.0
    for b in bs:
        res = V.decompose_spherical_weyl(b).residuals
        fit = max(fit, res["basis_fit"].relative if not res["basis_fit"].passes(0) else 0.0)
        for k in ("omega3_plus_s_omega2", "omega5_plus_s_omega4_plus_omega1",
                  "Wjipl_reconstruction"):
            if not res[k].passes(0):
                rel_worst = max(rel_worst, res[k].relative)
    thm = V.check_theorem_1_5(spec, None, tol=thm_tol, bundles=bs)
    ok = fit <= fit_tol and rel_worst <= tol and thm.status == "pass"
    record(8, f"basis fit ({fit:.3g}, tol {fit_tol:g}); omega relations and reconstruction "
              f"({rel_worst:.3g}, tol {tol:g}); closed form", ok, thm_tol, thm.relative)


# -- 9. property suites ------------------------------------------------------------------

SMALL = JetConfig(2, 2, 3)
coeffs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=layout(SMALL).size,
                  max_size=layout(SMALL).size)
RING = []


@settings(max_examples=50, deadline=None)
@given(coeffs, coeffs, coeffs)
def _ring_laws(a, b, c):
    a, b, c = (Jet(SMALL, np.array(v)) for v in (a, b, c))
    for lhs, rhs in (((a * b) * c, a * (b * c)), (a * (b + c), a * b + a * c), (a * b, b * a)):
        scale = max(np.max(np.abs(lhs.coeffs)), np.max(np.abs(rhs.coeffs)), 1.0)
        RING.append(float(np.max(np.abs(lhs.coeffs - rhs.coeffs))) / scale)


def test_criterion_9_property_suites():
    tol = 1e-10
    worst, ok = 0.0, True
    for name in sorted(ZOO):
        b = point_bundle(name)
        rs = riemann_scale(b)
        letters = "ab"
        euler = einsum("abm,m->ab", b.R.grad_y(), b.y)
        terms = [
            rel(einsum("im,m->i", b.G.grad_y(), b.y) - b.G * 2.0, b.G),
            rel(euler - b.R * 2.0, euler, b.R, rs),
            rel(einsum("ik,k->i", b.R, b.y), rs),
            rel(einsum("jikl,j->ikl", b.B, b.y), b.B, b.Gamma),
            rel(einsum("jikl,j->ikl", b.D, b.y), b.D, b.B),
            rel(b.Rikl + b.Rikl.transpose(0, 2, 1), b.Rikl, rs),
            rel(b.Wjikl + b.Wjikl.transpose(0, 1, 3, 2), b.Wjikl, rs),
        ]
        worst = max(worst, max(terms))
        for out in (check_ricci_identities(b, 1e-8), check_douglas_forms(b, tol)):
            ok &= out.passed
    _ring_laws()
    ring = max(RING)
    ok &= worst <= tol and ring <= 1e-12
    record(9, f"homogeneity, annihilation, antisymmetry, Ricci identities, Douglas forms on "
              f"the zoo; jet ring laws ({ring:.3g}, tol 1e-12)", ok, tol, worst)


# -- 10. determinism ---------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    cfg = {"metric": {"kind": "funk_ball3"}, "sampler": {"seed": 42, "count": 2},
           "factor": {"kind": "scaled_f", "c": 0.1}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    ok = True
    for command, extra in (("eval", []), ("classify", []), ("verify", ["--check", "thm13"]),
                           ("projective", ["--check", "invariants"])):
        outs = []
        for k in range(2):
            out = tmp_path / f"{command}{k}.json"
            cli.main([command, "--config", str(path), "--output", str(out)] + extra)
            outs.append(out.read_bytes())
        ok &= outs[0] == outs[1] and len(outs[0]) > 0
    record(10, "eval, classify, verify and projective reports are byte-identical across runs",
           ok, 0.0, 0.0)
