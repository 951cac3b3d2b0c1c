"""Command-line front end: eval, classify, verify and projective runs.

A run is described by a JSON document::

    {"metric": {"kind": "funk_ball3"},
     "sampler": {"seed": 42, "count": 10, "x_box": [-0.5, 0.5], "y_radius": 1.0},
     "jet": {"x_order": 3, "y_order": 10},
     "checks": ["thm13"], "tolerances": {"thm13": 1e-7},
     "tensors": ["W", "D"], "factor": {"kind": "linear_form", "b": ["0.1", "0", "0"]}}

Reports are JSON with sorted keys; floats are written in their shortest
round-trip form, so identical inputs give identical bytes.

Exit status: 0 all requested checks passed (or were inconclusive/vacuous),
2 some check failed, 3 configuration error, 4 no valid sample points.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import projective as pj
from . import verify as vf
from .checks import CheckResult
from .classify import FLAGS, Tolerances, classify_point, parallel_map
from .curvature import STANDARD_CONFIG, CurvatureBundle, required_orders
from .jet import JetConfig, JetError, layout
from .metrics import DomainError, metric_from_data
from .sampling import InsufficientSamplesError, Sampler, sample_points

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_DOMAIN = 0, 2, 3, 4

TENSORS = {
    "F": lambda b: b.F, "G": lambda b: b.G, "N": lambda b: b.N, "R": lambda b: b.R,
    "B": lambda b: b.B, "E": lambda b: b.E, "H": lambda b: b.H, "D": lambda b: b.D,
    "W": lambda b: b.W, "Wjikl": lambda b: b.Wjikl, "Wt": lambda b: b.Wt,
    "theta": lambda b: b.theta,
}
TENSOR_DEPTH = {"F": "F", "G": "G", "N": "N", "R": "R", "B": "B", "E": "E", "H": "H",
                "D": "D", "W": "W", "Wjikl": "Wjikl", "Wt": "Wt", "theta": "theta"}

VERIFY_CHECKS = {
    "thm13": ("Wt|0", "D|0", "theta"),
    "gsakaguchi": ("Wt|0", "D|0", "theta"),
    "prop53": ("Wt|0", "D|0|0", "theta|0"),
    "sph-decomp": ("Wjikl",),
    "thm15": ("Wt|0",),
    "example42": ("W",),
    "ricci": ("Rjikl", "H"),
    "douglas": ("D",),
}
PROJECTIVE_CHECKS = {
    "lemma": ("R",),
    "lemma-changed": ("R",),
    "invariants": ("Wt", "D"),
    "ww-closure": ("Wt|0",),
    "gww-closure": ("Wt|0",),
}
DEFAULT_CHECKS = {
    "verify": ["thm13", "gsakaguchi", "ricci", "douglas"],
    "projective": ["lemma", "invariants", "ww-closure", "gww-closure"],
}
DEFAULT_TOLERANCES = {
    "thm13": 1e-7, "gsakaguchi": 1e-7, "prop53": 1e-6, "sph-decomp": 1e-8, "thm15": 1e-6,
    "example42": 1e-6, "ricci": 1e-8, "douglas": 1e-10, "lemma": 1e-8, "lemma-changed": 1e-8,
    "invariants": 1e-8, "ww-closure": 1e-7, "gww-closure": 1e-7,
}


class ConfigError(ValueError):
    pass


# -- configuration --------------------------------------------------------------------

def load_config(args) -> dict:
    if not args.config:
        raise ConfigError("--config PATH is required")
    try:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict) or "metric" not in cfg:
        raise ConfigError("config must be an object with a 'metric' entry")
    return cfg


def resolve(args, cfg: dict) -> dict:
    """Merge command-line overrides into the config and fill in every default."""
    cmd = args.command
    try:
        spec = metric_from_data(cfg["metric"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad metric: {exc}") from None
    run = {"command": cmd, "metric": cfg["metric"]}
    smp = dict(cfg.get("sampler", {}))
    if args.seed is not None:
        smp["seed"] = args.seed
    if args.points is not None:
        smp["count"] = args.points
    try:
        sampler = Sampler(seed=int(smp.get("seed", 42)), count=int(smp.get("count", 10)),
                          x_box=tuple(map(_box_entry, smp.get("x_box", (-0.5, 0.5)))),
                          y_radius=float(smp.get("y_radius", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad sampler settings: {exc}") from None
    run["sampler"] = sampler
    jet = dict(cfg.get("jet", {}))
    run["jet"] = {"x_order": int(jet.get("x_order", STANDARD_CONFIG[0])),
                  "y_order": int(jet.get("y_order", STANDARD_CONFIG[1]))}

    known = {"verify": VERIFY_CHECKS, "projective": PROJECTIVE_CHECKS}.get(cmd, {})
    checks = list(args.check or cfg.get("checks") or DEFAULT_CHECKS.get(cmd, []))
    if cmd in ("eval", "classify"):
        checks = []
    unknown = [c for c in checks if c not in known]
    if unknown:
        raise ConfigError(f"unknown check(s) for {cmd}: {unknown}; known: {sorted(known)}")
    if "prop53" in checks and not args.deep:
        raise ConfigError("check 'prop53' needs the extended depth; pass --deep")
    run["checks"] = checks

    tols = dict(cfg.get("tolerances", {}))
    for item in args.tolerance or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tolerance expects NAME=VALUE, got {item!r}")
        try:
            tols[name] = float(value)
        except ValueError:
            raise ConfigError(f"tolerance {name!r} is not a number: {value!r}") from None
    allowed = set(DEFAULT_TOLERANCES) | set(FLAGS) | {"default", "floor"}
    bad = sorted(set(tols) - allowed)
    if bad:
        raise ConfigError(f"unknown tolerance name(s): {bad}")
    merged = dict(DEFAULT_TOLERANCES)
    merged.update({k: v for k, v in tols.items() if k in DEFAULT_TOLERANCES})
    run["tolerances"] = merged
    run["flag_tolerances"] = Tolerances(
        default=tols.get("default", 1e-7), floor=tols.get("floor", 1e-12),
        per_flag=tuple(sorted((k, v) for k, v in tols.items() if k in FLAGS)))

    tensors = list(cfg.get("tensors", ["W", "D"])) if cmd == "eval" else []
    bad = [t for t in tensors if t not in TENSORS]
    if bad:
        raise ConfigError(f"unknown tensor(s): {bad}; known: {sorted(TENSORS)}")
    run["tensors"] = tensors
    run["factor"] = cfg.get("factor", {"kind": "linear_form", "b": [0.0] * spec.dim})
    run["deep"] = bool(args.deep)
    return run


def _box_entry(v):
    return tuple(map(float, v)) if isinstance(v, (list, tuple)) else float(v)


def echo(run: dict) -> dict:
    out = {"command": run["command"], "metric": run["metric"],
           "sampler": run["sampler"].to_data(), "jet": run["jet"], "deep": run["deep"]}
    if run["command"] in ("verify", "projective"):
        out["checks"] = run["checks"]
        out["tolerances"] = {c: run["tolerances"][c] for c in run["checks"]}
    if run["command"] == "classify":
        out["tolerances"] = run["flag_tolerances"].to_data()
    if run["command"] == "eval":
        out["tensors"] = run["tensors"]
    if run["command"] == "projective":
        out["factor"] = run["factor"]
    return out


# -- budget ------------------------------------------------------------------------------------

def budget(run: dict) -> dict:
    cmd = run["command"]
    if cmd == "eval":
        depth = [TENSOR_DEPTH[t] for t in run["tensors"]]
    elif cmd == "classify":
        depth = ["Wt|0", "D|0"]
    else:
        table = VERIFY_CHECKS if cmd == "verify" else PROJECTIVE_CHECKS
        depth = [d for c in run["checks"] for d in table[c]]
    x, y = required_orders(depth or ["F"])
    dim = metric_from_data(run["metric"]).dim
    cfg = JetConfig(dim, x, y)
    return {"required": {"x_order": x, "y_order": y}, "coefficients_per_jet": layout(cfg).size,
            "configured": run["jet"], "tensors": sorted(set(depth))}


# -- per-point jobs ----------------------------------------------------------------------

def _stats(values):
    return {"min": min(values), "max": max(values), "mean": float(np.mean(values))}


def _eval_job(args):
    spec, x, y, cfg, tensors = args
    b = CurvatureBundle.from_metric(spec, x, y, cfg)
    out = {}
    for t in tensors:
        v = np.asarray(TENSORS[t](b).value(), dtype=float)
        out[t] = {"max_abs": float(np.max(np.abs(v))) if v.size else 0.0, "value": v.tolist()}
    return out


def _verify_job(args):
    spec, x, y, cfg, checks, tols, ftols = args
    b = CurvatureBundle.from_metric(spec, x, y, cfg)
    out = {}
    for c in checks:
        tol = tols[c]
        if c == "thm13":
            r = vf.check_theorem_1_3(b, tol)
        elif c == "gsakaguchi":
            r = vf.check_gsakaguchi(b, tol=tol, tolerances=ftols)
        elif c == "prop53":
            r = vf.check_prop_5_3(b, tol=tol, tolerances=ftols)
        elif c == "ricci":
            r = vf.check_ricci_identities(b, tol)
        elif c == "douglas":
            r = vf.check_douglas_forms(b, tol)
        elif c == "sph-decomp":
            r = _spherical_only(c, spec, tol) or vf.check_spherical_decomposition(b, tol)
        elif c == "thm15":
            r = _spherical_only(c, spec, tol) or vf.check_theorem_1_5(
                spec, None, tol, ftols, bundles=[b])
        elif c == "example42":
            r = (_family42_only(c, spec, tol)
                 or vf.check_example_4_2_weyl_formula(spec, None, tol, bundles=[b]))
        out[c] = r
    return out


def _spherical_only(name, spec, tol):
    if not vf.is_spherically_symmetric(spec):
        return CheckResult(name, "hypothesis_not_met", {}, tol,
                           {"reason": "metric is not spherically symmetric"})
    return None


def _family42_only(name, spec, tol):
    from .metrics import SphSymFamily42
    if not isinstance(spec, SphSymFamily42):
        return CheckResult(name, "hypothesis_not_met", {}, tol,
                           {"reason": "metric is not the spherical family with a closed-form Weyl curvature"})
    return None


def _projective_job(args):
    spec, x, y, cfg, checks, tols, ftols, factor = args
    b = CurvatureBundle.from_metric(spec, x, y, cfg)
    out = {}
    for c in checks:
        tol = tols[c]
        if c == "lemma":
            r = pj.check_riemann_relation(b, factor, "base", tol)
        elif c == "lemma-changed":
            r = pj.check_riemann_relation(b, factor, "changed", tol)
        elif c == "invariants":
            r = pj.check_invariants_under_change(b, factor, tol)
        elif c == "ww-closure":
            r = pj.check_weakly_weyl_closure(b, factor, tol, ftols)
        elif c == "gww-closure":
            r = pj.check_gww_closure(b, factor, tol, ftols)
        out[c] = r
    return out


def _classify_job(args):
    spec, x, y, cfg, ftols = args
    return classify_point(CurvatureBundle.from_metric(spec, x, y, cfg), ftols)


def aggregate(name: str, results: list) -> dict:
    statuses = [r.status for r in results]
    if "fail" in statuses:
        verdict = "fail"
    elif all(s == "inconclusive" for s in statuses):
        verdict = "inconclusive"
    elif "hypothesis_not_met" in statuses:
        verdict = "hypothesis_not_met"
    elif all(s in ("vacuous", "inconclusive") for s in statuses):
        verdict = "vacuous"
    else:
        verdict = "pass"
    out = {"name": name, "verdict": verdict, "points": [r.to_data() for r in results],
           "relative": _stats([r.relative for r in results])}
    if name == "example42":
        sets = [set(r.details.get("matching", [])) for r in results if r.details]
        out["matching_pairings"] = sorted(set.intersection(*sets)) if sets else []
    return out


# -- commands --------------------------------------------------------------------------------

def execute(run: dict) -> tuple:
    """Run a resolved configuration; returns (report dict, exit status)."""
    spec = metric_from_data(run["metric"])
    need = budget(run)["required"]
    if run["jet"]["x_order"] < need["x_order"] or run["jet"]["y_order"] < need["y_order"]:
        raise ConfigError(f"jet orders {run['jet']} are below the requirement {need}")
    cfg = JetConfig(spec.dim, run["jet"]["x_order"], run["jet"]["y_order"])
    points = sample_points(spec, run["sampler"], minimum=1)
    pts = [(x, y) for x, y in points]
    report = {"tool": "finslerjet", "version": __version__, "config": echo(run),
              "sampling": {"valid": len(pts), "rejected": points.rejected},
              "points": [{"index": i, "x": x.tolist(), "y": y.tolist()}
                         for i, (x, y) in enumerate(pts)]}
    cmd = run["command"]
    status = EXIT_OK
    if cmd == "eval":
        rows = parallel_map(_eval_job, [(spec, x, y, cfg, run["tensors"]) for x, y in pts])
        report["tensors"] = {t: {"per_point": [r[t] for r in rows],
                                 "max_abs": max(r[t]["max_abs"] for r in rows)}
                             for t in run["tensors"]}
    elif cmd == "classify":
        from .classify import ClassificationReport
        recs = parallel_map(_classify_job, [(spec, x, y, cfg, run["flag_tolerances"])
                                            for x, y in pts])
        rep = ClassificationReport(spec.to_data(), run["sampler"].to_data(),
                                   run["flag_tolerances"].to_data(), recs)
        data = rep.to_data()
        report["classification"] = {k: data[k] for k in ("summary", "implications",
                                                         "consistent")}
        report["classification"]["flags"] = rep.verdicts
        report["classification"]["points"] = data["points"]
        status = EXIT_OK if rep.consistent else EXIT_CHECK_FAILED
    else:
        if cmd == "verify":
            jobs = [(spec, x, y, cfg, run["checks"], run["tolerances"], run["flag_tolerances"])
                    for x, y in pts]
            rows = parallel_map(_verify_job, jobs)
        else:
            try:
                factor = pj.factor_from_data(run["factor"], spec)
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad projective factor: {exc}") from None
            if getattr(factor, "dim", spec.dim) != spec.dim:
                raise ConfigError(f"projective factor has dimension {factor.dim}, "
                                  f"metric has {spec.dim}")
            jobs = [(spec, x, y, cfg, run["checks"], run["tolerances"], run["flag_tolerances"],
                     factor) for x, y in pts]
            rows = parallel_map(_projective_job, jobs)
        report["checks"] = [aggregate(c, [r[c] for r in rows]) for c in run["checks"]]
        if any(c["verdict"] == "fail" for c in report["checks"]):
            status = EXIT_CHECK_FAILED
    report["exit_status"] = status
    return report, status


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="finslerjet",
                                description="Finsler curvature engine: evaluate, classify and "
                                            "verify projective curvature identities.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("eval", "tensor values at sample points"),
                       ("classify", "membership in the projective classes"),
                       ("verify", "theorem and identity residuals"),
                       ("projective", "behaviour under a projective change")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--seed", type=int, help="sampler seed (overrides the config)")
        s.add_argument("--points", type=int, help="number of sample points")
        s.add_argument("--check", action="append", help="check name (repeatable)")
        s.add_argument("--tolerance", action="append", metavar="NAME=VALUE",
                       help="per-check or per-flag tolerance (repeatable)")
        s.add_argument("--output", help="write the report here instead of stdout")
        s.add_argument("--budget", action="store_true",
                       help="print jet-order requirements and exit")
        s.add_argument("--deep", action="store_true",
                       help="enable the second flow derivative of D (prop53)")
        s.add_argument("--timing", action="store_true", help="print wall time to stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        run = resolve(args, load_config(args))
        if args.budget:
            text = dumps(budget(run))
            status = EXIT_OK
        else:
            report, status = execute(run)
            text = dumps(report)
    except (InsufficientSamplesError, DomainError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, ValueError, KeyError, JetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.timing:
        print(f"wall time {time.perf_counter() - t0:.2f} s", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
