"""Shared metric zoo and cached curvature bundles.

Bundles at the standard jet depth cost about a second each, so every
(metric, seed, count) sample is built once per session and reused.
"""

import functools

import numpy as np
import pytest

from finslerjet.curvature import CurvatureBundle
from finslerjet.jet import JetConfig
from finslerjet.metrics import (Euclidean, FunkBall3, Randers, Riemannian,
                                SphericallySymmetric, default_family42)
from finslerjet.sampling import Sampler, sample_points

X0 = (0.1, 0.2, 0.0)
Y0 = (1.0, 0.3, 0.2)

GENERIC_PHI = ("(1 + 0.5*s**2 + 0.3*r**2*s**2)**0.75 / (1+s**2)**0.25"
               " + 0.2*s + 0.1*r**2*s")


def zoo() -> dict:
    """Every metric family shipped by the package, one instance each."""
    return {
        "euclidean": Euclidean(3),
        "constant_riemannian": Riemannian(3, (("2", "0.5", "0"), ("0.5", "1.5", "0.2"),
                                              ("0", "0.2", "1"))),
        "conformal": Riemannian(3, tuple(tuple("(1 + 0.3*x1)**2" if i == j else "0"
                                               for j in range(3)) for i in range(3))),
        "randers": Randers(3, (("1", "0", "0"), ("0", "1", "0"), ("0", "0", "1")),
                           ("0.2*x2", "0.1 + 0.1*x1**2", "-0.1*x3")),
        "funk": FunkBall3(),
        "family42": default_family42(),
        "generic_sph": SphericallySymmetric(3, GENERIC_PHI, 1.0),
    }


ZOO = zoo()
FLAT = ("euclidean", "constant_riemannian")


@functools.lru_cache(maxsize=None)
def sample(name: str, seed: int = 42, count: int = 10) -> tuple:
    pts = sample_points(ZOO[name], Sampler(seed=seed, count=count), minimum=count)
    return tuple((tuple(x), tuple(y)) for x, y in pts)


@functools.lru_cache(maxsize=None)
def bundles(name: str, seed: int = 42, count: int = 10, order: tuple = (3, 10)) -> tuple:
    spec = ZOO[name]
    cfg = JetConfig(spec.dim, *order)
    return tuple(CurvatureBundle.from_metric(spec, np.array(x), np.array(y), cfg)
                 for x, y in sample(name, seed, count))


@functools.lru_cache(maxsize=None)
def point_bundle(name: str, order: tuple = (3, 10)) -> CurvatureBundle:
    spec = ZOO[name]
    x = (0.3, 0.2, 0.1) if name in ("generic_sph",) else X0
    y = (1.0, 0.3, -0.4) if name in ("generic_sph",) else Y0
    return CurvatureBundle.from_metric(spec, np.array(x), np.array(y), JetConfig(3, *order))


@pytest.fixture(scope="session")
def metric_zoo():
    return ZOO


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
