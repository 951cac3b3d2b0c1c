"""Deterministic sample points on the slit tangent bundle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import MetricSpec, validate_point


class InsufficientSamplesError(RuntimeError):
    pass


@dataclass(frozen=True)
class Sampler:
    """x uniform in a box (rejecting points outside the metric's domain or where
    the Finsler axioms fail), y uniform on a sphere of radius ``y_radius``.

    With ``independent`` set, pairs whose |cos(x, y)| exceeds ``max_cosine``
    are rejected as well.
    """

    seed: int = 42
    count: int = 10
    x_box: tuple = (-0.5, 0.5)
    y_radius: float = 1.0
    independent: bool = True
    max_cosine: float = 0.99
    retries: int = 50

    def box(self, dim: int) -> np.ndarray:
        b = np.asarray(self.x_box, dtype=float)
        if b.ndim == 1:
            b = np.tile(b, (dim, 1))
        if b.shape != (dim, 2) or np.any(b[:, 0] >= b[:, 1]):
            raise ValueError(f"x_box must be one interval or {dim} intervals, got {self.x_box}")
        return b

    def to_data(self) -> dict:
        box = np.asarray(self.x_box, dtype=float).tolist()
        return {"seed": self.seed, "count": self.count, "x_box": box, "y_radius": self.y_radius,
                "independent": self.independent, "max_cosine": self.max_cosine,
                "retries": self.retries}


@dataclass
class SampleSet:
    points: list = field(default_factory=list)
    rejected: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def sample_points(spec: MetricSpec, sampler: Sampler, minimum: int = 1) -> SampleSet:
    """Draw ``sampler.count`` validated (x, y) pairs; deterministic in the seed."""
    rng = np.random.default_rng(sampler.seed)
    n = spec.dim
    box = sampler.box(n)
    out = SampleSet(rejected={"outside_domain": 0, "not_finsler": 0, "near_parallel": 0})
    for _ in range(sampler.count * sampler.retries):
        if len(out.points) >= sampler.count:
            break
        x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(n)
        d = rng.normal(size=n)
        y = sampler.y_radius * d / np.linalg.norm(d)
        if sampler.independent:
            nx = np.linalg.norm(x)
            if nx == 0 or abs(x @ y) / (nx * np.linalg.norm(y)) > sampler.max_cosine:
                out.rejected["near_parallel"] += 1
                continue
        status = validate_point(spec, x, y).status
        if status != "ok":
            out.rejected[status] += 1
            continue
        out.points.append((x, y))
    if len(out.points) < minimum:
        raise InsufficientSamplesError(
            f"only {len(out.points)} valid sample points for {spec.kind} "
            f"(need {minimum}); rejections: {out.rejected}")
    return out
