"""Objective functions over triangulations, flip rewards, and gap reporting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .flips import FlipAction, apply_flip
from .geometry import PointConfig
from .triangulation import Triangulation, dual_diameter, is_fine, is_regular


class Objective(enum.Enum):
    """Search objectives; metric ones are minimized, reach objectives maximized."""

    MIN_SIMPLICES = "min_simplices"
    MIN_DIAMETER = "min_diameter"
    MIN_WEIGHT = "min_weight"
    FRST_REACH = "frst_reach"

    @property
    def sense(self):
        return "maximize" if self is Objective.FRST_REACH else "minimize"

    @classmethod
    def from_name(cls, name: str) -> "Objective":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown objective {name!r}") from None


class ObjectiveCache:
    """Per-run caches: exact edge lengths and regularity verdicts by state key."""

    def __init__(self):
        self.edge_lengths = {}
        self.regular = {}
        self.values = {}


def _edge_length(config: PointConfig, edge, cache: ObjectiveCache | None):
    if cache is not None and edge in cache.edge_lengths:
        return cache.edge_lengths[edge]
    a = config.points[edge[0]]
    b = config.points[edge[1]]
    length = math.sqrt(sum(float(x - y) ** 2 for x, y in zip(a, b)))
    if cache is not None:
        cache.edge_lengths[edge] = length
    return length


def evaluate(
    objective: Objective,
    tri: Triangulation,
    config: PointConfig,
    cache: ObjectiveCache | None = None,
) -> float:
    """Objective value of a triangulation.

    MIN_WEIGHT sums Euclidean 1-skeleton edge lengths in double precision from
    the exact coordinates; the other metrics are exact integers.
    """
    if cache is not None:
        hit = cache.values.get((objective, tri.canonical_key))
        if hit is not None:
            return hit
    if objective is Objective.MIN_SIMPLICES:
        value = float(len(tri.simplices))
    elif objective is Objective.MIN_DIAMETER:
        value = float(dual_diameter(tri))
    elif objective is Objective.MIN_WEIGHT:
        value = sum(_edge_length(config, e, cache) for e in tri.skeleton_edges())
    elif objective is Objective.FRST_REACH:
        value = 1.0 if fine_and_regular(tri, config, cache) else 0.0
    else:  # pragma: no cover
        raise ValueError(objective)
    if cache is not None:
        cache.values[(objective, tri.canonical_key)] = value
    return value


def fine_and_regular(
    tri: Triangulation, config: PointConfig, cache: ObjectiveCache | None = None
) -> bool:
    if not is_fine(tri, config):
        return False
    if cache is not None:
        hit = cache.regular.get(tri.canonical_key)
        if hit is not None:
            return hit
    flag, _witness = is_regular(tri, config)
    if cache is not None:
        cache.regular[tri.canonical_key] = flag
    return flag


def search_value(
    objective: Objective,
    tri: Triangulation,
    config: PointConfig,
    cache: ObjectiveCache | None = None,
) -> float:
    """Value in minimization convention (maximized objectives are negated)."""
    v = evaluate(objective, tri, config, cache)
    return -v if objective.sense == "maximize" else v


def reward(
    objective: Objective,
    tri: Triangulation,
    action: FlipAction,
    config: PointConfig,
    cache: ObjectiveCache | None = None,
) -> float:
    """Improvement in the objective induced by one flip.

    Minimization: f(before) - f(after); the sign is reversed for maximization.
    Sparse-reward reach episodes use their own terminal reward instead.
    """
    after = apply_flip(tri, action)
    delta = evaluate(objective, tri, config, cache) - evaluate(
        objective, after, config, cache
    )
    return -delta if objective.sense == "maximize" else delta


@dataclass(frozen=True)
class GapReport:
    """Per-instance relative gaps plus their mean and standard error."""

    instances: tuple  # of (label, best, reference, gap)
    mean: float
    stderr: float


def relative_gap(best_values, reference_values, labels=None) -> GapReport:
    """Per instance (best - ref) / ref; aggregate mean and standard error."""
    if len(best_values) != len(reference_values):
        raise ValueError("mismatched instance counts")
    if labels is None:
        labels = [str(i) for i in range(len(best_values))]
    rows = []
    gaps = []
    for label, best, ref in zip(labels, best_values, reference_values):
        ref = float(ref)
        if ref <= 0:
            raise ValueError(f"nonpositive reference value {ref} for {label}")
        gap = (float(best) - ref) / ref
        rows.append((label, float(best), ref, gap))
        gaps.append(gap)
    mean = sum(gaps) / len(gaps)
    if len(gaps) > 1:
        var = sum((g - mean) ** 2 for g in gaps) / (len(gaps) - 1)
        stderr = math.sqrt(var / len(gaps))
    else:
        stderr = 0.0
    return GapReport(instances=tuple(rows), mean=mean, stderr=stderr)
