"""Fine-regular-star discovery on lattice polytopes with an interior origin.

The sampling loop lifts random heights to a regular start, runs a short
locator episode toward a fine regular state, closes the find into a star
triangulation by sinking the origin, and keeps a ledger of distinct results
with a consecutive-retry stopping rule.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateHeights, FlipForgeError
from .flips import CircuitTable, apply_flip, enumerate_circuits, flippable_circuits
from .geometry import PointConfig, lattice_points, make_point, snap_to_rational
from .objectives import ObjectiveCache
from .triangulation import (
    Triangulation,
    is_fine,
    is_regular,
    is_star,
    lower_facet_values_at,
    regular_from_heights,
    validate,
)


@dataclass(frozen=True)
class LatticeConfig:
    """Point configuration over ALL lattice points of a polytope, origin interior.

    Optional metadata (a label such as a Hodge number) is stored verbatim and
    never computed.
    """

    config: PointConfig
    origin_index: int
    name: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.config.is_lattice:
            raise ValueError("lattice configuration required")
        full = lattice_points(self.config)
        if sorted(full) != sorted(self.config.points):
            raise ValueError("configuration must contain every lattice point of its hull")
        if self.config.points[self.origin_index] != make_point([0] * self.config.dim):
            raise ValueError("origin index does not point at the origin")

    @classmethod
    def from_config(cls, config: PointConfig, name="", metadata=None):
        origin = make_point([0] * config.dim)
        try:
            idx = config.points.index(origin)
        except ValueError:
            raise ValueError("origin is not a configuration point") from None
        return cls(config=config, origin_index=idx, name=name, metadata=metadata or {})

    @property
    def n(self):
        return self.config.n


@dataclass(frozen=True)
class FrstReport:
    fine: bool
    regular: bool
    star: bool

    @property
    def ok(self):
        return self.fine and self.regular and self.star


def is_frst(tri: Triangulation, lattice: LatticeConfig, cache: ObjectiveCache | None = None):
    """Check fine, regular, and star separately; returns an FrstReport."""
    fine = is_fine(tri, lattice.config)
    if cache is not None and tri.canonical_key in cache.regular:
        regular = cache.regular[tri.canonical_key]
    else:
        regular, _w = is_regular(tri, lattice.config)
        if cache is not None:
            cache.regular[tri.canonical_key] = regular
    star = is_star(tri, lattice.config, lattice.origin_index)
    return FrstReport(fine=fine, regular=regular, star=star)


def star_closure(tri: Triangulation, lattice: LatticeConfig, witness=None) -> Triangulation:
    """Sink the origin until every lower facet of the recomputed lift holds it.

    The input must be fine and regular; its witness heights are reused and the
    origin height is set one unit below the minimum of all lower-facet planes
    of the remaining lifted points, extended to the origin.  Any lower facet
    avoiding the origin would then be violated by the origin's lift, so the
    result is a star triangulation; the boundary structure (hence fineness)
    is untouched because non-origin heights stay fixed.  Degenerate retries
    jitter the non-origin heights deterministically (bounded at 10 attempts).
    """
    config = lattice.config
    origin = lattice.origin_index
    if witness is None:
        regular, witness = is_regular(tri, config)
        if not regular:
            raise ValueError("star closure requires a regular input")
    heights = [Fraction(h) for h in witness]

    for attempt in range(10):
        others = [p for i, p in enumerate(config.points) if i != origin]
        other_heights = [h for i, h in enumerate(heights) if i != origin]
        rest = PointConfig(config.dim, others, is_lattice=False)
        bound = min(lower_facet_values_at(rest, other_heights, config.points[origin]))
        sunk = list(heights)
        sunk[origin] = bound - 1
        try:
            closed = regular_from_heights(config, sunk)
        except DegenerateHeights:
            closed = None
        if (
            closed is not None
            and is_fine(closed, config)
            and is_star(closed, config, origin)
            and is_regular(closed, config)[0]
        ):
            return closed
        bump = Fraction(1, 10 ** (9 + attempt))
        heights = [h + (bump * (i + 1) if i != origin else 0) for i, h in enumerate(heights)]
    raise FlipForgeError("star closure failed after 10 height perturbations")


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    found: Triangulation | None
    closed: Triangulation | None
    visited_keys: list


def _fine_regular(tri, lattice, cache):
    if not is_fine(tri, lattice.config):
        return False
    hit = cache.regular.get(tri.canonical_key)
    if hit is None:
        hit, _w = is_regular(tri, lattice.config)
        cache.regular[tri.canonical_key] = hit
    return hit


def nearby_frst_episode(
    start: Triangulation,
    chooser,
    lattice: LatticeConfig,
    table: CircuitTable,
    rng: np.random.Generator,
    budget: int = 50,
    cache: ObjectiveCache | None = None,
    close: bool = True,
) -> EpisodeResult:
    """Sparse-reward search episode: succeed on the first fine regular state.

    ``chooser(tri, actions, rng)`` picks a flip action or None to stop; the
    found state is closed into a star triangulation on success.
    """
    cache = cache if cache is not None else ObjectiveCache()
    current = start
    visited = [current.canonical_key]
    for step in range(budget + 1):
        if _fine_regular(current, lattice, cache):
            closed = star_closure(current, lattice) if close else None
            return EpisodeResult(True, step, current, closed, visited)
        if step == budget:
            break
        actions = flippable_circuits(current, table)
        if not actions:
            break
        action = chooser(current, actions, rng)
        if action is None:
            break
        current = apply_flip(current, action)
        assert validate(current, lattice.config).ok
        visited.append(current.canonical_key)
    return EpisodeResult(False, len(visited) - 1, None, None, visited)


def random_walk_chooser(tri, actions, rng):
    return actions[rng.integers(len(actions))]


def lift_only_chooser(tri, actions, rng):
    return None  # no search: only the lifted start is checked


def policy_chooser(model, config, mode="argmax"):
    def choose(tri, actions, rng):
        probs = model.action_probabilities(config, tri, actions)
        if mode == "argmax":
            return actions[int(np.argmax(probs))]
        return actions[int(rng.choice(len(actions), p=probs))]

    return choose


@dataclass(frozen=True)
class SamplerConfig:
    height_std: float = 1.0
    max_seconds: float = 300.0
    max_iterations: int = 1024
    retry_limit: int = 50
    flip_budget: int = 50

    def __post_init__(self):
        for name in ("height_std", "max_seconds", "flip_budget"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0 or self.retry_limit < 1:
            raise ValueError("bad iteration or retry bound")


@dataclass
class LedgerEntry:
    iteration: int
    elapsed_ms: int
    new_key: bool
    cumulative: int
    key: tuple | None = None


@dataclass
class FrstLedger:
    """Distinct star-closed finds with a timestamped discovery log."""

    entries: list = field(default_factory=list)
    triangulations: dict = field(default_factory=dict)  # key -> Triangulation

    @property
    def keys(self):
        return set(self.triangulations)

    def __len__(self):
        return len(self.triangulations)


class VirtualClock:
    """Deterministic stand-in for wall time: one millisecond per tick."""

    def __init__(self):
        self.ticks = 0

    def tick(self):
        self.ticks += 1

    def elapsed(self):
        return self.ticks / 1000.0


class WallClock:
    def __init__(self):
        self.start = time.monotonic()

    def tick(self):
        pass

    def elapsed(self):
        return time.monotonic() - self.start


def sample_frsts(
    lattice: LatticeConfig,
    sampler: SamplerConfig,
    chooser,
    rng: np.random.Generator,
    table: CircuitTable | None = None,
    clock=None,
    cache: ObjectiveCache | None = None,
) -> FrstLedger:
    """Budgeted sampling loop with the consecutive-retry stopping rule.

    Every ledger insertion is re-verified fine+regular+star.  Stops on the
    iteration cap, the time cap, or ``retry_limit`` consecutive iterations
    that discover nothing new.
    """
    config = lattice.config
    table = table if table is not None else enumerate_circuits(config)
    clock = clock if clock is not None else VirtualClock()
    cache = cache if cache is not None else ObjectiveCache()
    ledger = FrstLedger()
    consecutive_retries = 0
    iteration = 0
    while (
        iteration < sampler.max_iterations
        and clock.elapsed() < sampler.max_seconds
        and consecutive_retries < sampler.retry_limit
    ):
        start = _lifted_start(config, sampler, rng)
        result = nearby_frst_episode(
            start,
            chooser,
            lattice,
            table,
            rng,
            budget=sampler.flip_budget,
            cache=cache,
        )
        clock.tick()
        new = False
        if result.success:
            closed = result.closed
            report = is_frst(closed, lattice, cache)
            if not report.ok:
                raise AssertionError("star closure produced a non-FRST state")
            key = closed.canonical_key
            if key not in ledger.triangulations:
                ledger.triangulations[key] = closed
                new = True
        consecutive_retries = 0 if new else consecutive_retries + 1
        iteration += 1
        ledger.entries.append(
            LedgerEntry(
                iteration=iteration,
                elapsed_ms=int(round(clock.elapsed() * 1000)),
                new_key=new,
                cumulative=len(ledger.triangulations),
                key=key if new else None,
            )
        )
    return ledger


def _lifted_start(config: PointConfig, sampler: SamplerConfig, rng) -> Triangulation:
    for _attempt in range(256):
        raw = rng.normal(0.0, sampler.height_std, size=config.n)
        heights = snap_to_rational(raw)
        try:
            return regular_from_heights(config, heights)
        except DegenerateHeights:
            continue
    raise FlipForgeError("could not draw non-degenerate heights in 256 attempts")
