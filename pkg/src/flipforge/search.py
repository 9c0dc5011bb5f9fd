"""Budgeted local-search baselines over the implicit flip graph.

All strategies consume exactly one budget unit per outer-loop step, whether the
step applies a flip, rejects a proposal, or is forced to stay; this keeps the
flip budget comparable across methods.  Values are always handled in
minimization convention (see :func:`flipforge.objectives.search_value`).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .flips import CircuitTable, apply_flip, flippable_circuits
from .geometry import PointConfig
from .objectives import Objective, ObjectiveCache, search_value
from .triangulation import Triangulation, validate

STRATEGY_NAMES = (
    "greedy",
    "dfs",
    "befs",
    "anneal",
    "random_walk",
    "nls_accept",
    "policy",
)


@dataclass
class SearchContext:
    config: PointConfig
    table: CircuitTable
    objective: Objective
    cache: ObjectiveCache
    rng: np.random.Generator
    check_states: bool = False

    def value(self, tri):
        return search_value(self.objective, tri, self.config, self.cache)


@dataclass
class StepRecord:
    step: int
    action_id: tuple | None
    value: float
    best: float


@dataclass
class SearchTrace:
    """Visited states with per-step values and the best state found."""

    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    best_state: Triangulation | None = None
    best_value: float = math.inf
    budget_used: int = 0

    def visit(self, step, action_id, tri, value):
        self.records.append(StepRecord(step, action_id, value, min(self.best_value, value)))
        self.states.append(tri)
        if value < self.best_value:
            self.best_value = value
            self.best_state = tri


class Strategy:
    """One instance per worker; ``reset`` binds it to a start state."""

    name = "base"

    def reset(self, tri, ctx: SearchContext):
        pass

    def step(self, tri, actions, ctx: SearchContext):
        """Return the successor triangulation (or ``tri`` to stay)."""
        raise NotImplementedError


class GreedyStrategy(Strategy):
    """Always applies the best flip, falling back to the least-bad one."""

    name = "greedy"

    def step(self, tri, actions, ctx):
        if not actions:
            return tri, None
        best = None
        for action in actions:
            nxt = apply_flip(tri, action)
            v = ctx.value(nxt)
            if best is None or v < best[0]:
                best = (v, action, nxt)
        return best[2], best[1]


class DfsStrategy(Strategy):
    """Depth-first descent: improving unvisited neighbors go on a stack (best on
    top); with none left the walk backtracks to the most recent pending state."""

    name = "dfs"

    def reset(self, tri, ctx):
        self.visited = {tri.canonical_key}
        self.stack = []

    def step(self, tri, actions, ctx):
        current_value = ctx.value(tri)
        children = []
        for action in actions:
            nxt = apply_flip(tri, action)
            if nxt.canonical_key in self.visited:
                continue
            v = ctx.value(nxt)
            if v < current_value:
                children.append((v, action.action_id, nxt, action))
        children.sort(key=lambda c: (c[0], c[1]), reverse=True)  # best pushed last
        self.stack.extend(children)
        while self.stack:
            v, _aid, nxt, action = self.stack.pop()
            if nxt.canonical_key not in self.visited:
                self.visited.add(nxt.canonical_key)
                return nxt, action
        return tri, None


class BefsStrategy(Strategy):
    """Best-first search over all discovered states; the harness teleports to
    the frontier minimum.  Frontier memory is capped with worst-value eviction."""

    name = "befs"

    def __init__(self, memory_cap=100_000):
        self.memory_cap = memory_cap

    def reset(self, tri, ctx):
        self.visited = {tri.canonical_key}
        self.frontier = []
        self.counter = 0
        self._expand(tri, ctx)

    def _expand(self, tri, ctx):
        for action in flippable_circuits(tri, ctx.table):
            nxt = apply_flip(tri, action)
            if nxt.canonical_key in self.visited:
                continue
            self.counter += 1
            heapq.heappush(self.frontier, (ctx.value(nxt), self.counter, nxt, action))
        if len(self.frontier) > self.memory_cap:
            keep = heapq.nsmallest(self.memory_cap, self.frontier)
            heapq.heapify(keep)
            self.frontier = keep

    def step(self, tri, actions, ctx):
        while self.frontier:
            _v, _c, nxt, action = heapq.heappop(self.frontier)
            if nxt.canonical_key in self.visited:
                continue
            self.visited.add(nxt.canonical_key)
            self._expand(nxt, ctx)
            return nxt, action
        return tri, None


class AnnealStrategy(Strategy):
    """Uniform proposals accepted with min(1, exp(-delta / T_t)).

    The temperature decays geometrically over the budget, and deltas are
    standardized by the seed state's absolute value so T0 = 1.0 is meaningful
    across objectives.
    """

    name = "anneal"

    def __init__(self, initial_temperature=1.0, decay=None, final_fraction=1e-3):
        self.initial_temperature = initial_temperature
        self.decay = decay
        self.final_fraction = final_fraction
        self._budget = None

    def bind_budget(self, budget):
        self._budget = budget

    def reset(self, tri, ctx):
        self.t = 0
        self.scale = abs(ctx.value(tri)) or 1.0
        if self.decay is not None:
            self.alpha = self.decay
        elif self._budget:
            self.alpha = self.final_fraction ** (1.0 / self._budget)
        else:
            self.alpha = 1.0

    def acceptance_probability(self, delta, temperature):
        if delta <= 0:
            return 1.0
        return math.exp(-delta / temperature)

    def step(self, tri, actions, ctx):
        temperature = self.initial_temperature * self.alpha**self.t
        self.t += 1
        if not actions:
            return tri, None
        action = actions[ctx.rng.integers(len(actions))]
        nxt = apply_flip(tri, action)
        delta = (ctx.value(nxt) - ctx.value(tri)) / self.scale
        if ctx.rng.random() < self.acceptance_probability(delta, temperature):
            return nxt, action
        return tri, None


class RandomWalkStrategy(Strategy):
    """Uniformly random feasible flip; no memory, no objective awareness."""

    name = "random_walk"

    def step(self, tri, actions, ctx):
        if not actions:
            return tri, None
        action = actions[ctx.rng.integers(len(actions))]
        return apply_flip(tri, action), action


class AcceptanceStrategy(Strategy):
    """Annealing-style proposals gated by a learned acceptance probability
    computed from the pooled embedding of the current state."""

    name = "nls_accept"

    def __init__(self, model):
        self.model = model  # PolicyModel with actor_kind "nls_accept"

    def step(self, tri, actions, ctx):
        if not actions:
            return tri, None
        action = actions[ctx.rng.integers(len(actions))]
        prob = self.model.acceptance_probability(ctx.config, tri)
        if ctx.rng.random() < prob:
            return apply_flip(tri, action), action
        return tri, None


class PolicyStrategy(Strategy):
    """Learned flip ranking: scores all feasible actions and picks one."""

    name = "policy"

    def __init__(self, model, mode="argmax"):
        if mode not in ("argmax", "sample"):
            raise ValueError(f"unknown policy mode {mode!r}")
        self.model = model
        self.mode = mode

    def step(self, tri, actions, ctx):
        if not actions:
            return tri, None
        probs = self.model.action_probabilities(ctx.config, tri, actions)
        if self.mode == "argmax":
            idx = int(np.argmax(probs))
        else:
            idx = int(ctx.rng.choice(len(actions), p=probs))
        action = actions[idx]
        return apply_flip(tri, action), action


def make_strategy(name, *, model=None, params=None) -> Strategy:
    params = dict(params or {})
    if name == "greedy":
        return GreedyStrategy()
    if name == "dfs":
        return DfsStrategy()
    if name == "befs":
        return BefsStrategy(**params)
    if name == "anneal":
        return AnnealStrategy(**params)
    if name == "random_walk":
        return RandomWalkStrategy()
    if name == "nls_accept":
        if model is None:
            raise ValueError("nls_accept strategy needs a model")
        return AcceptanceStrategy(model)
    if name == "policy":
        if model is None:
            raise ValueError("policy strategy needs a model")
        return PolicyStrategy(model, **params)
    raise ValueError(f"unknown strategy {name!r}")


def run_budgeted(
    strategy: Strategy,
    seed_tri: Triangulation,
    objective: Objective,
    budget: int,
    *,
    config: PointConfig,
    table: CircuitTable,
    rng: np.random.Generator,
    cache: ObjectiveCache | None = None,
    check_states: bool = False,
) -> SearchTrace:
    """Run exactly ``budget`` strategy steps from the seed, tracking the best.

    Deterministic given the RNG seed.  With ``check_states`` every visited
    state is validated against the configuration (used by the test matrix).
    """
    ctx = SearchContext(
        config=config,
        table=table,
        objective=objective,
        cache=cache if cache is not None else ObjectiveCache(),
        rng=rng,
        check_states=check_states,
    )
    if isinstance(strategy, AnnealStrategy):
        strategy.bind_budget(budget)
    trace = SearchTrace()
    current = seed_tri
    if check_states and not validate(current, config):
        raise AssertionError("invalid seed triangulation")
    trace.visit(0, None, current, ctx.value(current))
    strategy.reset(current, ctx)
    for step in range(1, budget + 1):
        actions = flippable_circuits(current, table)
        nxt, action = strategy.step(current, actions, ctx)
        assert nxt is current or validate(nxt, config).ok
        if check_states and nxt is not current and not validate(nxt, config):
            raise AssertionError("strategy produced an invalid state")
        current = nxt
        trace.visit(step, action.action_id if action else None, current, ctx.value(current))
        trace.budget_used = step
    return trace
