"""Circuits, bistellar flips, neighbor enumeration, and flip-graph traversal.

A circuit is a minimal affinely dependent subset of the configuration; its
dependence signs split it into two parts whose induced local triangulations
can replace each other inside a larger triangulation whenever one of them is
realized with a common link.  Circuits are precomputed once per configuration,
so per-state flippability testing reduces to face and link lookups.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

from .errors import StaleAction
from .geometry import PointConfig, dependence_kernel
from .triangulation import Triangulation


@dataclass(frozen=True)
class Circuit:
    """Minimal affinely dependent vertex set with its signed dependence."""

    vertices: tuple  # sorted vertex indices, size <= dim+2
    coeffs: tuple  # Fractions, first nonzero entry +1, full support
    positive: tuple  # indices with positive coefficient
    negative: tuple  # indices with negative coefficient


@dataclass(frozen=True)
class FlipAction:
    """A feasible bistellar flip: circuit, realized side, link, and both joins."""

    circuit: Circuit
    realized_side: int  # +1 if the positive-part core is in the triangulation
    link: tuple  # sorted tuple of sorted link faces (vertex tuples)
    removed: tuple  # simplices currently in the triangulation
    inserted: tuple  # their replacement

    @property
    def action_id(self):
        return (self.circuit.vertices, self.realized_side)

    def reversed_side(self):
        return -self.realized_side


@dataclass(frozen=True)
class CircuitTable:
    """All circuits of one configuration, in vertex-tuple order."""

    config: PointConfig
    circuits: tuple

    def __len__(self):
        return len(self.circuits)


def enumerate_circuits(config: PointConfig) -> CircuitTable:
    """Scan all vertex subsets of size 2..dim+2 for minimal affine dependences.

    A subset is a circuit iff its dependence space is one-dimensional and the
    dependence has full support (every proper subset is then independent).
    """
    circuits = []
    for size in range(2, config.dim + 3):
        for subset in itertools.combinations(range(config.n), size):
            basis = dependence_kernel([config.points[i] for i in subset])
            if len(basis) != 1:
                continue
            lam = basis[0]
            if any(v == 0 for v in lam):
                continue
            first = next(v for v in lam if v != 0)
            lam = tuple(v / first for v in lam)
            circuits.append(
                Circuit(
                    vertices=subset,
                    coeffs=lam,
                    positive=tuple(i for i, v in zip(subset, lam) if v > 0),
                    negative=tuple(i for i, v in zip(subset, lam) if v < 0),
                )
            )
    circuits.sort(key=lambda c: c.vertices)
    return CircuitTable(config=config, circuits=tuple(circuits))


def _realize(tri: Triangulation, circuit: Circuit, side_part, other_part, side: int):
    """Try to realize one orientation of a circuit inside the triangulation."""
    face_map = tri.face_map()
    zset = frozenset(circuit.vertices)
    full_simplices = {frozenset(s) for s in tri.simplices}
    cores = []
    for p in side_part:
        core = zset - {p}
        if core in face_map:
            cores.append((core, face_map[core]))
        elif core in full_simplices:
            cores.append((core, [core]))  # full-dimensional circuit core
        else:
            return None
    link = None
    for core, members in cores:
        this_link = frozenset(s - core for s in members)
        if link is None:
            link = this_link
        elif link != this_link:
            return None
    removed = set()
    inserted = set()
    for p in side_part:
        core = zset - {p}
        for g in link:
            removed.add(tuple(sorted(core | g)))
    for q in other_part:
        core = zset - {q}
        for g in link:
            inserted.add(tuple(sorted(core | g)))
    return FlipAction(
        circuit=circuit,
        realized_side=side,
        link=tuple(sorted(tuple(sorted(g)) for g in link)),
        removed=tuple(sorted(removed)),
        inserted=tuple(sorted(inserted)),
    )


def flippable_circuits(tri: Triangulation, table: CircuitTable):
    """All feasible flip actions at ``tri``, in circuit-vertex-tuple order.

    A circuit yields an action iff for one sign orientation every maximal core
    face is a face of the triangulation and all core faces share one identical
    link; at most one orientation can be realized (asserted).
    """
    actions = []
    for circuit in table.circuits:
        plus = _realize(tri, circuit, circuit.positive, circuit.negative, +1)
        minus = _realize(tri, circuit, circuit.negative, circuit.positive, -1)
        if plus is not None and minus is not None:
            raise AssertionError(
                f"both sides of circuit {circuit.vertices} realized at once"
            )
        action = plus if plus is not None else minus
        if action is not None:
            actions.append(action)
    return actions


def apply_flip(tri: Triangulation, action: FlipAction) -> Triangulation:
    """Replace the realized local subtriangulation by the other side."""
    current = set(tri.simplices)
    removed = set(action.removed)
    if not removed <= current:
        raise StaleAction("action's removed set is not part of the triangulation")
    return Triangulation((current - removed) | set(action.inserted))


def reverse_action(tri_after: Triangulation, table: CircuitTable, action: FlipAction):
    """The action that undoes ``action`` from the flipped state."""
    for cand in flippable_circuits(tri_after, table):
        if (
            cand.circuit.vertices == action.circuit.vertices
            and cand.realized_side == -action.realized_side
        ):
            return cand
    raise AssertionError("reverse flip not found")


def neighbors(tri: Triangulation, table: CircuitTable):
    """Distinct one-flip successors of ``tri``."""
    out = {}
    for action in flippable_circuits(tri, table):
        nxt = apply_flip(tri, action)
        out.setdefault(nxt.canonical_key, nxt)
    return [out[k] for k in sorted(out)]


@dataclass
class ComponentResult:
    states: dict  # canonical key -> Triangulation, in discovery order
    edge_count: int
    truncated: bool
    expansions: int

    @property
    def keys(self):
        return set(self.states)

    def __len__(self):
        return len(self.states)


def enumerate_component(
    seed: Triangulation, table: CircuitTable, limit: int = 1_000_000
) -> ComponentResult:
    """Breadth-first traversal of the seed's flip-graph component.

    Stops after ``limit`` expansions with the truncation flag set; enumeration
    is exact whenever the component is smaller than the limit.  The edge count
    covers all flips discovered between expanded states and their neighbors.
    """
    states = {seed.canonical_key: seed}
    index = {seed.canonical_key: 0}
    queue = deque([seed])
    edges = set()
    expansions = 0
    truncated = False
    while queue:
        if expansions >= limit:
            truncated = True
            break
        current = queue.popleft()
        expansions += 1
        cur_idx = index[current.canonical_key]
        for nxt in neighbors(current, table):
            key = nxt.canonical_key
            if key not in states:
                states[key] = nxt
                index[key] = len(index)
                queue.append(nxt)
            a, b = cur_idx, index[key]
            edges.add((min(a, b), max(a, b)))
    return ComponentResult(
        states=states, edge_count=len(edges), truncated=truncated, expansions=expansions
    )
