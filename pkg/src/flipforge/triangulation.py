"""Triangulations as values: validity, identity, links, duals, and regularity.

A triangulation is a sorted tuple of maximal simplices (sorted vertex-index
tuples) over some :class:`~flipforge.geometry.PointConfig`.  Operations take
the configuration explicitly, so triangulation values stay cheap to copy and
hash and can be shared freely across workers.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from . import lp
from .errors import DegenerateConfig, DegenerateHeights
from .geometry import (
    PointConfig,
    affine_dependence,
    affine_rank,
    make_point,
    simplex_volume,
)

Simplex = tuple  # sorted tuple of vertex indices, length dim+1
Heights = tuple  # one Fraction per configuration point


class Triangulation:
    """Immutable set of maximal simplices with a canonical, hashable identity."""

    __slots__ = ("simplices", "_face_map", "_skeleton", "_hash")

    def __init__(self, simplices):
        cleaned = sorted({tuple(sorted(int(v) for v in s)) for s in simplices})
        if not cleaned:
            raise ValueError("a triangulation needs at least one simplex")
        size = len(cleaned[0])
        for s in cleaned:
            if len(s) != size or len(set(s)) != size:
                raise ValueError(f"malformed simplex {s}")
        self.simplices = tuple(cleaned)
        self._face_map = None
        self._skeleton = None
        self._hash = hash(self.simplices)

    @property
    def canonical_key(self):
        """Equal keys iff equal simplex sets; stable across runs and platforms."""
        return self.simplices

    def __eq__(self, other):
        return isinstance(other, Triangulation) and self.simplices == other.simplices

    def __hash__(self):
        return self._hash

    def __len__(self):
        return len(self.simplices)

    def __repr__(self):
        return f"Triangulation({len(self.simplices)} simplices)"

    def __contains__(self, simplex):
        return tuple(simplex) in set(self.simplices)

    @property
    def vertex_union(self):
        return frozenset(v for s in self.simplices for v in s)

    def face_map(self):
        """Every proper subset of every maximal simplex -> containing simplices."""
        if self._face_map is None:
            fm = {}
            for s in self.simplices:
                sset = frozenset(s)
                for size in range(1, len(s)):
                    for face in itertools.combinations(s, size):
                        fm.setdefault(frozenset(face), []).append(sset)
            self._face_map = fm
        return self._face_map

    def skeleton_edges(self):
        """Sorted 1-skeleton edges (i, j) with i < j."""
        if self._skeleton is None:
            edges = set()
            for s in self.simplices:
                edges.update(itertools.combinations(s, 2))
            self._skeleton = tuple(sorted(edges))
        return self._skeleton

    def boundary_faces(self):
        """(d-1)-faces together with their occurrence counts."""
        counts = {}
        for s in self.simplices:
            for face in itertools.combinations(s, len(s) - 1):
                counts[face] = counts.get(face, 0) + 1
        return counts


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    first_violation: str | None = None
    details: tuple = ()

    def __bool__(self):
        return self.ok


def validate(tri: Triangulation, config: PointConfig) -> ValidityReport:
    """Certify a triangulation without pairwise intersection tests.

    Clauses, reported by letter:
      a. simplex volumes sum exactly to the hull volume
      b. every (d-1)-face occurs in at most two simplices
      c. every (d-1)-face occurring once lies inside a hull facet
      d. all vertex ids are valid configuration indices
      e. every simplex is nondegenerate
    Together these rule out overlaps, gaps, and improper face meetings.
    """
    failures = []
    n = config.n
    ids_ok = all(0 <= v < n for s in tri.simplices for v in s)
    sizes_ok = all(len(s) == config.dim + 1 for s in tri.simplices)
    if not ids_ok or not sizes_ok:
        failures.append(("d", "vertex ids outside the configuration"))
        return ValidityReport(False, "d", tuple(failures))

    volume_sum = Fraction(0)
    degenerate = []
    for s in tri.simplices:
        v = simplex_volume([config.points[i] for i in s])
        if v == 0:
            degenerate.append(s)
        volume_sum += v
    hull_volume = config.hull_volume()
    if volume_sum != hull_volume:
        failures.append(("a", f"volume sum {volume_sum} != hull volume {hull_volume}"))

    counts = tri.boundary_faces()
    over = [f for f, c in counts.items() if c > 2]
    if over:
        failures.append(("b", f"face {over[0]} occurs more than twice"))

    facets = config.hull().facets
    for face, c in counts.items():
        if c != 1:
            continue
        fs = set(face)
        if not any(fs <= facet.vertex_ids for facet in facets):
            failures.append(("c", f"once-only face {face} not on the hull boundary"))
            break

    if degenerate:
        failures.append(("e", f"degenerate simplex {degenerate[0]}"))

    if failures:
        failures.sort(key=lambda item: item[0])
        return ValidityReport(False, failures[0][0], tuple(failures))
    return ValidityReport(True)


def canonical_key(tri: Triangulation):
    return tri.canonical_key


def link_of(tri: Triangulation, face):
    """Maximal elements of the link of ``face``: {max(sigma) - face : face <= sigma}."""
    fs = frozenset(int(v) for v in face)
    if not fs:
        return frozenset(frozenset(s) for s in tri.simplices)
    containing = [frozenset(s) for s in tri.simplices if fs <= set(s)]
    if not containing:
        raise ValueError(f"face {sorted(fs)} is not a face of the triangulation")
    return frozenset(s - fs for s in containing)


@dataclass(frozen=True)
class DualGraph:
    nodes: tuple
    edges: tuple
    adjacency: dict = field(compare=False, repr=False)


def dual_graph(tri: Triangulation) -> DualGraph:
    """One node per maximal simplex; edges join simplices sharing a (d-1)-face."""
    face_to = {}
    for idx, s in enumerate(tri.simplices):
        for face in itertools.combinations(s, len(s) - 1):
            face_to.setdefault(face, []).append(idx)
    edges = set()
    for members in face_to.values():
        for a, b in itertools.combinations(members, 2):
            edges.add((min(a, b), max(a, b)))
    adjacency = {i: [] for i in range(len(tri.simplices))}
    for a, b in sorted(edges):
        adjacency[a].append(b)
        adjacency[b].append(a)
    return DualGraph(
        nodes=tuple(range(len(tri.simplices))),
        edges=tuple(sorted(edges)),
        adjacency=adjacency,
    )


def dual_diameter(tri: Triangulation) -> int:
    """Graph diameter of the dual graph via all-pairs breadth-first search."""
    graph = dual_graph(tri)
    best = 0
    for source in graph.nodes:
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in graph.adjacency[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        if len(dist) != len(graph.nodes):
            raise ValueError("dual graph is disconnected")
        best = max(best, max(dist.values()))
    return best


def is_fine(tri: Triangulation, config: PointConfig) -> bool:
    """True iff the simplices use every point of the configuration."""
    return tri.vertex_union == frozenset(range(config.n))


def is_star(tri: Triangulation, config: PointConfig, origin_index: int) -> bool:
    """True iff every maximal simplex contains the origin index."""
    if not 0 <= origin_index < config.n:
        raise ValueError(f"origin index {origin_index} out of range")
    return all(origin_index in s for s in tri.simplices)


def _barycentric(point, simplex_points):
    """Affine coordinates of ``point`` in the simplex, or None if outside."""
    lam = _affine_coordinates(point, simplex_points)
    if lam is None or any(c < 0 for c in lam):
        return None
    return lam


def _affine_coordinates(point, simplex_points):
    k = len(simplex_points)
    dim = len(point)
    rows = [[simplex_points[j][i] for j in range(k)] for i in range(dim)]
    rows.append([Fraction(1)] * k)
    target = list(point) + [Fraction(1)]
    m = [[Fraction(v) for v in row] + [Fraction(t)] for row, t in zip(rows, target)]
    nrows = len(m)
    pivots = []
    r = 0
    for col in range(k):
        pivot = next((i for i in range(r, nrows) if m[i][col] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = m[r][col]
        m[r] = [v / inv for v in m[r]]
        for i in range(nrows):
            if i != r and m[i][col] != 0:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(col)
        r += 1
    for i in range(r, nrows):
        if m[i][k] != 0:
            return None  # inconsistent: point outside the affine hull
    lam = [Fraction(0)] * k
    for ri, col in enumerate(pivots):
        lam[col] = m[ri][k]
    return tuple(lam)


def regularity_constraints(tri: Triangulation, config: PointConfig):
    """Rows (indexed over config points) whose feasibility w.r.t. >= 1 is regularity.

    One row per interior (d-1)-face: the unique affine dependence over the two
    adjacent simplices' vertex union, signed so the opposite vertices get
    positive coefficients.  One row per unused point: its lift must sit
    strictly above the lifted simplex that contains it.
    """
    rows = []
    counts = {}
    for s in tri.simplices:
        sset = frozenset(s)
        for face in itertools.combinations(s, len(s) - 1):
            counts.setdefault(face, []).append(sset)
    for face, members in sorted(counts.items()):
        if len(members) != 2:
            continue
        a = next(iter(members[0] - set(face)))
        b = next(iter(members[1] - set(face)))
        ids = list(face) + [a, b]
        lam = affine_dependence([config.points[i] for i in ids])
        a_pos = len(face)
        if lam[a_pos] == 0:
            raise AssertionError("fold dependence missing the opposite vertex")
        if lam[a_pos] < 0:
            lam = tuple(-v for v in lam)
        row = [Fraction(0)] * config.n
        for i, coeff in zip(ids, lam):
            row[i] += coeff
        rows.append(row)

    used = tri.vertex_union
    for q in range(config.n):
        if q in used:
            continue
        placed = False
        for s in tri.simplices:
            coords = _barycentric(config.points[q], [config.points[i] for i in s])
            if coords is None:
                continue
            row = [Fraction(0)] * config.n
            row[q] = Fraction(1)
            for i, c in zip(s, coords):
                row[i] -= c
            rows.append(row)
            placed = True
            break
        if not placed:
            raise AssertionError(f"point {q} not covered by any simplex")
    return rows


def is_regular(tri: Triangulation, config: PointConfig):
    """Decide regularity; returns (flag, witness heights or None).

    Feasibility of the local-folding system at strictness >= 1 is decided by an
    exact rational phase-1 simplex method with Bland's rule.
    """
    rows = regularity_constraints(tri, config)
    if not rows:
        return True, tuple(Fraction(0) for _ in range(config.n))
    witness = lp.feasible_point(rows, [Fraction(1)] * len(rows))
    if witness is None:
        return False, None
    return True, tuple(witness)


def regular_from_heights(config: PointConfig, heights) -> Triangulation:
    """Project the lower hull of the height lift back to a triangulation.

    Raises :class:`DegenerateHeights` when the lift is flat or some lower
    facet is not a simplex; callers resample heights in that case.
    """
    heights = [Fraction(h) for h in heights]
    if len(heights) != config.n:
        raise ValueError("one height per configuration point required")
    lifted = [tuple(p) + (w,) for p, w in zip(config.points, heights)]
    try:
        lifted_config = PointConfig(config.dim + 1, lifted, is_lattice=False)
    except DegenerateConfig as exc:
        # a flat lift projects to the single cell conv(all points), which is a
        # triangulation exactly when the configuration is itself a simplex
        if config.n == config.dim + 1:
            return Triangulation([tuple(range(config.n))])
        raise DegenerateHeights("flat height lift") from exc
    hull = lifted_config.hull()
    cells = []
    for facet in hull.facets:
        if facet.normal[-1] >= 0:
            continue  # vertical facets never project to cells
        cell = tuple(sorted(facet.vertex_ids))
        if len(cell) != config.dim + 1:
            raise DegenerateHeights(f"lower facet with {len(cell)} vertices is not a simplex")
        cells.append(cell)
    if not cells:
        raise DegenerateHeights("no lower facets")
    return Triangulation(cells)


def lower_facet_values_at(config: PointConfig, heights, point):
    """Values at ``point`` of every lower-hull facet plane of the height lift."""
    heights = [Fraction(h) for h in heights]
    point = make_point(point)
    lifted = [tuple(p) + (w,) for p, w in zip(config.points, heights)]
    try:
        lifted_config = PointConfig(config.dim + 1, lifted, is_lattice=False)
    except DegenerateConfig:
        # flat lift: the heights are an affine function of the coordinates and
        # the whole configuration is the single lower facet
        return [_affine_height_at(config, heights, point)]
    values = []
    for facet in lifted_config.hull().facets:
        if facet.normal[-1] >= 0:
            continue
        # solve normal . (point, z) = offset for z
        partial = sum(n * c for n, c in zip(facet.normal[:-1], point))
        values.append((facet.offset - partial) / facet.normal[-1])
    if not values:
        raise DegenerateHeights("no lower facets")
    return values


def lower_envelope_value(config: PointConfig, heights, point):
    """Exact lower-envelope value at ``point``: the max of the facet planes."""
    return max(lower_facet_values_at(config, heights, point))


def _affine_height_at(config: PointConfig, heights, point):
    """Evaluate the affine function through a flat lift at ``point``."""
    base = [config.points[0]]
    base_h = [heights[0]]
    for p, w in zip(config.points[1:], heights[1:]):
        if len(base) == config.dim + 1:
            break
        if affine_rank(base + [p]) == len(base):
            base.append(p)
            base_h.append(w)
    coords = _affine_coordinates(point, base)
    if coords is None:
        raise DegenerateHeights("point outside the affine hull of a flat lift")
    return sum(c * w for c, w in zip(coords, base_h))
