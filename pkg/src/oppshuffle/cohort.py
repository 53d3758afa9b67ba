"""Cohort construction from contact graphs.

Experiments need N participants forming a connected subgraph of the
contact graph (edges = user pairs with enough recorded exchanges).  Two
selection strategies: grow a random connected subset edge by edge, or
union randomly drawn maximal cliques until N users are collected, trimming
overflow and restarting when the result is disconnected.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    DisconnectedGraphError,
    InfeasibleCohortError,
    InvalidParameterError,
    TraceFormatError,
)
from .mobility import ContactEvent

DEFAULT_MIN_WEIGHT = 10
RESTART_CAP = 10_000
REDRAW_CAP = 10_000

RANDOM_CONNECTED = "random-connected"
CLIQUE_COMBINED = "clique-combined"

GRAPH_HEADER = ["user_a", "user_b", "weight"]


@dataclass(frozen=True)
class ContactGraph:
    """Undirected contact graph; edge weights count exchanges over the trace."""

    nodes: tuple[int, ...]
    edges: dict[tuple[int, int], int]

    def neighbors(self, u: int) -> set[int]:
        return self._adj().get(u, set())

    def _adj(self) -> dict[int, set[int]]:
        adj = getattr(self, "_adj_cache", None)
        if adj is None:
            adj = {u: set() for u in self.nodes}
            for a, b in self.edges:
                adj[a].add(b)
                adj[b].add(a)
            object.__setattr__(self, "_adj_cache", adj)
        return adj

    def isolated_nodes(self) -> tuple[int, ...]:
        """Nodes that survived no edge (present in events, below min weight)."""
        adj = self._adj()
        return tuple(u for u in self.nodes if not adj[u])

    def component_of(self, start: int, members: set[int] | None = None) -> set[int]:
        """BFS component of ``start``, optionally restricted to ``members``."""
        adj = self._adj()
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen and (members is None or v in members):
                    seen.add(v)
                    queue.append(v)
        return seen

    def is_connected_subset(self, members) -> bool:
        members = set(members)
        if not members:
            return False
        start = next(iter(members))
        return self.component_of(start, members) == members


@dataclass(frozen=True)
class Cohort:
    """A connected node subset selected for a trial.

    ``members`` is sorted ascending; that order fixes the NodeId mapping
    (member k becomes node k+1) used everywhere downstream.
    """

    members: tuple[int, ...]
    provenance: str
    max_pair_hops: int
    median_pair_hops: int

    @property
    def n(self) -> int:
        return len(self.members)


def build_contact_graph(
    events: list[ContactEvent], min_weight: int = DEFAULT_MIN_WEIGHT
) -> ContactGraph:
    """Count events per pair and keep edges with at least ``min_weight``."""
    weights: dict[tuple[int, int], int] = {}
    nodes: set[int] = set()
    for ev in events:
        nodes.update(ev.pair)
        weights[ev.pair] = weights.get(ev.pair, 0) + 1
    edges = {pair: w for pair, w in weights.items() if w >= min_weight}
    return ContactGraph(nodes=tuple(sorted(nodes)), edges=edges)


def hop_statistics(g: ContactGraph, members) -> tuple[int, int]:
    """(max, lower-median) hop distance over unordered member pairs in the
    induced subgraph."""
    members = sorted(set(members))
    if len(members) < 2:
        raise InvalidParameterError("need at least 2 members for hop statistics")
    member_set = set(members)
    adj = {u: g.neighbors(u) & member_set for u in members}
    dists = []
    for src in members:
        level = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in level:
                    level[v] = level[u] + 1
                    queue.append(v)
        if len(level) != len(members):
            raise DisconnectedGraphError("members do not form a connected subgraph")
        dists.extend(d for node, d in level.items() if node > src)
    dists.sort()
    return dists[-1], dists[(len(dists) - 1) // 2]


def _make_cohort(g: ContactGraph, members, provenance: str) -> Cohort:
    members = tuple(sorted(members))
    max_hops, median_hops = hop_statistics(g, members)
    return Cohort(
        members=members,
        provenance=provenance,
        max_pair_hops=max_hops,
        median_pair_hops=median_hops,
    )


def random_connected_cohort(
    g: ContactGraph, n: int, rng: np.random.Generator
) -> Cohort:
    """Grow a connected n-subset from a random seed node via random frontier
    edges.

    Fast but not uniform over connected subsets: high-degree regions are
    favored.  Seeds whose component is too small are rejected and redrawn.
    """
    if n < 1:
        raise InvalidParameterError(f"need n >= 1, got {n}")
    nodes = g.nodes
    if not any(len(g.component_of(u)) >= n for u in nodes):
        raise InfeasibleCohortError(f"no connected component of size >= {n}")
    while True:
        seed = int(nodes[rng.integers(len(nodes))])
        members = {seed}
        while len(members) < n:
            frontier = sorted(
                (u, v)
                for u in members
                for v in g.neighbors(u)
                if v not in members
            )
            if not frontier:
                break  # dead end: seed's component is too small
            members.add(frontier[rng.integers(len(frontier))][1])
        if len(members) == n:
            return _make_cohort(g, members, RANDOM_CONNECTED)


def maximal_cliques(g: ContactGraph) -> list[frozenset[int]]:
    """All maximal cliques (Bron-Kerbosch with pivoting), canonically sorted."""
    if not g.nodes:
        return []
    adj = {u: g.neighbors(u) for u in g.nodes}
    out: list[frozenset[int]] = []

    def expand(clique: set[int], candidates: set[int], excluded: set[int]):
        if not candidates and not excluded:
            out.append(frozenset(clique))
            return
        pivot = max(sorted(candidates | excluded), key=lambda u: len(adj[u] & candidates))
        for v in sorted(candidates - adj[pivot]):
            expand(clique | {v}, candidates & adj[v], excluded & adj[v])
            candidates.remove(v)
            excluded.add(v)

    expand(set(), set(g.nodes), set())
    return sorted(out, key=sorted)


def combine_cliques(
    cliques: list[frozenset[int]],
    n: int,
    g: ContactGraph,
    rng: np.random.Generator,
    min_fill_rule: bool = True,
) -> Cohort:
    """Union random cliques into a connected n-cohort.

    Draw a random clique; under the min-fill rule, cliques smaller than
    half the remaining gap are redrawn.  Union it in; if the set overflows
    n, trim to a uniform random n-subset.  When n members are collected but
    they are not connected, start over.  Gives up (infeasible-cohort) after
    10,000 restarts, or 10,000 consecutive min-fill rejections.
    """
    if not cliques:
        raise InvalidParameterError("need at least one clique")
    if n < 1:
        raise InvalidParameterError(f"need n >= 1, got {n}")
    universe = set().union(*cliques)
    if len(universe) < n:
        raise InfeasibleCohortError(
            f"cliques cover only {len(universe)} users, need {n}"
        )
    pool = sorted(cliques, key=sorted)
    for _ in range(RESTART_CAP):
        members: set[int] = set()
        rejections = 0
        while len(members) < n:
            cliq = pool[rng.integers(len(pool))]
            if min_fill_rule and len(cliq) < 0.5 * (n - len(members)):
                rejections += 1
                if rejections >= REDRAW_CAP:
                    raise InfeasibleCohortError(
                        "no clique satisfies the minimum-fill rule"
                    )
                continue
            rejections = 0
            members |= cliq
            if len(members) > n:
                keep = rng.choice(sorted(members), size=n, replace=False)
                members = {int(u) for u in keep}
        if g.is_connected_subset(members):
            return _make_cohort(g, members, CLIQUE_COMBINED)
    raise InfeasibleCohortError(
        f"no connected clique combination found in {RESTART_CAP} restarts"
    )


# --- file formats ---------------------------------------------------------


def write_graph_csv(g: ContactGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRAPH_HEADER)
        for (a, b), weight in sorted(g.edges.items()):
            w.writerow([a, b, weight])


def read_graph_csv(path) -> ContactGraph:
    edges = {}
    nodes = set()
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if line_no == 1:
                if [c.strip() for c in row] != GRAPH_HEADER:
                    raise TraceFormatError(f"expected header {','.join(GRAPH_HEADER)}", line_no)
                continue
            if len(row) != 3:
                raise TraceFormatError(f"expected 3 columns, got {len(row)}", line_no)
            try:
                a, b, w = int(row[0]), int(row[1]), int(row[2])
            except ValueError as exc:
                raise TraceFormatError(str(exc), line_no) from exc
            if a > b:
                a, b = b, a
            edges[(a, b)] = w
            nodes.update((a, b))
    return ContactGraph(nodes=tuple(sorted(nodes)), edges=edges)


def write_cohort_manifest(cohorts: list[Cohort], path) -> None:
    payload = [
        {
            "members": list(c.members),
            "provenance": c.provenance,
            "max_pair_hops": c.max_pair_hops,
            "median_pair_hops": c.median_pair_hops,
        }
        for c in cohorts
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
