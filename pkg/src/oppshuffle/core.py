"""The bilateral exchange protocol.

Nodes are numbered 1..N and data items 1..N*M; node i initially holds the
contiguous label block {(i-1)*M+1, ..., i*M}.  On contact, each party picks
a uniformly random half (floor of half for odd holdings) of its current
items and the two selections swap atomically.  Swapping half is what makes
a single exchange maximally unpredictable: the number of distinct k-item
selections, C(M, k), peaks at k = M//2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidPairError, InvalidParameterError

NodeId = int
DataItemId = int


@dataclass
class PossessionLedger:
    """Authoritative item -> holder mapping for one cohort.

    ``holdings`` maps each node to the set of item labels it currently
    holds.  The union over nodes is always the full label set 1..n*m and
    the sets are pairwise disjoint.
    """

    holdings: dict[NodeId, set[DataItemId]]
    cohort_size: int
    items_per_node: int

    def holder_of(self, item: DataItemId) -> NodeId:
        for node, items in self.holdings.items():
            if item in items:
                return node
        raise KeyError(item)

    def all_items(self) -> set[DataItemId]:
        out: set[DataItemId] = set()
        for items in self.holdings.values():
            out |= items
        return out


def init_cohort(n: int, m: int) -> PossessionLedger:
    """Create the initial ledger: node i holds labels (i-1)*m+1 .. i*m."""
    if n < 1 or m < 1:
        raise InvalidParameterError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    holdings = {i: set(range((i - 1) * m + 1, i * m + 1)) for i in range(1, n + 1)}
    return PossessionLedger(holdings=holdings, cohort_size=n, items_per_node=m)


def select_half(holding: set[DataItemId], rng: np.random.Generator) -> set[DataItemId]:
    """Pick a uniformly random subset of size floor(|holding|/2).

    An empty or single-item holding yields the empty set: the node has
    nothing it can trade away.
    """
    k = len(holding) // 2
    if k == 0:
        return set()
    items = np.fromiter(holding, dtype=np.int64, count=len(holding))
    items.sort()  # canonical order so the draw depends only on rng state
    picked = rng.choice(items, size=k, replace=False)
    return set(int(x) for x in picked)


def exchange(
    ledger: PossessionLedger, i: NodeId, j: NodeId, rng: np.random.Generator
) -> PossessionLedger:
    """Swap random halves between nodes i and j, in place.

    Both selections are made against the pre-exchange holdings and applied
    atomically, so an item cannot bounce twice within one exchange.  Returns
    the ledger for chaining.
    """
    if i == j:
        raise InvalidPairError(f"node {i} cannot exchange with itself")
    out_i = select_half(ledger.holdings[i], rng)
    out_j = select_half(ledger.holdings[j], rng)
    ledger.holdings[i] -= out_i
    ledger.holdings[j] -= out_j
    ledger.holdings[i] |= out_j
    ledger.holdings[j] |= out_i
    return ledger


def binomial(m: int, k: int) -> int:
    """C(m, k) with exact integer arithmetic.

    Python integers are arbitrary precision, so the result cannot silently
    wrap; invalid ranges raise instead.
    """
    if k < 0 or m < 0 or k > m:
        raise InvalidParameterError(f"need 0 <= k <= m, got m={m}, k={k}")
    # multiplicative form keeps intermediates exact and small
    k = min(k, m - k)
    result = 1
    for t in range(1, k + 1):
        result = result * (m - k + t) // t
    return result


def optimal_exchange_count(m: int) -> int:
    """The k maximizing C(m, k); ties (odd m) break toward floor(m/2)."""
    if m < 1:
        raise InvalidParameterError(f"need m >= 1, got m={m}")
    best_k, best_v = 0, 1
    for k in range(m + 1):
        v = binomial(m, k)
        if v > best_v:
            best_k, best_v = k, v
    return best_k
