"""Node-local contact-graph knowledge and stopping criteria.

Each node grows a personal adjacency matrix from direct encounters (entry =
times met) and enriches it by merging matrices received from peers: absent
entries are copied, conflicting entries take the minimum.  All-pairs
shortest paths turn partial knowledge into distances, closeness centrality
summarizes how near a node is to everyone else, and two stopping rules
decide when data is mixed enough to release: a local uniformity check over
observed item labels, and a centrality-calibrated round estimate.

Path costs default to hop counts (every known edge costs 1); encounter
counts stay available as metadata.  ``metric="inverse-weight"`` instead
prices an edge at 1/weight, for experiments where frequent contact should
mean "closer".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    DisconnectedGraphError,
    InsufficientDataError,
    InvalidParameterError,
)

HOP_METRIC = "hop"
INVERSE_WEIGHT_METRIC = "inverse-weight"
CALIBRATION_HEADER = ["centrality", "rounds"]


@dataclass
class PersonalAdjacencyMatrix:
    """One node's partial, symmetric view of the contact graph.

    ``weights`` is an N x N float array; NaN marks entries the node knows
    nothing about (a distinct state from an explicit zero).
    """

    owner: int
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[0]


def new_adjacency(owner: int, n: int) -> PersonalAdjacencyMatrix:
    if not (1 <= owner <= n):
        raise InvalidParameterError(f"owner {owner} outside 1..{n}")
    w = np.full((n, n), np.nan)
    return PersonalAdjacencyMatrix(owner=owner, weights=w)


def record_encounter(
    a: PersonalAdjacencyMatrix, peer: int
) -> PersonalAdjacencyMatrix:
    """Count one direct meeting with ``peer`` (symmetric, absent starts at 0)."""
    if peer == a.owner:
        raise InvalidParameterError("a node cannot encounter itself")
    if not (1 <= peer <= a.n):
        raise InvalidParameterError(f"peer {peer} outside 1..{a.n}")
    i, j = a.owner - 1, peer - 1
    current = a.weights[i, j]
    value = 1.0 if math.isnan(current) else current + 1.0
    a.weights[i, j] = value
    a.weights[j, i] = value
    return a


def merge_adjacency(
    a_i: PersonalAdjacencyMatrix, a_j: PersonalAdjacencyMatrix
) -> PersonalAdjacencyMatrix:
    """Combine two views entrywise: copy what only one knows, min what both know."""
    if a_i.n != a_j.n:
        raise InvalidParameterError(
            f"dimension mismatch: {a_i.n} vs {a_j.n}"
        )
    return PersonalAdjacencyMatrix(
        owner=a_i.owner, weights=np.fmin(a_i.weights, a_j.weights)
    )


@dataclass
class DistanceMatrix:
    """All-pairs path costs; NaN = unreachable.  ``inferred`` marks entries
    produced by path closure rather than a direct measured edge."""

    dist: np.ndarray
    inferred: np.ndarray

    @property
    def n(self) -> int:
        return self.dist.shape[0]


def shortest_paths(
    a: PersonalAdjacencyMatrix, metric: str = HOP_METRIC
) -> DistanceMatrix:
    """Floyd-Warshall closure of the known edges under the chosen cost rule."""
    if metric == HOP_METRIC:
        base = np.where(np.isnan(a.weights), np.inf, 1.0)
    elif metric == INVERSE_WEIGHT_METRIC:
        with np.errstate(divide="ignore"):
            base = np.where(np.isnan(a.weights), np.inf, 1.0 / a.weights)
    else:
        raise InvalidParameterError(f"unknown metric {metric!r}")
    n = a.n
    np.fill_diagonal(base, 0.0)
    dist = base.copy()
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    inferred = dist < base  # shorter than (or replacing) any direct measurement
    dist = np.where(np.isinf(dist), np.nan, dist)
    return DistanceMatrix(dist=dist, inferred=inferred)


@dataclass(frozen=True)
class CentralityReport:
    per_node: dict[int, float]
    mean: float


def closeness_centrality(d: DistanceMatrix, node: int) -> float:
    """(N-1) / sum of the node's distances to all others."""
    if not (1 <= node <= d.n):
        raise InvalidParameterError(f"node {node} outside 1..{d.n}")
    if d.n == 1:
        return 1.0
    row = np.delete(d.dist[node - 1], node - 1)
    if np.isnan(row).any():
        raise DisconnectedGraphError(f"node {node} cannot reach every peer")
    return float((d.n - 1) / row.sum())


def centrality_report(d: DistanceMatrix) -> CentralityReport:
    per_node = {node: closeness_centrality(d, node) for node in range(1, d.n + 1)}
    return CentralityReport(per_node=per_node, mean=sum(per_node.values()) / d.n)


def uniformity_stop_check(counts: dict, epsilon: float) -> bool:
    """Local mixing test: every observed label's frequency within epsilon of 1/D.

    ``counts`` maps item labels to sighting counts (one count per sighting
    per exchange, own initial items included).  Raises when nothing has
    been observed yet.
    """
    if epsilon < 0:
        raise InvalidParameterError(f"epsilon must be >= 0, got {epsilon}")
    if any(c < 0 for c in counts.values()):
        raise InvalidParameterError("sighting counts must be non-negative")
    total = sum(counts.values())
    if total == 0:
        raise InsufficientDataError("no observations recorded")
    share = 1.0 / len(counts)
    return max(abs(c / total - share) for c in counts.values()) <= epsilon


def estimate_required_rounds(
    mean_centrality: float, calibration: list[tuple[float, int]]
) -> int:
    """Rounds needed for a near-uniform mix, interpolated from a calibration
    table of (mean closeness centrality, observed rounds) pairs.

    Piecewise-linear between table points, rounded up, clamped to the table
    endpoints outside its range.
    """
    if not calibration:
        raise InvalidParameterError("calibration table is empty")
    if not (0.0 < mean_centrality <= 1.0):
        raise InvalidParameterError(
            f"centrality must lie in (0, 1], got {mean_centrality}"
        )
    pts = sorted(calibration)
    xs = [c for c, _ in pts]
    ys = [float(r) for _, r in pts]
    return math.ceil(float(np.interp(mean_centrality, xs, ys)))


def write_calibration_csv(rows: list[tuple[float, object]], path) -> None:
    """Rows are (centrality, rounds); rounds may be the sentinel 'none'."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CALIBRATION_HEADER)
        for centrality, rounds in rows:
            w.writerow([repr(float(centrality)), rounds])


def read_calibration_csv(path) -> list[tuple[float, int]]:
    """Load a calibration table, skipping 'none' sentinel rows."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != CALIBRATION_HEADER:
            raise InvalidParameterError(
                f"expected header {','.join(CALIBRATION_HEADER)} in {path}"
            )
        for row in reader:
            if not row:
                continue
            if row[1].strip().lower() == "none":
                continue
            rows.append((float(row[0]), int(row[1])))
    return rows


def default_calibration() -> list[tuple[float, int]]:
    """The shipped table: complete topology (centrality 1.0) needs 4 rounds,
    the 10-node line anchor (0.3430) needs 100.

    Note: this library's closeness for a 10-node line under hop costs is
    ~0.2854; the 0.3430 key is kept as the published calibration anchor.
    Regenerate with the ``calibrate`` CLI command to use self-measured
    anchors instead.
    """
    ref = resources.files("oppshuffle.data").joinpath("default_calibration.csv")
    with resources.as_file(ref) as path:
        return read_calibration_csv(path)
