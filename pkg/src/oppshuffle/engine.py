"""Trial orchestration, aggregation, and convergence measurement.

A trial replays ``rounds`` rounds of exchanges from a mobility source
(transition matrix or per-day contact pairs) and records which node holds
each item after every round.  Aggregating many trials yields, per round
and item, the probability distribution of the item's location; the
Kolmogorov-Smirnov distance of that distribution against uniform 1/N,
tracked per round, measures convergence to a uniform mix.

Trials are independent: trial t draws its randomness from
``SeedSequence(seed, spawn_key=(t,))``, so results are identical no matter
how trials are scheduled, and count tensors from any partition of the
trial range merge by plain addition.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import MANIFEST_SCHEMA_VERSION, RESULTS_SCHEMA_VERSION, __version__, kernels
from .cohort import (
    Cohort,
    ContactGraph,
    build_contact_graph,
    combine_cliques,
    maximal_cliques,
    random_connected_cohort,
)
from .errors import InvalidParameterError, TraceFormatError
from .knowledge import centrality_report, new_adjacency, shortest_paths
from .mobility import ContactEvent, TransitionMatrix, select_active_window

DEFAULT_KS_THRESHOLD = 0.035
DEFAULT_TRIALS = 30_000
DESK_TRIALS = 3_000
NORMALIZATION_TOL = 1e-9

TENSOR_HEADER = ["round", "item", "node", "probability"]
SERIES_HEADER = ["round", "aggregate_D", "maxdev"]
ITEM_SERIES_HEADER = ["round", "item", "D"]


@dataclass(frozen=True)
class TraceRounds:
    """Per-round exchange pairs for one cohort, kernel-ready.

    Round r (1-based) replays pair indices ``offsets[r-1]:offsets[r]`` in
    order; indices are 0-based positions in the cohort's sorted member
    list.
    """

    pair_a: np.ndarray
    pair_b: np.ndarray
    offsets: np.ndarray
    cohort: Cohort | None


@dataclass(frozen=True)
class TrialConfig:
    """Everything a single trial needs, minus the trial index."""

    mobility: TransitionMatrix | TraceRounds
    n: int
    m: int
    rounds: int
    seed: int
    trial_count: int = 1

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InvalidParameterError(f"need n, m >= 1, got n={self.n}, m={self.m}")
        if self.rounds < 1:
            raise InvalidParameterError(f"need rounds >= 1, got {self.rounds}")
        if self.trial_count < 1:
            raise InvalidParameterError(f"need trial_count >= 1, got {self.trial_count}")
        if isinstance(self.mobility, TransitionMatrix) and self.mobility.n != self.n:
            raise InvalidParameterError(
                f"matrix is {self.mobility.n}x{self.mobility.n} but n={self.n}"
            )


@dataclass(frozen=True)
class PossessionHistory:
    """Holder of every item after every round; row 0 is the initial layout.

    ``holders[r, d]`` is the 0-based node index holding 0-based item d
    after round r.
    """

    holders: np.ndarray
    n: int
    m: int

    def holder(self, round_no: int, item_label: int) -> int:
        """1-based NodeId holding 1-based ``item_label`` after ``round_no``."""
        return int(self.holders[round_no, item_label - 1]) + 1


@dataclass(frozen=True)
class ProbabilityTensor:
    """p[r, d, i]: fraction of trials where node i holds item d after round r."""

    p: np.ndarray
    trials: int


@dataclass(frozen=True)
class KsSeries:
    """Per-round KS distances against uniform 1/N.

    ``per_item[r, d]`` is item d's KS statistic after round r;
    ``aggregate[r]`` is their mean across items (the worst item is
    ``per_item[r].max()``); ``maxdev[r]`` is the order-free statistic
    max |p - 1/N| over items and nodes.
    """

    per_item: np.ndarray
    aggregate: np.ndarray
    maxdev: np.ndarray


def required_trials(p: float, alpha: float) -> int:
    """Trials needed to observe probability-p events at confidence 1 - alpha:
    ceil(log(alpha) / log(1 - p))."""
    if not (0.0 < p < 1.0) or not (0.0 < alpha < 1.0):
        raise InvalidParameterError(
            f"need 0 < p < 1 and 0 < alpha < 1, got p={p}, alpha={alpha}"
        )
    return math.ceil(math.log(alpha) / math.log1p(-p))


def trace_rounds_from_events(
    events: list[ContactEvent], members, rounds: int, cohort: Cohort | None = None
) -> TraceRounds:
    """Compile day-indexed events into kernel pair arrays for ``members``.

    ``members`` fixes the node ordering (sorted ascending).  Events whose
    day falls outside 0..rounds-1 or whose pair leaves the member set are
    rejected.
    """
    order = {u: k for k, u in enumerate(sorted(set(members)))}
    per_round: list[list[tuple[int, int]]] = [[] for _ in range(rounds)]
    for ev in sorted(events, key=lambda e: (e.day, e.timestamp, e.a, e.b)):
        if not (0 <= ev.day < rounds):
            raise InvalidParameterError(f"event day {ev.day} outside 0..{rounds - 1}")
        if ev.a not in order or ev.b not in order:
            raise InvalidParameterError(f"event pair {ev.pair} outside the cohort")
        per_round[ev.day].append((order[ev.a], order[ev.b]))
    offsets = np.zeros(rounds + 1, dtype=np.int64)
    for r, pairs in enumerate(per_round):
        offsets[r + 1] = offsets[r] + len(pairs)
    flat = [p for pairs in per_round for p in pairs]
    pair_a = np.array([a for a, _ in flat], dtype=np.int32)
    pair_b = np.array([b for _, b in flat], dtype=np.int32)
    return TraceRounds(pair_a=pair_a, pair_b=pair_b, offsets=offsets, cohort=cohort)


def _run_kernel_trial(cfg: TrialConfig, trial_index: int, counts_out=None, history_out=None):
    bitgen = kernels.trial_bit_generator(cfg.seed, trial_index)
    if isinstance(cfg.mobility, TransitionMatrix):
        cum = kernels.row_cumulative(cfg.mobility.p)
        kernels.markov_trial(
            cum, cfg.n, cfg.m, cfg.rounds, bitgen,
            counts_out=counts_out, history_out=history_out,
        )
    else:
        tr = cfg.mobility
        kernels.pairs_trial(
            tr.pair_a, tr.pair_b, tr.offsets, cfg.n, cfg.m, cfg.rounds, bitgen,
            counts_out=counts_out, history_out=history_out,
        )


def run_trial(cfg: TrialConfig, trial_index: int) -> PossessionHistory:
    """Execute one trial; deterministic in (cfg.seed, trial_index)."""
    history = np.empty((cfg.rounds + 1, cfg.n * cfg.m), dtype=np.int32)
    _run_kernel_trial(cfg, trial_index, history_out=history)
    return PossessionHistory(holders=history, n=cfg.n, m=cfg.m)


def aggregate_trials(histories) -> ProbabilityTensor:
    """Empirical holder distribution per (round, item) over trial histories."""
    counts = None
    shape = None
    trials = 0
    row_offset = None
    for hist in histories:
        holders = hist.holders
        if counts is None:
            shape = holders.shape
            n = hist.n
            counts = np.zeros(shape[0] * shape[1] * n, dtype=np.int64)
            row_offset = np.arange(shape[0] * shape[1], dtype=np.int64).reshape(shape) * n
        elif holders.shape != shape or hist.n != n:
            raise InvalidParameterError("histories have mismatched dimensions")
        counts += np.bincount(
            (row_offset + holders).ravel(), minlength=counts.size
        )
        trials += 1
    if counts is None:
        raise InvalidParameterError("need at least one history")
    p = (counts / trials).reshape(shape[0], shape[1], n)
    return ProbabilityTensor(p=p, trials=trials)


def _chunk_ranges(total: int, chunks: int):
    step = math.ceil(total / chunks)
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def run_experiment(cfg: TrialConfig, threads: int = 1, keep_histories: bool = False):
    """Run ``cfg.trial_count`` trials and aggregate them into a tensor.

    Counts accumulate per worker chunk and merge by addition, so the result
    is independent of ``threads``.  ``keep_histories`` additionally returns
    the per-trial histories (memory scales with trial count).
    """
    shape = (cfg.rounds + 1, cfg.n * cfg.m, cfg.n)
    histories: list[PossessionHistory] | None = [] if keep_histories else None

    def run_chunk(lo, hi):
        counts = np.zeros(shape, dtype=np.int64)
        kept = []
        for t in range(lo, hi):
            if keep_histories:
                history = np.empty((cfg.rounds + 1, cfg.n * cfg.m), dtype=np.int32)
                _run_kernel_trial(cfg, t, counts_out=counts, history_out=history)
                kept.append(PossessionHistory(holders=history, n=cfg.n, m=cfg.m))
            else:
                _run_kernel_trial(cfg, t, counts_out=counts)
        return counts, kept

    ranges = _chunk_ranges(cfg.trial_count, max(1, threads) * 4)
    if threads <= 1:
        results = [run_chunk(lo, hi) for lo, hi in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: run_chunk(*r), ranges))
    total = np.zeros(shape, dtype=np.int64)
    for counts, kept in results:
        total += counts
        if keep_histories:
            histories.extend(kept)
    tensor = ProbabilityTensor(p=total / cfg.trial_count, trials=cfg.trial_count)
    return (tensor, histories) if keep_histories else tensor


def mean_closeness(g: ContactGraph, members) -> float:
    """Mean closeness centrality of the induced subgraph under hop costs."""
    members = tuple(sorted(set(members)))
    index = {u: k for k, u in enumerate(members)}
    adj = new_adjacency(1, len(members))
    for a, b in combinations(members, 2):
        if (a, b) in g.edges:
            adj.weights[index[a], index[b]] = 1.0
            adj.weights[index[b], index[a]] = 1.0
    return centrality_report(shortest_paths(adj)).mean


@dataclass(frozen=True)
class TraceExperimentResult:
    tensor: ProbabilityTensor
    mean_closeness: float
    mean_max_hops: float
    mean_median_hops: float


def run_trace_experiment(
    events: list[ContactEvent],
    mode: str,
    n: int,
    m: int,
    rounds: int,
    trials: int,
    seed: int,
    min_weight: int = 10,
    threads: int = 1,
) -> TraceExperimentResult:
    """Trace-driven experiment with a fresh cohort per trial.

    Each trial selects its own cohort from the contact graph (``mode`` is
    ``"random"`` or ``"clique"``), restricts the event list to that cohort,
    picks its busiest ``rounds``-day window (cycling shorter histories),
    and replays one day per round.  Reported closeness/hop statistics are
    means over the per-trial cohorts.
    """
    if mode not in ("random", "clique"):
        raise InvalidParameterError(f"mode must be 'random' or 'clique', got {mode!r}")
    graph = build_contact_graph(events, min_weight=min_weight)
    cliques = maximal_cliques(graph) if mode == "clique" else None
    shape = (rounds + 1, n * m, n)

    def run_chunk(lo, hi):
        counts = np.zeros(shape, dtype=np.int64)
        closeness_sum = 0.0
        max_hops_sum = 0
        median_hops_sum = 0
        for t in range(lo, hi):
            bitgen = kernels.trial_bit_generator(seed, t)
            rng = np.random.Generator(bitgen)
            if mode == "random":
                cohort = random_connected_cohort(graph, n, rng)
            else:
                cohort = combine_cliques(cliques, n, graph, rng)
            member_set = set(cohort.members)
            cohort_events = [
                ev for ev in events if ev.a in member_set and ev.b in member_set
            ]
            _, windowed = select_active_window(
                cohort_events, window_days=rounds, users=member_set
            )
            tr = trace_rounds_from_events(windowed, cohort.members, rounds, cohort)
            kernels.pairs_trial(
                tr.pair_a, tr.pair_b, tr.offsets, n, m, rounds, bitgen,
                counts_out=counts,
            )
            closeness_sum += mean_closeness(graph, cohort.members)
            max_hops_sum += cohort.max_pair_hops
            median_hops_sum += cohort.median_pair_hops
        return counts, closeness_sum, max_hops_sum, median_hops_sum

    ranges = _chunk_ranges(trials, max(1, threads) * 4)
    if threads <= 1:
        results = [run_chunk(lo, hi) for lo, hi in ranges]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: run_chunk(*r), ranges))
    total = np.zeros(shape, dtype=np.int64)
    closeness_sum = 0.0
    max_hops_sum = 0
    median_hops_sum = 0
    for counts, c_sum, mx_sum, md_sum in results:
        total += counts
        closeness_sum += c_sum
        max_hops_sum += mx_sum
        median_hops_sum += md_sum
    return TraceExperimentResult(
        tensor=ProbabilityTensor(p=total / trials, trials=trials),
        mean_closeness=closeness_sum / trials,
        mean_max_hops=max_hops_sum / trials,
        mean_median_hops=median_hops_sum / trials,
    )


def ks_statistic(dist) -> float:
    """KS distance of a node-indexed probability vector from uniform 1/N."""
    v = np.asarray(dist, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidParameterError("distribution must be a non-empty vector")
    if abs(float(v.sum()) - 1.0) > NORMALIZATION_TOL:
        raise InvalidParameterError(f"distribution sums to {v.sum()!r}, expected 1")
    n = v.size
    return float(np.abs(np.cumsum(v) - np.arange(1, n + 1) / n).max())


def ks_series(tensor: ProbabilityTensor) -> KsSeries:
    """Per-round KS statistics for every item, plus aggregate and maxdev."""
    p = tensor.p
    n = p.shape[2]
    cdf = np.cumsum(p, axis=2)
    per_item = np.abs(cdf - np.arange(1, n + 1) / n).max(axis=2)
    return KsSeries(
        per_item=per_item,
        aggregate=per_item.mean(axis=1),
        maxdev=np.abs(p - 1.0 / n).max(axis=(1, 2)),
    )


def rounds_to_threshold(series: KsSeries, threshold: float = DEFAULT_KS_THRESHOLD):
    """First round with aggregate KS below ``threshold``; None if never."""
    below = np.nonzero(series.aggregate < threshold)[0]
    return int(below[0]) if below.size else None


# --- result files ----------------------------------------------------------


def write_tensor_csv(tensor: ProbabilityTensor, path) -> None:
    """Rows: round, 1-based item label, 1-based node id, probability."""
    rounds, items, nodes = tensor.p.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TENSOR_HEADER)
        for r in range(rounds):
            for d in range(items):
                row_p = tensor.p[r, d]
                for i in range(nodes):
                    w.writerow([r, d + 1, i + 1, repr(float(row_p[i]))])


def write_series_csv(series: KsSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_HEADER)
        for r in range(series.aggregate.size):
            w.writerow([r, repr(float(series.aggregate[r])), repr(float(series.maxdev[r]))])


def write_item_series_csv(series: KsSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ITEM_SERIES_HEADER)
        rounds, items = series.per_item.shape
        for r in range(rounds):
            for d in range(items):
                w.writerow([r, d + 1, repr(float(series.per_item[r, d]))])


def write_manifest(payload: dict, path) -> None:
    payload = dict(payload)
    payload.setdefault("manifest_schema", MANIFEST_SCHEMA_VERSION)
    payload.setdefault("results_schema", RESULTS_SCHEMA_VERSION)
    payload.setdefault("version", __version__)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def validate_results_csv(path, header: list[str], expected_rows: int) -> None:
    """Re-parse a written CSV: header, row count, and numeric fields."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        got_header = next(reader, None)
        if got_header != header:
            raise TraceFormatError(f"{path}: bad header {got_header!r}")
        rows = 0
        for row in reader:
            if len(row) != len(header):
                raise TraceFormatError(f"{path}: bad row width at line {rows + 2}")
            float(row[-1])  # numeric payload column
            rows += 1
        if rows != expected_rows:
            raise TraceFormatError(f"{path}: expected {expected_rows} rows, got {rows}")
