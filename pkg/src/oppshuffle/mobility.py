"""Mobility models: Markov transition matrices and GPS-trace contact extraction.

Two ways to generate exchange opportunities.  Artificial scenarios use a
row-stochastic transition matrix whose diagonal is the per-step idle
probability; every simulated round visits each node once in random order
and samples one outcome from its row.  Trace scenarios ingest timestamped
GPS fixes, detect proximity events (pairs within a radius, subject to a
per-pair cooldown), and map calendar days to rounds, cycling short traces
until the requested number of days is reached.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .errors import InvalidParameterError, TraceFormatError

SECONDS_PER_DAY = 86400
EARTH_RADIUS_M = 6371008.8  # mean radius
DEFAULT_RADIUS_M = 50.0
DEFAULT_COOLDOWN_S = 1800
DEFAULT_STALENESS_S = 600
ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic N x N matrix; p[i, j] is node i's per-step probability
    of exchanging with j (diagonal: doing nothing)."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise InvalidParameterError(f"transition matrix must be square, got {p.shape}")
        if np.any(p < -ROW_SUM_TOL) or np.any(p > 1 + ROW_SUM_TOL):
            raise InvalidParameterError("transition probabilities must lie in [0, 1]")
        row_sums = p.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > ROW_SUM_TOL):
            worst = int(np.argmax(np.abs(row_sums - 1.0)))
            raise InvalidParameterError(
                f"row {worst + 1} sums to {row_sums[worst]!r}, expected 1"
            )
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.shape[0]


def markov_fully_connected(n: int) -> TransitionMatrix:
    """Everyone meets everyone: idle probability 0, partners uniform 1/(n-1)."""
    if n < 2:
        raise InvalidParameterError(f"need n >= 2, got {n}")
    p = np.full((n, n), 1.0 / (n - 1))
    np.fill_diagonal(p, 0.0)
    return TransitionMatrix(p)


def markov_line(n: int, edge_idle: float, inner_idle: float) -> TransitionMatrix:
    """Chain topology: end nodes idle with ``edge_idle``, interior nodes idle
    with ``inner_idle`` and split the rest evenly between their two neighbors."""
    if n < 2:
        raise InvalidParameterError(f"need n >= 2, got {n}")
    if not (0.0 <= edge_idle <= 1.0 and 0.0 <= inner_idle <= 1.0):
        raise InvalidParameterError("idle probabilities must lie in [0, 1]")
    p = np.zeros((n, n))
    for i in range(n):
        if i == 0 or i == n - 1:
            p[i, i] = edge_idle
            p[i, 1 if i == 0 else n - 2] = 1.0 - edge_idle
        else:
            p[i, i] = inner_idle
            p[i, i - 1] = (1.0 - inner_idle) / 2.0
            p[i, i + 1] = (1.0 - inner_idle) / 2.0
    return TransitionMatrix(p)


def sample_round_markov(
    t: TransitionMatrix, rng: np.random.Generator
) -> list[tuple[int, int]]:
    """Sample one round of exchange pairs (1-based node ids, in execution order).

    Every node is visited once in a uniformly random order and samples one
    outcome from its row; idle outcomes produce no pair.  A node can appear
    as a partner in any number of pairs.
    """
    n = t.n
    cum = np.cumsum(t.p, axis=1)
    cum[:, -1] = 1.0
    pairs = []
    for i in rng.permutation(n):
        u = rng.random()
        j = int(np.searchsorted(cum[i], u, side="right"))
        if j != i:
            pairs.append((int(i) + 1, j + 1))
    return pairs


@dataclass(frozen=True)
class GpsFix:
    """One trace record; ``lat``/``lon`` hold planar x/y meters when the
    trace declares ``coords=xy``."""

    user: int
    timestamp: int
    lat: float
    lon: float


@dataclass(frozen=True)
class ContactEvent:
    """An eligible exchange opportunity between two users (a < b)."""

    a: int
    b: int
    timestamp: int
    day: int

    def __post_init__(self):
        if self.a == self.b:
            raise InvalidParameterError("contact event members must be distinct")
        if self.a > self.b:
            raise InvalidParameterError("contact event pair must be ordered (a < b)")

    @property
    def pair(self) -> tuple[int, int]:
        return (self.a, self.b)


def haversine_m(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters between degree coordinates (vectorized)."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _per_user_arrays(traces):
    """Sort fixes per user; first fix wins on duplicate timestamps."""
    by_user = {}
    for fix in traces:
        by_user.setdefault(fix.user, []).append(fix)
    out = {}
    for user, fixes in by_user.items():
        fixes.sort(key=lambda f: f.timestamp)
        ts = np.array([f.timestamp for f in fixes], dtype=np.int64)
        keep = np.ones(len(ts), dtype=bool)
        keep[1:] = ts[1:] != ts[:-1]
        out[user] = (
            ts[keep],
            np.array([f.lat for f in fixes], dtype=np.float64)[keep],
            np.array([f.lon for f in fixes], dtype=np.float64)[keep],
        )
    return out


def extract_proximity_events(
    traces: list[GpsFix],
    radius_m: float = DEFAULT_RADIUS_M,
    cooldown_s: int = DEFAULT_COOLDOWN_S,
    staleness_s: int = DEFAULT_STALENESS_S,
    planar: bool = False,
) -> list[ContactEvent]:
    """Detect proximity events: pairs within ``radius_m``, at least
    ``cooldown_s`` since the pair's previous event.

    Each user's position is linearly interpolated; pair distance is
    evaluated on the union of both users' fix timestamps.  A user with no
    fix within ``staleness_s`` of an evaluation point is treated as absent
    there, so long gaps cannot manufacture contacts.  Day indices count UTC
    calendar days from the trace's first fix.
    """
    if radius_m <= 0 or cooldown_s < 0 or staleness_s < 0:
        raise InvalidParameterError("radius must be positive, durations non-negative")
    users = _per_user_arrays(traces)
    if len(users) < 2:
        return []
    day0 = min(int(ts[0]) for ts, _, _ in users.values()) // SECONDS_PER_DAY

    events = []
    for ua, ub in combinations(sorted(users), 2):
        ts_a, la, lo_a = users[ua]
        ts_b, lb, lo_b = users[ub]
        t_eval = np.union1d(ts_a, ts_b)
        present = _present(t_eval, ts_a, staleness_s) & _present(t_eval, ts_b, staleness_s)
        if not present.any():
            continue
        t_eval = t_eval[present]
        ax = np.interp(t_eval, ts_a, la)
        ay = np.interp(t_eval, ts_a, lo_a)
        bx = np.interp(t_eval, ts_b, lb)
        by = np.interp(t_eval, ts_b, lo_b)
        if planar:
            dist = np.hypot(ax - bx, ay - by)
        else:
            dist = haversine_m(ax, ay, bx, by)
        last = None
        for t, close in zip(t_eval.tolist(), (dist <= radius_m).tolist()):
            if close and (last is None or t - last >= cooldown_s):
                events.append(
                    ContactEvent(ua, ub, t, t // SECONDS_PER_DAY - day0)
                )
                last = t
    events.sort(key=lambda e: (e.timestamp, e.a, e.b))
    return events


def _present(t_eval, ts, staleness_s):
    """True where the nearest fix in ts is within staleness_s of t_eval."""
    idx = np.searchsorted(ts, t_eval)
    left = np.abs(ts[np.clip(idx - 1, 0, len(ts) - 1)] - t_eval)
    right = np.abs(ts[np.clip(idx, 0, len(ts) - 1)] - t_eval)
    return np.minimum(left, right) <= staleness_s


def cycle_days(
    events: list[ContactEvent], available_days: int, required_days: int = 100
) -> list[ContactEvent]:
    """Repeat the day sequence from day 0 until ``required_days`` days exist.

    Output day indices run 0..required_days-1; timestamps are shifted by
    whole days so the output stays chronologically ordered.
    """
    if available_days < 1:
        raise InvalidParameterError(f"need available_days >= 1, got {available_days}")
    if not events:
        return []
    by_day: dict[int, list[ContactEvent]] = {}
    for ev in events:
        if not (0 <= ev.day < available_days):
            raise InvalidParameterError(
                f"event day {ev.day} outside 0..{available_days - 1}"
            )
        by_day.setdefault(ev.day, []).append(ev)
    out = []
    for out_day in range(required_days):
        for ev in by_day.get(out_day % available_days, ()):
            shift = (out_day - ev.day) * SECONDS_PER_DAY
            out.append(replace(ev, timestamp=ev.timestamp + shift, day=out_day))
    out.sort(key=lambda e: (e.day, e.timestamp, e.a, e.b))
    return out


def select_active_window(
    events: list[ContactEvent],
    window_days: int = 100,
    users: set[int] | None = None,
) -> tuple[int, list[ContactEvent]]:
    """Pick the busiest contiguous ``window_days`` stretch of a trace.

    Windows are ranked by the median per-pair event count over all pairs of
    the user set (pairs with no events count as zero), then by total event
    count, then by earliest start.  Returns (start_day, events) with day
    indices rebased to 0.  Traces shorter than the window are returned
    whole, cycled up to ``window_days``.
    """
    if window_days < 1:
        raise InvalidParameterError(f"need window_days >= 1, got {window_days}")
    if not events:
        return 0, []
    if users is None:
        users = {u for ev in events for u in ev.pair}
    span = max(ev.day for ev in events) + 1
    if span <= window_days:
        return 0, cycle_days(events, span, window_days)

    pairs = list(combinations(sorted(users), 2))
    pair_idx = {p: k for k, p in enumerate(pairs)}
    daily = np.zeros((span, len(pairs)), dtype=np.int64)
    for ev in events:
        if ev.pair in pair_idx:
            daily[ev.day, pair_idx[ev.pair]] += 1
    cum = np.zeros((span + 1, len(pairs)), dtype=np.int64)
    np.cumsum(daily, axis=0, out=cum[1:])

    best = None
    for start in range(span - window_days + 1):
        counts = cum[start + window_days] - cum[start]
        key = (float(np.median(counts)), int(counts.sum()), -start)
        if best is None or key > best[0]:
            best = (key, start)
    start = best[1]
    window = [
        replace(ev, day=ev.day - start)
        for ev in events
        if start <= ev.day < start + window_days
    ]
    window.sort(key=lambda e: (e.day, e.timestamp, e.a, e.b))
    return start, window


# --- file formats ---------------------------------------------------------

TRACE_HEADER_GEO = ["user", "timestamp", "lat", "lon"]
TRACE_HEADER_XY = ["user", "timestamp", "x", "y"]
EVENTS_HEADER = ["user_a", "user_b", "timestamp", "day"]


def read_trace_csv(path) -> tuple[list[GpsFix], bool]:
    """Read a trace file; returns (fixes, planar).

    Format: optional ``#`` comment lines (``# coords=xy`` declares planar
    meters), a ``user,timestamp,lat,lon`` or ``user,timestamp,x,y`` header,
    then integer user ids, integer Unix-second timestamps, and float
    coordinates.  Malformed rows raise ``TraceFormatError`` naming the line.
    """
    fixes = []
    planar_comment = False
    header = None
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().replace(" ", "") == "coords=xy":
                    planar_comment = True
                continue
            cells = [c.strip() for c in line.split(",")]
            if header is None:
                if cells == TRACE_HEADER_GEO:
                    header = "geo"
                elif cells == TRACE_HEADER_XY:
                    header = "xy"
                else:
                    raise TraceFormatError(
                        f"expected header {','.join(TRACE_HEADER_GEO)} or "
                        f"{','.join(TRACE_HEADER_XY)}, got {line!r}",
                        line_no,
                    )
                if planar_comment and header == "geo":
                    raise TraceFormatError(
                        "coords=xy declared but header is lat/lon", line_no
                    )
                continue
            if len(cells) != 4:
                raise TraceFormatError(f"expected 4 columns, got {len(cells)}", line_no)
            try:
                fixes.append(
                    GpsFix(int(cells[0]), int(cells[1]), float(cells[2]), float(cells[3]))
                )
            except ValueError as exc:
                raise TraceFormatError(str(exc), line_no) from exc
    if header is None:
        raise TraceFormatError("missing header line")
    return fixes, header == "xy" or planar_comment


def read_matrix_csv(path) -> TransitionMatrix:
    """Read a transition matrix: one CSV row of floats per node, no header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise TraceFormatError(str(exc), line_no) from exc
    if not rows:
        raise TraceFormatError("matrix file is empty")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise TraceFormatError(f"ragged matrix rows (widths {sorted(widths)})")
    try:
        return TransitionMatrix(np.array(rows, dtype=np.float64))
    except InvalidParameterError as exc:
        raise TraceFormatError(str(exc)) from exc


def write_events_csv(events: list[ContactEvent], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENTS_HEADER)
        for ev in events:
            w.writerow([ev.a, ev.b, ev.timestamp, ev.day])


def read_events_csv(path) -> list[ContactEvent]:
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if line_no == 1:
                if [c.strip() for c in row] != EVENTS_HEADER:
                    raise TraceFormatError(
                        f"expected header {','.join(EVENTS_HEADER)}", line_no
                    )
                continue
            if len(row) != 4:
                raise TraceFormatError(f"expected 4 columns, got {len(row)}", line_no)
            try:
                events.append(
                    ContactEvent(int(row[0]), int(row[1]), int(row[2]), int(row[3]))
                )
            except (ValueError, InvalidParameterError) as exc:
                raise TraceFormatError(str(exc), line_no) from exc
    return events
