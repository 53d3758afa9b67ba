"""Regenerate the shipped 20-user synthetic GPS trace fixture.

Deterministic (no RNG).  Twenty users over 40 days:

* users 1..12 form a daily meeting chain: pair (i, i+1) meets at spot L_i
  every morning, staggered 15 minutes apart so nobody is double-booked;
* users 13..20 share a room twice a day (all 28 pairs meet both times);
* user 12 meets user 13 daily at noon, bridging chain and room.

Spots sit 2 km apart on an east-west line, homes 8 km north; users carry
fixes only around meetings (plus two home fixes), so between appointments
they are absent under the 10-minute staleness rule and interpolation
cannot invent contacts.  Expected contact graph at min edge weight 10:
a 12-node path, a bridge 12-13, and a complete K8 on 13..20 (path and
bridge pairs: 40 events each; room pairs: 80).

Usage: python3 scripts/make_trace_fixture.py [out.csv]
"""

import csv
import math
import sys
from pathlib import Path

DAYS = 40
BASE_TS = 19_700 * 86_400  # UTC midnight
LAT0, LON0 = 47.3769, 8.5417
M_PER_DEG_LAT = 111_320.0

CHAIN_USERS = range(1, 13)
ROOM_USERS = range(13, 21)


def to_latlon(x_m, y_m):
    lat = LAT0 + y_m / M_PER_DEG_LAT
    lon = LON0 + x_m / (M_PER_DEG_LAT * math.cos(math.radians(LAT0)))
    return lat, lon


def jitter(user):
    return (user % 7) - 3.0, (user % 5) - 2.0  # meters, well inside the 50 m radius


def spot(i):
    return 2000.0 * i, 0.0  # chain meeting spots L_1..L_12


ROOM = (30_000.0, 0.0)


def home(user):
    return 500.0 * user, 8000.0


def meeting_time(i):
    return 9 * 3600 + i * 900  # 09:15, 09:30, ... (i = 1..12)


def fixes_for_day(day):
    base = BASE_TS + day * 86_400
    out = []  # (user, timestamp, x, y)

    def attend(user, t_center, place):
        jx, jy = jitter(user)
        for dt in (-300, 0, 300):
            out.append((user, base + t_center + dt, place[0] + jx, place[1] + jy))

    for user in range(1, 21):
        hx, hy = home(user)
        out.append((user, base + 3 * 3600, hx, hy))
    for i in range(1, 12):  # chain meetings (i, i+1) at L_i
        attend(i, meeting_time(i), spot(i))
        attend(i + 1, meeting_time(i), spot(i))
    attend(12, meeting_time(12), spot(12))  # noon bridge at L_12
    attend(13, meeting_time(12), spot(12))
    for session in (14 * 3600, 16 * 3600):
        for user in ROOM_USERS:
            attend(user, session, ROOM)
    for user in range(1, 21):
        hx, hy = home(user)
        out.append((user, base + 22 * 3600, hx, hy))
    return out


def main():
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent
        / "src" / "oppshuffle" / "data" / "trace_20users.csv"
    )
    rows = []
    for day in range(DAYS):
        rows.extend(fixes_for_day(day))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "timestamp", "lat", "lon"])
        for user, ts, x, y in rows:
            lat, lon = to_latlon(x, y)
            w.writerow([user, ts, f"{lat:.7f}", f"{lon:.7f}"])
    print(f"wrote {len(rows)} fixes to {out_path}")


if __name__ == "__main__":
    main()
