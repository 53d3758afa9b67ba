"""Command-line front end.

Subcommands: ``simulate`` runs an experiment and writes the result CSVs
plus a manifest; ``traces-extract`` turns a GPS trace into a contact-event
cache; ``cohort`` samples cohorts from an event cache; ``calibrate`` pairs
topology closeness with observed rounds-to-uniformity across scenarios.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 infeasible
cohort.  Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import MANIFEST_SCHEMA_VERSION, RESULTS_SCHEMA_VERSION, __version__, engine, kernels
from .cohort import (
    build_contact_graph,
    combine_cliques,
    maximal_cliques,
    random_connected_cohort,
    write_cohort_manifest,
)
from .engine import (
    DEFAULT_KS_THRESHOLD,
    DEFAULT_TRIALS,
    DESK_TRIALS,
    TrialConfig,
    ks_series,
    rounds_to_threshold,
    run_experiment,
    run_trace_experiment,
)
from .errors import (
    InfeasibleCohortError,
    InvalidParameterError,
    OppShuffleError,
    TraceFormatError,
)
from .knowledge import centrality_report, new_adjacency, shortest_paths, write_calibration_csv
from .mobility import (
    DEFAULT_COOLDOWN_S,
    DEFAULT_RADIUS_M,
    TransitionMatrix,
    extract_proximity_events,
    markov_fully_connected,
    markov_line,
    read_events_csv,
    read_matrix_csv,
    read_trace_csv,
    write_events_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3

MARKOV_SCENARIOS = ("best", "intermediate", "worst", "custom")
TRACE_SCENARIOS = ("trace-random", "trace-clique")
SCENARIOS = MARKOV_SCENARIOS[:3] + TRACE_SCENARIOS + ("custom",)

_DEFAULTS = {
    "n": 10,
    "m": 6,
    "rounds": 100,
    "trials": DEFAULT_TRIALS,
    "seed": 7,
    "threshold": DEFAULT_KS_THRESHOLD,
    "min_weight": 10,
    "threads": 1,
    "out": "oppshuffle_results",
}

_CONFIG_KEYS = {
    "scenario": str,
    "n": int,
    "m": int,
    "rounds": int,
    "trials": int,
    "seed": int,
    "threshold": float,
    "min_weight": int,
    "threads": int,
    "out": str,
    "matrix": str,
    "events": str,
}


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit with the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def parse_length_m(text: str) -> float:
    """Length in meters; bare numbers are meters, suffixes: m, km."""
    s = text.strip().lower()
    for suffix, scale in (("km", 1000.0), ("m", 1.0)):
        if s.endswith(suffix):
            s = s[: -len(suffix)]
            break
    else:
        scale = 1.0
    try:
        value = float(s) * scale
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse length {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"length must be positive, got {text!r}")
    return value


def parse_duration_s(text: str) -> int:
    """Duration in whole seconds; bare numbers are seconds, suffixes: s, min, h."""
    s = text.strip().lower()
    for suffix, scale in (("min", 60.0), ("h", 3600.0), ("s", 1.0)):
        if s.endswith(suffix):
            s = s[: -len(suffix)]
            break
    else:
        scale = 1.0
    try:
        value = float(s) * scale
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse duration {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"duration must be non-negative, got {text!r}")
    return int(round(value))


def _load_config_file(path: str) -> dict:
    """Read a key=value config file, or the 'experiment' block of a manifest."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        spec = payload.get("experiment")
        if not isinstance(spec, dict):
            raise InvalidParameterError(f"{path}: manifest has no 'experiment' block")
        raw = spec
    else:
        raw = {}
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidParameterError(f"{path}:{line_no}: expected key = value")
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    out = {}
    for key, value in raw.items():
        if key in ("ks_threshold",):
            key = "threshold"
        if key not in _CONFIG_KEYS:
            raise InvalidParameterError(f"{path}: unknown config key {key!r}")
        if value is None:
            continue
        out[key] = _CONFIG_KEYS[key](value)
    return out


def _resolve(args, config: dict) -> dict:
    """Merge precedence: explicit flag > config file > built-in default."""
    spec = {}
    for key in _CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            spec[key] = flag_value
        elif key in config:
            spec[key] = config[key]
        elif key in _DEFAULTS:
            spec[key] = _DEFAULTS[key]
        else:
            spec[key] = None
    if getattr(args, "desk", False) and getattr(args, "trials", None) is None and "trials" not in config:
        spec["trials"] = DESK_TRIALS
    return spec


def _scenario_matrix(spec: dict) -> TransitionMatrix:
    scenario = spec["scenario"]
    n = spec["n"]
    if scenario == "best":
        return markov_fully_connected(n)
    if scenario == "intermediate":
        return markov_line(n, 0.5, 0.0)
    if scenario == "worst":
        return markov_line(n, 0.8, 0.6)
    if scenario == "custom":
        if not spec["matrix"]:
            raise InvalidParameterError("scenario 'custom' needs --matrix FILE")
        return read_matrix_csv(spec["matrix"])
    raise InvalidParameterError(f"not a matrix scenario: {scenario!r}")


def _topology_mean_closeness(matrix: TransitionMatrix) -> float:
    """Mean closeness of the contact topology implied by nonzero transition
    probabilities, under hop costs."""
    n = matrix.n
    adj = new_adjacency(1, n)
    for i in range(n):
        for j in range(n):
            if i != j and matrix.p[i, j] > 0:
                adj.weights[i, j] = 1.0
                adj.weights[j, i] = 1.0
    return centrality_report(shortest_paths(adj)).mean


def _run_scenario(spec: dict):
    """Run one scenario; returns (tensor, extras dict for the manifest)."""
    scenario = spec["scenario"]
    if scenario in TRACE_SCENARIOS:
        if not spec["events"]:
            raise InvalidParameterError(f"scenario {scenario!r} needs --events FILE")
        events = read_events_csv(spec["events"])
        result = run_trace_experiment(
            events,
            mode="random" if scenario == "trace-random" else "clique",
            n=spec["n"],
            m=spec["m"],
            rounds=spec["rounds"],
            trials=spec["trials"],
            seed=spec["seed"],
            min_weight=spec["min_weight"],
            threads=spec["threads"],
        )
        extras = {
            "node_ordering": {"rule": "per-trial cohort members sorted ascending"},
            "mean_closeness": result.mean_closeness,
            "mean_max_pair_hops": result.mean_max_hops,
            "mean_median_pair_hops": result.mean_median_hops,
        }
        return result.tensor, extras
    matrix = _scenario_matrix(spec)
    cfg = TrialConfig(
        mobility=matrix,
        n=spec["n"],
        m=spec["m"],
        rounds=spec["rounds"],
        seed=spec["seed"],
        trial_count=spec["trials"],
    )
    tensor = run_experiment(cfg, threads=spec["threads"])
    extras = {
        "node_ordering": list(range(1, spec["n"] + 1)),
        "mean_closeness": _topology_mean_closeness(matrix),
    }
    return tensor, extras


def cmd_simulate(args) -> int:
    config = _load_config_file(args.config) if args.config else {}
    spec = _resolve(args, config)
    if not spec["scenario"]:
        raise InvalidParameterError("simulate needs --scenario (or a config file)")
    if spec["scenario"] not in SCENARIOS:
        raise InvalidParameterError(f"unknown scenario {spec['scenario']!r}")

    tensor, extras = _run_scenario(spec)
    series = ks_series(tensor)
    crossed = rounds_to_threshold(series, spec["threshold"])

    out_dir = Path(spec["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    engine.write_tensor_csv(tensor, out_dir / "tensor.csv")
    engine.write_series_csv(series, out_dir / "series.csv")
    engine.write_item_series_csv(series, out_dir / "series_items.csv")
    rounds_out, items, nodes = tensor.p.shape
    engine.validate_results_csv(out_dir / "tensor.csv", engine.TENSOR_HEADER, rounds_out * items * nodes)
    engine.validate_results_csv(out_dir / "series.csv", engine.SERIES_HEADER, rounds_out)
    engine.validate_results_csv(out_dir / "series_items.csv", engine.ITEM_SERIES_HEADER, rounds_out * items)
    engine.write_manifest(
        {
            "experiment": {k: spec[k] for k in _CONFIG_KEYS},
            **extras,
            "summary": {
                "ks_threshold": spec["threshold"],
                "crossed_at_round": crossed,
                "final_aggregate_D": float(series.aggregate[-1]),
            },
        },
        out_dir / "manifest.json",
    )

    if crossed is not None:
        print(
            f"aggregate_D fell below {spec['threshold']} at round {crossed} "
            f"(of {spec['rounds']}); results in {out_dir}"
        )
    else:
        print(
            f"aggregate_D did not fall below {spec['threshold']} within "
            f"{spec['rounds']} rounds (final {series.aggregate[-1]:.4f}); "
            f"results in {out_dir}"
        )
    return EXIT_OK


def cmd_traces_extract(args) -> int:
    fixes, planar = read_trace_csv(args.input)
    if not fixes:
        print("warning: trace has no fixes; writing empty cache", file=sys.stderr)
    events = extract_proximity_events(
        fixes, radius_m=args.radius, cooldown_s=args.cooldown, planar=planar
    )
    write_events_csv(events, args.out)
    per_pair = Counter(ev.pair for ev in events)
    print(f"{len(events)} events across {len(per_pair)} pairs -> {args.out}")
    if per_pair:
        histogram = Counter(per_pair.values())
        print("events_per_pair,n_pairs")
        for count in sorted(histogram):
            print(f"{count},{histogram[count]}")
    return EXIT_OK


def cmd_cohort(args) -> int:
    events = read_events_csv(args.events)
    graph = build_contact_graph(events, min_weight=args.min_weight)
    cliques = maximal_cliques(graph) if args.mode == "clique" else None
    cohorts = []
    for k in range(args.count):
        rng = np.random.Generator(kernels.trial_bit_generator(args.seed, k))
        if args.mode == "random":
            cohorts.append(random_connected_cohort(graph, args.n, rng))
        else:
            cohorts.append(combine_cliques(cliques, args.n, graph, rng))
    write_cohort_manifest(cohorts, args.out)
    print(f"wrote {len(cohorts)} cohort(s) to {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if len(args.scenario) < 2:
        raise InvalidParameterError("calibrate needs at least two --scenario flags")
    rows = []
    for scenario in args.scenario:
        if scenario not in SCENARIOS:
            raise InvalidParameterError(f"unknown scenario {scenario!r}")
        spec = _resolve(args, {})
        spec["scenario"] = scenario
        tensor, extras = _run_scenario(spec)
        crossed = rounds_to_threshold(ks_series(tensor), spec["threshold"])
        centrality = extras["mean_closeness"]
        if crossed is None:
            print(
                f"warning: scenario {scenario!r} never crossed {spec['threshold']} "
                f"within {spec['rounds']} rounds",
                file=sys.stderr,
            )
        rows.append((centrality, crossed if crossed is not None else "none"))
        print(f"scenario {scenario}: centrality={centrality:.4f} rounds={rows[-1][1]}")
    write_calibration_csv(rows, args.out)
    print(f"wrote calibration table to {args.out}")
    return EXIT_OK


def _add_experiment_flags(sub, with_scenario=True):
    if with_scenario:
        sub.add_argument("--scenario", choices=SCENARIOS)
    sub.add_argument("--n", type=int, help="cohort size (default 10)")
    sub.add_argument("--m", type=int, help="items per node (default 6)")
    sub.add_argument("--rounds", type=int, help="shuffling rounds (default 100)")
    sub.add_argument("--trials", type=int, help=f"Monte-Carlo trials (default {DEFAULT_TRIALS})")
    sub.add_argument("--desk", action="store_true", help=f"desk-scale preset: {DESK_TRIALS} trials")
    sub.add_argument("--seed", type=int, help="base random seed (default 7)")
    sub.add_argument("--threshold", type=float, help=f"KS stop threshold (default {DEFAULT_KS_THRESHOLD})")
    sub.add_argument("--matrix", help="transition matrix CSV for --scenario custom")
    sub.add_argument("--events", help="contact-event cache CSV for trace scenarios")
    sub.add_argument("--min-weight", dest="min_weight", type=int,
                     help="contact-graph minimum edge weight (default 10)")
    sub.add_argument("--threads", type=int, help="parallel trial workers (default 1)")


def build_parser() -> _Parser:
    parser = _Parser(prog="oppshuffle", description=__doc__)
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"oppshuffle {__version__} "
            f"(results schema {RESULTS_SCHEMA_VERSION}, "
            f"manifest schema {MANIFEST_SCHEMA_VERSION}, "
            f"kernel {kernels.BACKEND})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an experiment and write result CSVs")
    _add_experiment_flags(sim)
    sim.add_argument("--out", help="output directory (default oppshuffle_results)")
    sim.add_argument("--config", help="key=value config file or a manifest.json")
    sim.set_defaults(func=cmd_simulate)

    ext = sub.add_parser("traces-extract", help="extract proximity events from a GPS trace")
    ext.add_argument("--input", required=True, help="trace CSV (user,timestamp,lat,lon)")
    ext.add_argument("--radius", type=parse_length_m, default=DEFAULT_RADIUS_M,
                     help="proximity radius (e.g. 50, 50m, 0.05km)")
    ext.add_argument("--cooldown", type=parse_duration_s, default=DEFAULT_COOLDOWN_S,
                     help="per-pair cooldown (e.g. 1800, 1800s, 30min)")
    ext.add_argument("--out", required=True, help="event cache CSV to write")
    ext.set_defaults(func=cmd_traces_extract)

    coh = sub.add_parser("cohort", help="sample cohorts from an event cache")
    coh.add_argument("--events", required=True, help="event cache CSV")
    coh.add_argument("--mode", choices=("random", "clique"), required=True)
    coh.add_argument("--n", type=int, default=10, help="cohort size")
    coh.add_argument("--seed", type=int, default=7)
    coh.add_argument("--count", type=int, default=1, help="number of cohorts")
    coh.add_argument("--min-weight", dest="min_weight", type=int, default=10)
    coh.add_argument("--out", required=True, help="cohort manifest JSON to write")
    coh.set_defaults(func=cmd_cohort)

    cal = sub.add_parser("calibrate", help="build a centrality -> rounds calibration table")
    cal.add_argument("--scenario", action="append", default=[], choices=SCENARIOS,
                     help="repeat for each scenario (need at least two)")
    _add_experiment_flags(cal, with_scenario=False)
    cal.add_argument("--out", required=True, help="calibration CSV to write")
    cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InfeasibleCohortError as exc:
        print(f"error: infeasible cohort: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvalidParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OppShuffleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
