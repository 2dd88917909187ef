"""``roadpop`` command line.

Exit codes: 0 success, 2 missing input or bad config/input file,
3 internal invariant violation, 1 anything else.
"""
import argparse
import csv
import logging
import sys
from pathlib import Path

from .classify_export import (export_filename, export_geojson, hourly_histogram,
                              period_summary, write_histogram, write_period_summary)
from .map_matching import MatcherConfig
from .pipeline import (ConfigError, InvariantError, load_config, match_all, read_matched,
                       run, write_matched)
from .popularity import GLOBAL, accumulate, evaluate, read_scores, write_scores
from .road_network import NetworkError, id_sort_key, load_network, write_network
from .synth import SynthError, SynthParams, grid_network, synth_tracks, write_point_truth, \
    write_truth
from .tracks import (KINDS, CleaningConfig, PeriodScheme, TrackParseError, assign_period,
                     clean, parse_tracks, write_tracks_csv)

log = logging.getLogger("roadpop")


def _network_args(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return (p,)


def _periods(text):
    return PeriodScheme(tuple(float(x) for x in text.split(",")))


def _matcher(args):
    fields = {k: getattr(args, k) for k in ("sigma", "candidate_radius", "transition_same",
                                             "transition_adjacent", "transition_other")
              if getattr(args, k, None) is not None}
    return MatcherConfig(**fields)


def _add_matcher_flags(p):
    p.add_argument("--sigma", type=float, help="GPS noise std. dev. in meters (default 15)")
    p.add_argument("--candidate-radius", type=float, help="candidate search radius in meters (default 60)")
    p.add_argument("--transition-same", type=float)
    p.add_argument("--transition-adjacent", type=float)
    p.add_argument("--transition-other", type=float)


def _add_track_flags(p):
    p.add_argument("--tracks", required=True)
    p.add_argument("--format", choices=("csv", "gpx"), default="csv")
    p.add_argument("--kind", choices=KINDS, help="default kind for GPX tracks")
    p.add_argument("--manifest", help="GPX sidecar file track_id,user_id,kind")


def _cleaning(args):
    cfg = CleaningConfig.from_file(args.cleaning) if args.cleaning else CleaningConfig()
    for key in ("walk_run_max_speed_kmh", "cycle_max_speed_kmh", "max_gap_m"):
        if getattr(args, key, None) is not None:
            setattr(cfg, key, getattr(args, key))
    return cfg


def cmd_run(args):
    cfg = load_config(args.config, {
        "sigma": args.sigma, "candidate_radius": args.candidate_radius,
        "transition_same": args.transition_same,
        "transition_adjacent": args.transition_adjacent,
        "transition_other": args.transition_other,
        "classes": args.classes, "workers": args.workers, "out": args.out})
    report = run(cfg)
    print(report.as_text(), end="")
    return 0


def cmd_clean(args):
    out = Path(args.out)
    tracks = parse_tracks(args.tracks, args.format, args.kind, args.manifest)
    rules = _cleaning(args)
    scheme = _periods(args.periods)
    out.mkdir(parents=True, exist_ok=True)
    accepted = []
    with open(out / "clean_report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track_id", "user_id", "kind", "status", "reason", "period"])
        for t in tracks:
            res = clean(t, rules)
            period = assign_period(t, scheme) if res.accepted else ""
            if res.accepted:
                accepted.append(t)
            w.writerow([t.track_id, t.user_id, t.kind, res.status.value, res.reason.value, period])
    write_tracks_csv(accepted, out / "tracks_clean.csv")
    print(f"parsed {len(tracks)}, accepted {len(accepted)}")
    return 0


def cmd_match(args):
    net = load_network(*_network_args(args.network))
    tracks = parse_tracks(args.tracks, args.format, args.kind, args.manifest)
    scheme = _periods(args.periods)
    cfg = _matcher(args)
    out = Path(args.out)
    periods = [assign_period(t, scheme) for t in tracks]
    _, _, matched = match_all(zip(tracks, periods), net, cfg, args.workers, keep_matched=True)
    out.mkdir(parents=True, exist_ok=True)
    write_matched(zip(tracks, periods, matched), out)
    print(f"matched {len(tracks)} tracks, breaks {sum(m.break_count for m in matched)}")
    return 0


def cmd_score(args):
    items = read_matched(args.matched)
    scores = evaluate(accumulate(items))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scores(scores, out / "scores.csv", seg_key=id_sort_key({m.segment_id for m in scores}))
    print(f"{len(scores)} scores")
    return 0


def cmd_export(args):
    net = load_network(*_network_args(args.network))
    scores = read_scores(args.scores)
    scheme = _periods(args.periods)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind in KINDS:
        for scope in (GLOBAL, *scheme.names):
            export_geojson(net, scores, scope, kind, args.classes,
                           out / export_filename(kind, scope), scheme)
    return 0


def cmd_stats(args):
    tracks = parse_tracks(args.tracks, args.format, args.kind, args.manifest)
    rules = _cleaning(args)
    scheme = _periods(args.periods)
    accepted = [t for t in tracks if clean(t, rules).accepted]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = [args.kind] if args.kind else list(KINDS)
    for kind in kinds:
        write_histogram(hourly_histogram(accepted, kind), out / f"histogram_{kind}.csv")
    table = period_summary(((t, assign_period(t, scheme)) for t in accepted), scheme)
    write_period_summary(table, out / "period_summary.csv")
    return 0


def cmd_synth(args):
    out = Path(args.out)
    if args.grid:
        rows, cols = (int(x) for x in args.grid.lower().split("x"))
        net = grid_network(rows, cols, args.spacing_m, n_segments=args.segments, seed=args.seed)
    elif args.network:
        net = load_network(*_network_args(args.network))
    else:
        raise ConfigError("either --network or --grid is required")
    lo, hi = (float(x) for x in args.speed_kmh.split(","))
    params = SynthParams(users=args.users, activities=args.activities, noise_m=args.noise_m,
                         interval_m=args.interval_m, speed_kmh=(lo, hi), kind=args.kind,
                         min_segments=args.min_segments, max_segments=args.max_segments,
                         n_points=args.points, seed=args.seed)
    tracks, truths = synth_tracks(net, params)
    out.mkdir(parents=True, exist_ok=True)
    if args.grid:
        write_network(net, out / "network")
    write_tracks_csv(tracks, out / "tracks.csv")
    write_truth(truths, out / "truth.csv")
    write_point_truth(truths, out / "truth_points.csv")
    print(f"{len(tracks)} tracks written to {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="roadpop",
                                     description="Road popularity from sports GPS tracks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    _add_matcher_flags(p)
    p.add_argument("--classes", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    for name, func, help_ in (("clean", cmd_clean, "clean tracks and assign periods"),
                              ("stats", cmd_stats, "hourly histogram and period summary")):
        p = sub.add_parser(name, help=help_)
        _add_track_flags(p)
        p.add_argument("--cleaning", help="key=value cleaning config file")
        p.add_argument("--walk-run-max-speed-kmh", type=float)
        p.add_argument("--cycle-max-speed-kmh", type=float)
        p.add_argument("--max-gap-m", type=float)
        p.add_argument("--periods", default="0,6,10,16,20", help="period start hours")
        p.add_argument("--out", default=".")
        p.set_defaults(func=func)

    p = sub.add_parser("match", help="map-match cleaned tracks")
    p.add_argument("--network", required=True)
    _add_track_flags(p)
    _add_matcher_flags(p)
    p.add_argument("--periods", default="0,6,10,16,20")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("score", help="popularity scores from match output")
    p.add_argument("--matched", required=True, help="directory written by `match`")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("export", help="classified GeoJSON per scope and kind")
    p.add_argument("--network", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--periods", default="0,6,10,16,20")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth", help="synthetic tracks with ground truth")
    p.add_argument("--network", help="network directory or GeoJSON file")
    p.add_argument("--grid", help="generate a ROWSxCOLS grid network instead")
    p.add_argument("--spacing-m", type=float, default=200.0)
    p.add_argument("--segments", type=int, help="prune the grid to this many segments")
    p.add_argument("--users", type=int, default=10)
    p.add_argument("--activities", type=int, default=5)
    p.add_argument("--noise-m", type=float, default=15.0)
    p.add_argument("--interval-m", type=float, default=10.0)
    p.add_argument("--speed-kmh", default="4,8", help="min,max speed")
    p.add_argument("--kind", choices=KINDS, default="walk_run")
    p.add_argument("--min-segments", type=int, default=3)
    p.add_argument("--max-segments", type=int, default=6)
    p.add_argument("--points", type=int, help="fixed number of points per track")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"roadpop: missing input: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, NetworkError, TrackParseError, SynthError) as exc:
        print(f"roadpop: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"roadpop: invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
