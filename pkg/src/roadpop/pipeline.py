"""End-to-end pipeline: load, parse, clean, match, score, classify, export."""
import configparser
import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .classify_export import (export_filename, export_geojson, hourly_histogram,
                              period_summary, write_histogram, write_period_summary)
from .map_matching import (Assignment, MatchedTrack, MatcherConfig, match_track,
                           traversed_segments)
from .popularity import GLOBAL, accumulate, evaluate, merge_tables, write_scores
from .road_network import id_sort_key, load_network
from .tracks import (CROSSING, KINDS, CleaningConfig, ParseStats, PeriodScheme, Reason,
                     assign_period, clean, parse_tracks)

log = logging.getLogger(__name__)

CHUNK = 64


class ConfigError(ValueError):
    pass


class InvariantError(RuntimeError):
    pass


@dataclass
class TrackSource:
    path: Path
    format: str = "csv"
    kind: str = None
    manifest: Path = None


@dataclass
class PipelineConfig:
    network: tuple = ()
    sources: list = field(default_factory=list)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    period_starts: tuple = (0, 6, 10, 16, 20)
    classes: int = 5
    out_dir: Path = Path("out")
    workers: int = 1

    def check(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.classes < 1:
            raise ConfigError("classes must be >= 1")
        for p in list(self.network) + [s.path for s in self.sources] + \
                [s.manifest for s in self.sources if s.manifest]:
            if not Path(p).exists():
                raise FileNotFoundError(str(p))

    def echo(self):
        return {
            "network": [str(p) for p in self.network],
            "sources": [{"path": str(s.path), "format": s.format, "kind": s.kind,
                         "manifest": str(s.manifest) if s.manifest else None}
                        for s in self.sources],
            "cleaning": asdict(self.cleaning),
            "matcher": asdict(self.matcher),
            "period_starts": list(self.period_starts),
            "classes": self.classes,
            "out_dir": str(self.out_dir),
            "workers": self.workers,
        }


def load_config(path, overrides=None):
    """Read an INI-style pipeline config; `overrides` (flat dict) win.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    def rel(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    cfg = PipelineConfig()
    try:
        if cp.has_section("network"):
            net = cp["network"]
            if "path" in net:
                cfg.network = (rel(net["path"]),)
            else:
                cfg.network = (rel(net["vertices"]), rel(net["segments"]))
        else:
            raise ConfigError(f"{path}: [network] section required")
        for name in cp.sections():
            if name == "tracks" or name.startswith("tracks."):
                sec = cp[name]
                cfg.sources.append(TrackSource(
                    rel(sec["path"]), sec.get("format", "csv"), sec.get("kind"),
                    rel(sec["manifest"]) if sec.get("manifest") else None))
        if cp.has_section("cleaning"):
            cfg.cleaning.update(dict(cp["cleaning"]))
        matcher = dict(cp["matcher"]) if cp.has_section("matcher") else {}
        for key in ("sigma", "candidate_radius", "transition_same",
                    "transition_adjacent", "transition_other"):
            if key in overrides:
                matcher[key] = overrides[key]
        cfg.matcher = MatcherConfig(**{k: float(v) for k, v in matcher.items()})
        if cp.has_section("periods") and "starts" in cp["periods"]:
            cfg.period_starts = tuple(float(x) for x in cp["periods"]["starts"].split(","))
        out = cp["output"] if cp.has_section("output") else {}
        cfg.classes = int(overrides.get("classes", out.get("classes", 5)))
        cfg.out_dir = Path(overrides["out"]) if "out" in overrides else rel(out.get("dir", "out"))
        cfg.workers = int(overrides.get("workers", out.get("workers", os.cpu_count() or 1)))
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from None
    return cfg


@dataclass
class RunReport:
    parsed: int = 0
    parse_rejected_rows: int = 0
    rejected: dict = field(default_factory=lambda: {r.value: 0 for r in Reason if r is not Reason.NONE})
    accepted: int = 0
    per_period: dict = field(default_factory=dict)
    crossing: int = 0
    matched: int = 0
    unmatched: int = 0
    assigned_points: int = 0
    breaks_total: int = 0
    scores: int = 0
    timings_s: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def check(self):
        if self.accepted + sum(self.rejected.values()) != self.parsed:
            raise InvariantError("accepted + rejected != parsed")
        if sum(self.per_period.values()) + self.crossing != self.accepted:
            raise InvariantError("per-period + crossing != accepted")
        if self.matched + self.unmatched != self.accepted:
            raise InvariantError("matched + unmatched != accepted")

    def as_text(self):
        lines = ["[counts]"]
        for key in ("parsed", "parse_rejected_rows", "accepted", "crossing", "matched",
                    "unmatched", "assigned_points", "breaks_total", "scores"):
            lines.append(f"{key}: {getattr(self, key)}")
        for title, section in (("rejected", self.rejected), ("per_period", self.per_period),
                               ("timings_s", self.timings_s)):
            lines.append("")
            lines.append(f"[{title}]")
            lines.extend(f"{k}: {v}" for k, v in section.items())
        lines.append("")
        lines.append("[config]")
        lines.extend(f"{k}: {json.dumps(v)}" for k, v in self.config.items())
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out_dir = Path(out_dir)
        (out_dir / "run_report.txt").write_text(self.as_text(), encoding="utf-8")
        (out_dir / "run_report.json").write_text(
            json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


# -- matching fan-out --------------------------------------------------------

_worker_state = {}


def _init_worker(net, cfg):
    _worker_state["net"] = net
    _worker_state["cfg"] = cfg


def _match_chunk(job):
    items, keep = job
    net = _worker_state["net"]
    cfg = _worker_state["cfg"]
    matched = []
    summary = []
    for t, period in items:
        m = match_track(t, net, cfg)
        matched.append((m, t.user_id, t.kind, period))
        summary.append((t.track_id, len(m.assignments), m.break_count))
    return accumulate(matched), summary, [m for m, *_ in matched] if keep else None


def match_all(tracks_with_periods, net, cfg, workers=1, keep_matched=False):
    """Match tracks, possibly in a process pool, and merge usage tables.

    Returns (tables, per-track summaries, matched tracks or None). Output does
    not depend on the worker count.
    """
    items = list(tracks_with_periods)
    chunks = [(items[i:i + CHUNK], keep_matched) for i in range(0, len(items), CHUNK)]
    if workers <= 1 or len(chunks) <= 1:
        _init_worker(net, cfg)
        results = [_match_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(net, cfg)) as pool:
            results = list(pool.map(_match_chunk, chunks))
    tables = merge_tables(r[0] for r in results)
    summary = [s for r in results for s in r[1]]
    matched = [m for r in results for m in r[2]] if keep_matched else None
    return tables, summary, matched


# -- run ---------------------------------------------------------------------

def read_sources(cfg, report=None):
    stats = ParseStats()
    tracks = []
    for src in cfg.sources:
        tracks.extend(parse_tracks(src.path, src.format, kind=src.kind,
                                   manifest=src.manifest, stats=stats))
    if report is not None:
        report.parse_rejected_rows = stats.rejected_rows + stats.rejected_tracks
    return tracks


def clean_and_assign(tracks, cleaning, scheme, report):
    accepted = []
    periods = []
    report.per_period = {name: 0 for name in scheme.names}
    for t in tracks:
        res = clean(t, cleaning)
        if not res.accepted:
            report.rejected[res.reason.value] += 1
            continue
        p = assign_period(t, scheme)
        if p == CROSSING:
            report.crossing += 1
        else:
            report.per_period[p] += 1
        accepted.append(t)
        periods.append(p)
    report.accepted = len(accepted)
    return accepted, periods


def run(cfg):
    """Run every stage and write all outputs into ``cfg.out_dir``."""
    cfg.check()
    report = RunReport(config=cfg.echo())
    scheme = PeriodScheme(cfg.period_starts)
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        report.timings_s[name] = round(now - clock, 6)
        clock = now

    net = load_network(*cfg.network)
    lap("load_network")
    tracks = read_sources(cfg, report)
    report.parsed = len(tracks)
    lap("parse")
    accepted, periods = clean_and_assign(tracks, cfg.cleaning, scheme, report)
    lap("clean")
    tables, summary, _ = match_all(zip(accepted, periods), net, cfg.matcher, cfg.workers)
    report.matched = sum(1 for _, n, _ in summary if n > 0)
    report.unmatched = len(summary) - report.matched
    report.assigned_points = sum(n for _, n, _ in summary)
    report.breaks_total = sum(b for _, _, b in summary)
    lap("match")
    scores = evaluate(tables)
    report.scores = len(scores)
    lap("score")
    report.check()

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_outputs(out, net, scores, accepted, periods, scheme, cfg.classes)
    lap("export")
    report.write(out)
    return report


def write_outputs(out, net, scores, accepted, periods, scheme, classes):
    write_scores(scores, out / "scores.csv", seg_key=id_sort_key(net.segment_ids))
    for kind in KINDS:
        for scope in (GLOBAL, *scheme.names):
            export_geojson(net, scores, scope, kind, classes,
                           out / export_filename(kind, scope), scheme)
        write_histogram(hourly_histogram(accepted, kind), out / f"histogram_{kind}.csv")
    write_period_summary(period_summary(zip(accepted, periods), scheme),
                         out / "period_summary.csv")


# -- stage files ---------------------------------------------------------------

MATCHED_COLUMNS = ("track_id", "point_index", "segment_id", "distance_m")
SUMMARY_COLUMNS = ("track_id", "user_id", "kind", "period", "assigned", "break_count")


def write_matched(pairs, out_dir):
    """Write ``matched.csv`` and ``matched_summary.csv`` for (track, period,
    MatchedTrack) triples."""
    out_dir = Path(out_dir)
    with open(out_dir / "matched.csv", "w", newline="", encoding="utf-8") as fh, \
            open(out_dir / "matched_summary.csv", "w", newline="", encoding="utf-8") as sh:
        w = csv.writer(fh, lineterminator="\n")
        s = csv.writer(sh, lineterminator="\n")
        w.writerow(MATCHED_COLUMNS)
        s.writerow(SUMMARY_COLUMNS)
        for t, period, m in pairs:
            for a in m.assignments:
                w.writerow([t.track_id, a.point_index, a.segment_id, f"{a.distance:.3f}"])
            s.writerow([t.track_id, t.user_id, t.kind, period, len(m.assignments),
                        m.break_count])


def read_matched(in_dir):
    """Rebuild (MatchedTrack, user_id, kind, period) items from stage files."""
    in_dir = Path(in_dir)
    by_track = {}
    with open(in_dir / "matched.csv", newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            by_track.setdefault(r["track_id"], []).append(
                Assignment(int(r["point_index"]), r["segment_id"], None, None,
                           float(r["distance_m"])))
    items = []
    with open(in_dir / "matched_summary.csv", newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            m = MatchedTrack(r["track_id"], by_track.get(r["track_id"], []), [],
                             int(r["break_count"]))
            m.traversed = traversed_segments(m)
            items.append((m, r["user_id"], r["kind"], r["period"]))
    return items
