"""Activity track parsing, cleaning and temporal-period assignment."""
import configparser
import csv
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, fields
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

from .geo import haversine

log = logging.getLogger(__name__)

WALK_RUN = "walk_run"
CYCLE = "cycle"
KINDS = (WALK_RUN, CYCLE)
CROSSING = "crossing"
DAY_S = 86400.0

CSV_COLUMNS = ("track_id", "user_id", "kind", "timestamp_iso8601", "lat", "lon")


class TrackParseError(ValueError):
    """File-level problem that makes a track source unreadable."""


class Status(str, Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class Reason(str, Enum):
    NONE = "none"
    OVERSPEED = "overspeed"
    GAP_TOO_LONG = "gap_too_long"
    TOO_FEW_POINTS = "too_few_points"
    NON_MONOTONIC_TIME = "non_monotonic_time"


@dataclass(frozen=True)
class CleanResult:
    status: Status
    reason: Reason = Reason.NONE

    @property
    def accepted(self):
        return self.status is Status.ACCEPTED


ACCEPTED = CleanResult(Status.ACCEPTED)


@dataclass(frozen=True)
class TrackPoint:
    timestamp: datetime
    lat: float
    lon: float

    @property
    def position(self):
        return (self.lat, self.lon)


def parse_timestamp(text):
    """Parse an ISO 8601 instant into (UTC epoch seconds, UTC offset seconds).

    Naive timestamps are taken as local civil time with a zero offset.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    off = dt.utcoffset()
    off_s = off.total_seconds() if off is not None else 0.0
    naive = dt.replace(tzinfo=None)
    epoch = (naive - datetime(1970, 1, 1)).total_seconds() - off_s
    return epoch, off_s


def format_timestamp(epoch, offset_s):
    tz = timezone(timedelta(seconds=int(offset_s)))
    dt = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(seconds=float(epoch))
    return dt.astimezone(tz).isoformat()


class Track:
    """One user's one activity.

    Points are stored column-wise: ``lat``, ``lon``, ``epoch`` (UTC seconds)
    and ``offset`` (UTC offset of the recording, seconds).
    """

    __slots__ = ("track_id", "user_id", "kind", "lat", "lon", "epoch", "offset")

    def __init__(self, track_id, user_id, kind, lat, lon, epoch, offset=None):
        self.track_id = str(track_id)
        self.user_id = str(user_id)
        self.kind = kind
        self.lat = np.asarray(lat, dtype=float)
        self.lon = np.asarray(lon, dtype=float)
        self.epoch = np.asarray(epoch, dtype=float)
        self.offset = (np.zeros_like(self.epoch) if offset is None
                       else np.asarray(offset, dtype=float))

    @classmethod
    def from_points(cls, track_id, user_id, kind, points):
        epochs, offs = [], []
        for p in points:
            off = p.timestamp.utcoffset()
            off_s = off.total_seconds() if off is not None else 0.0
            naive = p.timestamp.replace(tzinfo=None)
            epochs.append((naive - datetime(1970, 1, 1)).total_seconds() - off_s)
            offs.append(off_s)
        return cls(track_id, user_id, kind, [p.lat for p in points],
                   [p.lon for p in points], epochs, offs)

    def __len__(self):
        return len(self.lat)

    def __repr__(self):
        return f"Track({self.track_id!r}, user={self.user_id!r}, kind={self.kind!r}, n={len(self)})"

    @property
    def points(self):
        out = []
        for la, lo, e, o in zip(self.lat.tolist(), self.lon.tolist(),
                                self.epoch.tolist(), self.offset.tolist()):
            tz = timezone(timedelta(seconds=int(o)))
            ts = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(seconds=e)
            out.append(TrackPoint(ts.astimezone(tz), la, lo))
        return out

    def local_seconds(self):
        """Local civil time of each point as seconds since 1970-01-01 local."""
        return self.epoch + self.offset


# -- metrics and cleaning ----------------------------------------------------

def step_distances(t):
    return haversine(t.lat[:-1], t.lon[:-1], t.lat[1:], t.lon[1:])


def average_speed(t):
    """Average speed in km/h: path length over elapsed time."""
    elapsed = float(t.epoch[-1] - t.epoch[0]) if len(t) else 0.0
    if not elapsed > 0:
        raise ValueError(f"track {t.track_id!r}: no elapsed time")
    return float(np.sum(step_distances(t))) / elapsed * 3.6


def max_gap(t):
    """Largest distance in meters between consecutive points."""
    if len(t) < 2:
        return 0.0
    return float(np.max(step_distances(t)))


@dataclass
class CleaningConfig:
    walk_run_max_speed_kmh: float = 25.0
    cycle_max_speed_kmh: float = 35.0
    max_gap_m: float = 1000.0

    def speed_limit(self, kind):
        if kind == WALK_RUN:
            return self.walk_run_max_speed_kmh
        if kind == CYCLE:
            return self.cycle_max_speed_kmh
        raise ValueError(f"unknown activity kind {kind!r}")

    def update(self, mapping):
        names = {f.name for f in fields(self)}
        for key, value in mapping.items():
            if key not in names:
                raise ValueError(f"unknown cleaning key {key!r}")
            setattr(self, key, float(value))
        return self

    @classmethod
    def from_file(cls, path):
        """Read ``key=value`` lines (an optional ``[cleaning]`` header is allowed)."""
        text = Path(path).read_text(encoding="utf-8")
        cp = configparser.ConfigParser()
        if not text.lstrip().startswith("["):
            text = "[cleaning]\n" + text
        cp.read_string(text)
        return cls().update(dict(cp["cleaning"]) if cp.has_section("cleaning") else {})


def clean(t, rules=None):
    """Apply the rejection rules; limits are exclusive (value must be below)."""
    rules = rules or CleaningConfig()
    if len(t) < 2:
        return CleanResult(Status.REJECTED, Reason.TOO_FEW_POINTS)
    if np.any(np.diff(t.epoch) < 0) or not t.epoch[-1] > t.epoch[0]:
        return CleanResult(Status.REJECTED, Reason.NON_MONOTONIC_TIME)
    if average_speed(t) >= rules.speed_limit(t.kind):
        return CleanResult(Status.REJECTED, Reason.OVERSPEED)
    if max_gap(t) >= rules.max_gap_m:
        return CleanResult(Status.REJECTED, Reason.GAP_TOO_LONG)
    return ACCEPTED


# -- temporal periods --------------------------------------------------------

class PeriodScheme:
    """Half-open local-time intervals that partition the day.

    ``starts_h`` are the period start hours; the last period runs to 24:00.
    """

    def __init__(self, starts_h=(0, 6, 10, 16, 20), names=None):
        starts = [float(h) for h in starts_h]
        if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])) \
                or starts[-1] >= 24:
            raise ValueError(f"period starts must begin at 0 and increase below 24: {starts_h}")
        self.starts_s = np.array(starts) * 3600.0
        self.ends_s = np.append(self.starts_s[1:], DAY_S)
        self.names = tuple(names) if names else tuple(f"P{k + 1}" for k in range(len(starts)))
        if len(self.names) != len(starts):
            raise ValueError("one name per period required")

    def __repr__(self):
        return f"PeriodScheme({[s / 3600 for s in self.starts_s.tolist()]})"

    def index_of(self, seconds_of_day):
        """Period index for seconds since local midnight (array or scalar)."""
        return np.searchsorted(self.starts_s, seconds_of_day, side="right") - 1

    def period_of(self, seconds_of_day):
        return self.names[int(self.index_of(seconds_of_day))]


DEFAULT_PERIODS = PeriodScheme()


def assign_period(t, scheme=DEFAULT_PERIODS):
    """Name of the single period holding every point, or ``CROSSING``.

    All points must fall inside the same occurrence of the period (same local
    day), using the local civil time of the recording.
    """
    loc = t.local_seconds()
    first = float(loc[0])
    day = math.floor(first / DAY_S) * DAY_S
    k = int(scheme.index_of(first - day))
    lo = day + scheme.starts_s[k]
    hi = day + scheme.ends_s[k]
    if np.all((loc >= lo) & (loc < hi)):
        return scheme.names[k]
    return CROSSING


def start_hour(t):
    """Local hour (0-23) of the first point."""
    return int(((float(t.local_seconds()[0]) % DAY_S) // 3600))


# -- parsing -----------------------------------------------------------------

@dataclass
class ParseStats:
    rejected_rows: int = 0
    rejected_tracks: int = 0


def _valid_coord(lat, lon):
    return (math.isfinite(lat) and math.isfinite(lon)
            and -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0)


def parse_tracks(source, fmt="csv", kind=None, manifest=None, stats=None):
    """Read activities from a CSV or GPX file.

    Malformed point records are dropped with a warning and counted in
    ``stats.rejected_rows``; an unreadable file raises TrackParseError.
    """
    stats = stats if stats is not None else ParseStats()
    path = Path(source)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if fmt == "csv":
        return _parse_csv(path, stats)
    if fmt == "gpx":
        return _parse_gpx(path, kind, manifest, stats)
    raise ValueError(f"unknown track format {fmt!r}")


def _parse_csv(path, stats):
    groups = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise TrackParseError(f"{path}: empty file, header row required")
            header = [h.strip() for h in header]
            missing = [c for c in CSV_COLUMNS if c not in header]
            if missing:
                raise TrackParseError(f"{path}: missing columns {missing}")
            col = [header.index(c) for c in CSV_COLUMNS]
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    tid, uid, kind, ts, lat, lon = (row[c] for c in col)
                    lat = float(lat)
                    lon = float(lon)
                    if not _valid_coord(lat, lon):
                        raise ValueError(f"coordinate out of range ({lat}, {lon})")
                    if kind not in KINDS:
                        raise ValueError(f"unknown kind {kind!r}")
                    epoch, off = parse_timestamp(ts)
                except (ValueError, IndexError) as exc:
                    log.warning("%s:%d: dropping row: %s", path, lineno, exc)
                    stats.rejected_rows += 1
                    continue
                g = groups.get(tid)
                if g is None:
                    g = groups[tid] = (uid, kind, [], [], [], [])
                elif g[0] != uid or g[1] != kind:
                    log.warning("%s:%d: user/kind differs within track %r; dropping row",
                                path, lineno, tid)
                    stats.rejected_rows += 1
                    continue
                g[2].append(lat)
                g[3].append(lon)
                g[4].append(epoch)
                g[5].append(off)
    except (UnicodeDecodeError, csv.Error) as exc:
        raise TrackParseError(f"{path}: {exc}") from None
    return [Track(tid, uid, kind, la, lo, ep, of)
            for tid, (uid, kind, la, lo, ep, of) in groups.items()]


def _local(tag):
    return tag.rsplit("}", 1)[-1]


def read_manifest(path):
    """Sidecar ``track_id,user_id,kind`` file used for GPX metadata."""
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["track_id"]: (row["user_id"], row["kind"]) for row in csv.DictReader(fh)}


def _parse_gpx(path, default_kind, manifest, stats):
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise TrackParseError(f"{path}: {exc}") from None
    meta = read_manifest(manifest) if isinstance(manifest, (str, Path)) else (manifest or {})
    tracks = []
    for n, trk in enumerate(el for el in root if _local(el.tag) == "trk"):
        info = {}
        for el in trk:
            name = _local(el.tag)
            if name == "name" and el.text:
                info["track_id"] = el.text.strip()
            elif name == "extensions":
                for ext in el.iter():
                    key = _local(ext.tag)
                    if key in ("user_id", "kind", "track_id") and ext.text:
                        info[key] = ext.text.strip()
        tid = info.get("track_id") or f"{path.stem}-{n}"
        uid, kind = meta.get(tid, (info.get("user_id"), info.get("kind") or default_kind))
        if uid is None or kind not in KINDS:
            log.warning("%s: track %r lacks user/kind metadata; skipped", path, tid)
            stats.rejected_tracks += 1
            continue
        la, lo, ep, of = [], [], [], []
        for pt in trk.iter():
            if _local(pt.tag) != "trkpt":
                continue
            try:
                lat = float(pt.get("lat"))
                lon = float(pt.get("lon"))
                if not _valid_coord(lat, lon):
                    raise ValueError(f"coordinate out of range ({lat}, {lon})")
                when = next((c.text for c in pt if _local(c.tag) == "time"), None)
                if when is None:
                    raise ValueError("missing <time>")
                epoch, off = parse_timestamp(when)
            except (TypeError, ValueError) as exc:
                log.warning("%s: track %r: dropping point: %s", path, tid, exc)
                stats.rejected_rows += 1
                continue
            la.append(lat)
            lo.append(lon)
            ep.append(epoch)
            of.append(off)
        tracks.append(Track(tid, uid, kind, la, lo, ep, of))
    return tracks


def write_tracks_csv(tracks, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in tracks:
            for la, lo, e, o in zip(t.lat.tolist(), t.lon.tolist(),
                                    t.epoch.tolist(), t.offset.tolist()):
                w.writerow([t.track_id, t.user_id, t.kind, format_timestamp(e, o),
                            repr(la), repr(lo)])
