"""Road network loading, validation and spatial queries.

A network is a set of junction vertices and undirected road segments. Each
segment carries a polyline whose first and last points sit on its endpoint
vertices. Nearest-segment queries go through a uniform grid over polyline
piece bounding boxes and always return exactly what a linear scan would.
"""
import csv
import json
import math
from collections import namedtuple
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .geo import EARTH_RADIUS_M, aeqd_forward, aeqd_inverse, haversine

ENDPOINT_TOLERANCE_DEG = 1e-9

Candidate = namedtuple("Candidate", "segment_id lat lon distance")


class NetworkError(ValueError):
    """Raised when network input is malformed or inconsistent."""


class Relation(str, Enum):
    SAME = "same"
    ADJACENT = "adjacent"
    DISCONNECTED = "disconnected"


@dataclass(frozen=True)
class Vertex:
    id: str
    lat: float
    lon: float

    @property
    def position(self):
        return (self.lat, self.lon)


@dataclass(frozen=True)
class RoadSegment:
    id: str
    endpoint_a: str
    endpoint_b: str
    polyline: tuple  # ((lat, lon), ...)
    length: float


def polyline_length(polyline):
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(haversine(pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1])))


def id_sort_key(ids):
    """Return a sort key for opaque ids: numeric order if every id is an
    integer literal, plain string order otherwise."""
    ids = list(ids)
    if ids and all(_is_int(i) for i in ids):
        return lambda i: (int(i), i)
    return str


def _is_int(s):
    try:
        int(s)
    except ValueError:
        return False
    return True


def _check_coord(lat, lon, what):
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise NetworkError(f"{what}: non-finite coordinate")
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise NetworkError(f"{what}: coordinate out of range ({lat}, {lon})")


def project_pairs(plat, plon, alat, alon, blat, blon):
    """Project points onto straight pieces A-B in the azimuthal equidistant
    plane of each point.

    Returns (distance, x, y) where (x, y) is the planar foot of the
    perpendicular relative to the query point.
    """
    ax, ay = aeqd_forward(plat, plon, alat, alon)
    bx, by = aeqd_forward(plat, plon, blat, blon)
    dx = bx - ax
    dy = by - ay
    den = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = -(ax * dx + ay * dy) / den
    t = np.where(den > 0.0, np.clip(t, 0.0, 1.0), 0.0)
    fx = ax + t * dx
    fy = ay + t * dy
    return np.hypot(fx, fy), fx, fy


class GridIndex:
    """Uniform lat/lon grid over polyline piece bounding boxes."""

    def __init__(self, alat, alon, blat, blon, cell_m=100.0):
        self.n = len(alat)
        ref_lat = float(np.mean(np.concatenate([alat, blat]))) if self.n else 0.0
        self.cell_lat = math.degrees(cell_m / EARTH_RADIUS_M)
        self.cell_lon = self.cell_lat / max(math.cos(math.radians(ref_lat)), 0.01)
        piece_len = haversine(alat, alon, blat, blon)
        # covers the gap between a projected chord and its lat/lon box
        pad = np.degrees((1.0 + 0.01 * piece_len) / EARTH_RADIUS_M)
        lat_lo = np.minimum(alat, blat) - pad
        lat_hi = np.maximum(alat, blat) + pad
        cos_lat = np.maximum(np.cos(np.radians(np.maximum(np.abs(lat_lo), np.abs(lat_hi)))), 1e-6)
        lon_pad = pad / cos_lat
        lon_lo = np.minimum(alon, blon) - lon_pad
        lon_hi = np.maximum(alon, blon) + lon_pad
        self.cells = {}
        i0 = np.floor(lat_lo / self.cell_lat).astype(np.int64)
        i1 = np.floor(lat_hi / self.cell_lat).astype(np.int64)
        j0 = np.floor(lon_lo / self.cell_lon).astype(np.int64)
        j1 = np.floor(lon_hi / self.cell_lon).astype(np.int64)
        for k in range(self.n):
            for i in range(i0[k], i1[k] + 1):
                for j in range(j0[k], j1[k] + 1):
                    self.cells.setdefault((i, j), []).append(k)
        self.cells = {key: np.asarray(v, dtype=np.int64) for key, v in self.cells.items()}
        self._empty = np.empty(0, dtype=np.int64)

    def query(self, lat, lon, radius):
        """Piece indices whose padded box may hold a point within `radius`."""
        ang = radius / EARTH_RADIUS_M
        dlat = math.degrees(ang)
        cos_lat = math.cos(math.radians(lat))
        if ang >= math.pi / 2 or cos_lat <= math.sin(ang):
            return np.arange(self.n, dtype=np.int64)
        dlon = math.degrees(math.asin(math.sin(ang) / cos_lat))
        i0 = math.floor((lat - dlat) / self.cell_lat)
        i1 = math.floor((lat + dlat) / self.cell_lat)
        j0 = math.floor((lon - dlon) / self.cell_lon)
        j1 = math.floor((lon + dlon) / self.cell_lon)
        if (i1 - i0 + 1) * (j1 - j0 + 1) > len(self.cells):
            return np.arange(self.n, dtype=np.int64)
        cells = self.cells
        found = [cells[key] for i in range(i0, i1 + 1) for j in range(j0, j1 + 1)
                 if (key := (i, j)) in cells]
        if not found:
            return self._empty
        if len(found) == 1:
            return found[0]
        return np.concatenate(found)


class RoadNetwork:
    """Immutable, validated road graph with a spatial index.

    Segment ids are ordered by :func:`id_sort_key`; the integer position of a
    segment in that order (its *index*) is used for deterministic tie-breaks.
    """

    def __init__(self, vertices, segments, cell_m=100.0):
        self.vertices = {}
        for v in vertices:
            if v.id in self.vertices:
                raise NetworkError(f"duplicate vertex id {v.id!r}")
            _check_coord(v.lat, v.lon, f"vertex {v.id!r}")
            self.vertices[v.id] = v
        seg_map = {}
        for s in segments:
            if s.id in seg_map:
                raise NetworkError(f"duplicate segment id {s.id!r}")
            for end in (s.endpoint_a, s.endpoint_b):
                if end not in self.vertices:
                    raise NetworkError(
                        f"segment {s.id!r} references missing vertex {end!r}")
            if len(s.polyline) < 2:
                raise NetworkError(f"segment {s.id!r}: polyline needs at least 2 points")
            for lat, lon in s.polyline:
                _check_coord(lat, lon, f"segment {s.id!r}")
            va = self.vertices[s.endpoint_a]
            vb = self.vertices[s.endpoint_b]
            first, last = s.polyline[0], s.polyline[-1]
            if (abs(first[0] - va.lat) > ENDPOINT_TOLERANCE_DEG
                    or abs(first[1] - va.lon) > ENDPOINT_TOLERANCE_DEG
                    or abs(last[0] - vb.lat) > ENDPOINT_TOLERANCE_DEG
                    or abs(last[1] - vb.lon) > ENDPOINT_TOLERANCE_DEG):
                raise NetworkError(
                    f"segment {s.id!r}: polyline ends do not match endpoint vertices")
            if not s.length > 0:
                raise NetworkError(f"segment {s.id!r}: zero length")
            seg_map[s.id] = s

        key = id_sort_key(seg_map)
        self.segment_ids = tuple(sorted(seg_map, key=key))
        self.segments = {sid: seg_map[sid] for sid in self.segment_ids}
        self._index_of = {sid: k for k, sid in enumerate(self.segment_ids)}
        self._by_vertex = {}
        for sid in self.segment_ids:
            seg = self.segments[sid]
            for end in dict.fromkeys((seg.endpoint_a, seg.endpoint_b)):
                self._by_vertex.setdefault(end, []).append(sid)

        vkey = id_sort_key(self.vertices)
        vorder = {vid: k for k, vid in enumerate(sorted(self.vertices, key=vkey))}
        self.seg_a = np.array([vorder[self.segments[s].endpoint_a] for s in self.segment_ids],
                              dtype=np.int64)
        self.seg_b = np.array([vorder[self.segments[s].endpoint_b] for s in self.segment_ids],
                              dtype=np.int64)

        piece_seg, alat, alon, blat, blon = [], [], [], [], []
        for k, sid in enumerate(self.segment_ids):
            pts = self.segments[sid].polyline
            for (la, lo), (lb, lob) in zip(pts[:-1], pts[1:]):
                piece_seg.append(k)
                alat.append(la)
                alon.append(lo)
                blat.append(lb)
                blon.append(lob)
        self.piece_seg = np.asarray(piece_seg, dtype=np.int64)
        self.piece_alat = np.asarray(alat, dtype=float)
        self.piece_alon = np.asarray(alon, dtype=float)
        self.piece_blat = np.asarray(blat, dtype=float)
        self.piece_blon = np.asarray(blon, dtype=float)
        self.index = GridIndex(self.piece_alat, self.piece_alon,
                               self.piece_blat, self.piece_blon, cell_m=cell_m)

    def __len__(self):
        return len(self.segment_ids)

    def index_of(self, segment_id):
        try:
            return self._index_of[segment_id]
        except KeyError:
            raise KeyError(f"unknown segment id {segment_id!r}") from None

    def adjacency(self, a, b):
        """Relation between two segments: same, adjacent (shared endpoint)
        or disconnected."""
        sa = self.segments.get(a)
        sb = self.segments.get(b)
        if sa is None or sb is None:
            raise KeyError(f"unknown segment id {a if sa is None else b!r}")
        if a == b:
            return Relation.SAME
        if {sa.endpoint_a, sa.endpoint_b} & {sb.endpoint_a, sb.endpoint_b}:
            return Relation.ADJACENT
        return Relation.DISCONNECTED

    def neighbors(self, segment_id, vertex_id):
        """Segments other than `segment_id` touching `vertex_id`, in id order."""
        return [s for s in self._by_vertex.get(vertex_id, ()) if s != segment_id]

    def candidate_arrays(self, lats, lons, radius, linear=False):
        """Vectorized candidate search for many points.

        Returns (point, seg_index, distance, fx, fy) arrays sorted by point,
        then distance, then segment index; one row per (point, segment)
        within `radius`. (fx, fy) is the projected point in the query point's
        azimuthal plane.
        """
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if linear:
            per_point = [np.arange(len(self.piece_seg), dtype=np.int64)] * len(lats)
        else:
            per_point = [self.index.query(la, lo, radius) for la, lo in zip(lats.tolist(), lons.tolist())]
        sizes = np.fromiter((len(p) for p in per_point), dtype=np.int64, count=len(per_point))
        if sizes.sum() == 0:
            e = np.empty(0)
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), e, e, e
        pidx = np.repeat(np.arange(len(lats), dtype=np.int64), sizes)
        piece = np.concatenate(per_point)
        dist, fx, fy = project_pairs(lats[pidx], lons[pidx],
                                     self.piece_alat[piece], self.piece_alon[piece],
                                     self.piece_blat[piece], self.piece_blon[piece])
        seg = self.piece_seg[piece]
        keep = dist <= radius
        pidx, seg, dist, fx, fy = pidx[keep], seg[keep], dist[keep], fx[keep], fy[keep]
        # keep the nearest piece per (point, segment)
        order = np.lexsort((dist, seg, pidx))
        pidx, seg, dist, fx, fy = pidx[order], seg[order], dist[order], fx[order], fy[order]
        first = np.ones(len(pidx), dtype=bool)
        first[1:] = (pidx[1:] != pidx[:-1]) | (seg[1:] != seg[:-1])
        pidx, seg, dist, fx, fy = pidx[first], seg[first], dist[first], fx[first], fy[first]
        order = np.lexsort((seg, dist, pidx))
        return pidx[order], seg[order], dist[order], fx[order], fy[order]

    def candidates_near(self, lat, lon, radius, linear=False):
        """Segments within `radius` meters of (lat, lon), nearest first,
        ties by segment id."""
        if not radius > 0:
            raise ValueError("radius must be positive")
        _, seg, dist, fx, fy = self.candidate_arrays([lat], [lon], radius, linear=linear)
        plat, plon = aeqd_inverse(lat, lon, fx, fy)
        return [Candidate(self.segment_ids[s], float(a), float(o), float(d))
                for s, a, o, d in zip(seg, plat, plon, dist)]

    def to_canonical(self):
        """Stable JSON text of the network contents."""
        vkey = id_sort_key(self.vertices)
        doc = {
            "vertices": [[v, self.vertices[v].lat, self.vertices[v].lon]
                         for v in sorted(self.vertices, key=vkey)],
            "segments": [[s.id, s.endpoint_a, s.endpoint_b, [list(p) for p in s.polyline],
                          s.length] for s in self.segments.values()],
        }
        return json.dumps(doc, separators=(",", ":"))


def project_to_segment(lat, lon, segment):
    """Nearest point on a segment's polyline and its distance in meters."""
    pts = np.asarray(segment.polyline, dtype=float)
    dist, fx, fy = project_pairs(lat, lon, pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1])
    k = int(np.argmin(dist))
    plat, plon = aeqd_inverse(lat, lon, fx[k], fy[k])
    return (float(plat), float(plon)), float(dist[k])


def adjacency(a, b, net):
    return net.adjacency(a, b)


def candidates_near(lat, lon, radius, net):
    return net.candidates_near(lat, lon, radius)


# -- loading -----------------------------------------------------------------

def make_segment(seg_id, vertex_a, vertex_b, polyline):
    polyline = tuple((float(la), float(lo)) for la, lo in polyline)
    return RoadSegment(seg_id, vertex_a, vertex_b, polyline, polyline_length(polyline))


def parse_polyline(text):
    """Parse ``lon lat;lon lat;...`` into ((lat, lon), ...)."""
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        lon, lat = chunk.split()
        pts.append((float(lat), float(lon)))
    return tuple(pts)


def format_polyline(polyline):
    return ";".join(f"{lon!r} {lat!r}" for lat, lon in polyline)


def _read_rows(path, required):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise NetworkError(f"{path}: missing header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise NetworkError(f"{path}: missing columns {missing}")
        return list(reader)


def load_network(vertices_source, segments_source=None, cell_m=100.0):
    """Load a network from vertex + segment CSV files, from a single
    GeoJSON feature collection, or from a directory holding either."""
    vertices_source = Path(vertices_source)
    if segments_source is None:
        if vertices_source.is_dir():
            gj = vertices_source / "network.geojson"
            if gj.exists():
                return load_geojson_network(gj, cell_m=cell_m)
            return load_network(vertices_source / "vertices.csv",
                                vertices_source / "segments.csv", cell_m=cell_m)
        return load_geojson_network(vertices_source, cell_m=cell_m)

    vertices = []
    for row in _read_rows(vertices_source, ("id", "lat", "lon")):
        try:
            vertices.append(Vertex(row["id"], float(row["lat"]), float(row["lon"])))
        except (TypeError, ValueError) as exc:
            raise NetworkError(f"vertex {row.get('id')!r}: {exc}") from None
    by_id = {}
    for v in vertices:
        if v.id in by_id:
            raise NetworkError(f"duplicate vertex id {v.id!r}")
        by_id[v.id] = v
    segments = []
    for row in _read_rows(segments_source, ("id", "vertex_a", "vertex_b", "polyline")):
        sid, a, b = row["id"], row["vertex_a"], row["vertex_b"]
        for end in (a, b):
            if end not in by_id:
                raise NetworkError(f"segment {sid!r} references missing vertex {end!r}")
        try:
            poly = parse_polyline(row["polyline"] or "")
        except ValueError:
            raise NetworkError(f"segment {sid!r}: bad polyline") from None
        if not poly:
            poly = (by_id[a].position, by_id[b].position)
        segments.append(make_segment(sid, a, b, poly))
    return RoadNetwork(vertices, segments, cell_m=cell_m)


def load_geojson_network(path, cell_m=100.0):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkError(f"{path}: {exc}") from None
    vertices = {}
    segments = []
    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        if geom.get("type") != "LineString":
            continue
        try:
            sid = str(props["id"])
            a = str(props["vertex_a"])
            b = str(props["vertex_b"])
        except KeyError as exc:
            raise NetworkError(f"{path}: line feature missing property {exc}") from None
        poly = tuple((float(lat), float(lon)) for lon, lat, *_ in geom["coordinates"])
        if len(poly) < 2:
            raise NetworkError(f"segment {sid!r}: polyline needs at least 2 points")
        for vid, pos in ((a, poly[0]), (b, poly[-1])):
            known = vertices.get(vid)
            if known is None:
                vertices[vid] = Vertex(vid, *pos)
            elif (abs(known.lat - pos[0]) > ENDPOINT_TOLERANCE_DEG
                  or abs(known.lon - pos[1]) > ENDPOINT_TOLERANCE_DEG):
                raise NetworkError(f"vertex {vid!r} has inconsistent positions")
        segments.append(make_segment(sid, a, b, poly))
    return RoadNetwork(list(vertices.values()), segments, cell_m=cell_m)


def write_network(net, directory):
    """Write ``vertices.csv`` and ``segments.csv`` into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    vkey = id_sort_key(net.vertices)
    with open(directory / "vertices.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "lat", "lon"])
        for vid in sorted(net.vertices, key=vkey):
            v = net.vertices[vid]
            w.writerow([vid, repr(v.lat), repr(v.lon)])
    with open(directory / "segments.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "vertex_a", "vertex_b", "polyline"])
        for s in net.segments.values():
            w.writerow([s.id, s.endpoint_a, s.endpoint_b, format_polyline(s.polyline)])
