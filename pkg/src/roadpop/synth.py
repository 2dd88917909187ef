"""Synthetic networks and GPS tracks with known ground truth.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64). Draw
order per activity: start segment, start direction, walk choices, start and
end offsets, day, time of day, speed, then north/east noise for all points.
"""
import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geo import haversine, offset
from .road_network import RoadNetwork, Vertex, make_segment
from .tracks import WALK_RUN, Track

BASE_EPOCH = 1498867200.0  # 2017-07-01T00:00:00Z


class SynthError(ValueError):
    pass


def grid_network(rows, cols, spacing_m=200.0, origin=(30.5, 114.3), n_segments=None,
                 seed=0, cell_m=100.0):
    """Rectangular street grid with a straight midpoint in every polyline.

    With `n_segments` below the full grid size, random segments are removed
    while every vertex keeps degree >= 2 and the graph stays connected.
    """
    lat0, lon0 = origin
    vertices = []
    pos = {}
    for r in range(rows):
        for c in range(cols):
            lat, lon = offset(lat0, lon0, r * spacing_m, c * spacing_m)
            vid = f"v{r:03d}_{c:03d}"
            pos[(r, c)] = vid
            vertices.append(Vertex(vid, float(lat), float(lon)))
    vmap = {v.id: v for v in vertices}
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((pos[(r, c)], pos[(r, c + 1)]))
            if r + 1 < rows:
                edges.append((pos[(r, c)], pos[(r + 1, c)]))
    if n_segments is not None and n_segments < len(edges):
        edges = _prune(edges, n_segments, np.random.default_rng(seed))
    segments = []
    for k, (a, b) in enumerate(edges):
        va, vb = vmap[a], vmap[b]
        mid = ((va.lat + vb.lat) / 2.0, (va.lon + vb.lon) / 2.0)
        segments.append(make_segment(f"s{k:05d}", a, b, [va.position, mid, vb.position]))
    return RoadNetwork(vertices, segments, cell_m=cell_m)


def _prune(edges, target, rng):
    adj = {}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    alive = set(edges)
    for e in (edges[i] for i in rng.permutation(len(edges))):
        if len(alive) <= target:
            break
        a, b = e
        if len(adj[a]) <= 2 or len(adj[b]) <= 2:
            continue
        adj[a].discard(b)
        adj[b].discard(a)
        if _reachable(adj, a, b):
            alive.discard(e)
        else:
            adj[a].add(b)
            adj[b].add(a)
    if len(alive) > target:
        raise SynthError(f"cannot prune grid to {target} segments")
    return [e for e in edges if e in alive]


def _reachable(adj, src, dst):
    seen = {src}
    queue = deque([src])
    while queue:
        v = queue.popleft()
        if v == dst:
            return True
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return False


@dataclass
class SynthParams:
    users: int = 10
    activities: int = 5
    noise_m: float = 15.0
    interval_m: float = 10.0
    # noise inflates measured path length ~2.5x at 15 m / 10 m spacing
    speed_kmh: tuple = (4.0, 8.0)
    kind: str = WALK_RUN
    min_segments: int = 3
    max_segments: int = 6
    n_points: int = None
    utc_offset_h: float = 8.0
    days: int = 90
    seed: int = 42


@dataclass
class Truth:
    track_id: str
    segments: list = field(default_factory=list)
    point_segments: list = field(default_factory=list)


def _random_walk(net, rng, n_segs, min_length):
    ids = net.segment_ids
    for _ in range(100):
        sid = ids[int(rng.integers(len(ids)))]
        seg = net.segments[sid]
        forward = bool(rng.integers(2))
        walk = [(sid, forward)]
        length = seg.length
        end = seg.endpoint_b if forward else seg.endpoint_a
        while len(walk) < n_segs or length < min_length:
            nxt = net.neighbors(walk[-1][0], end)
            if not nxt:
                break
            sid = nxt[int(rng.integers(len(nxt)))]
            seg = net.segments[sid]
            forward = seg.endpoint_a == end
            walk.append((sid, forward))
            length += seg.length
            end = seg.endpoint_b if forward else seg.endpoint_a
        else:
            return walk
    raise SynthError(f"no walk of {n_segs} segments found; network too disconnected")


def synth_tracks(net, params=None):
    """Generate noisy tracks by random walks; returns (tracks, truths)."""
    p = params or SynthParams()
    rng = np.random.default_rng(p.seed)
    tracks, truths = [], []
    longest = max(s.length for s in net.segments.values())
    n = 0
    for u in range(p.users):
        for _ in range(p.activities):
            n_segs = int(rng.integers(p.min_segments, p.max_segments + 1))
            min_length = 0.0
            if p.n_points:
                # slack for the trimmed start
                min_length = (p.n_points - 1) * p.interval_m + longest
            walk = _random_walk(net, rng, n_segs, min_length)
            lat, lon, seg_at = _sample_walk(net, walk, rng, p)
            if p.n_points:
                lat, lon, seg_at = lat[:p.n_points], lon[:p.n_points], seg_at[:p.n_points]
            truth_segs = [s for k, s in enumerate(seg_at) if k == 0 or seg_at[k - 1] != s]
            day = int(rng.integers(p.days))
            tod = float(rng.uniform(0.0, 86400.0))
            speed = float(rng.uniform(*p.speed_kmh)) / 3.6
            offset_s = p.utc_offset_h * 3600.0
            t0 = BASE_EPOCH + day * 86400.0 + tod - offset_s
            epoch = t0 + np.arange(len(lat)) * (p.interval_m / speed)
            noise = rng.normal(0.0, p.noise_m, size=(len(lat), 2)) if p.noise_m > 0 \
                else np.zeros((len(lat), 2))
            nlat, nlon = offset(lat, lon, noise[:, 0], noise[:, 1])
            tid = f"t{n:06d}"
            tracks.append(Track(tid, f"u{u:04d}", p.kind, nlat, nlon,
                                np.round(epoch, 3), np.full(len(lat), offset_s)))
            truths.append(Truth(tid, truth_segs, list(seg_at)))
            n += 1
    return tracks, truths


def _sample_walk(net, walk, rng, p):
    """Sample points every `interval_m` along the walk, starting and ending
    part-way into the first and last segments."""
    pts, owner = [], []
    for k, (sid, forward) in enumerate(walk):
        poly = list(net.segments[sid].polyline)
        if not forward:
            poly.reverse()
        if k > 0:
            poly = poly[1:]
        pts.extend(poly)
        owner.extend([sid] * len(poly))
    pts = np.asarray(pts)
    step = haversine(pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1])
    cum = np.concatenate([[0.0], np.cumsum(step)])
    first_len = net.segments[walk[0][0]].length
    last_len = net.segments[walk[-1][0]].length
    s0 = float(rng.uniform(0.25, 0.75)) * first_len
    s1 = cum[-1] - float(rng.uniform(0.25, 0.75)) * last_len
    if p.n_points:
        s1 = cum[-1]
    s = np.arange(s0, s1, p.interval_m)
    piece = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(step) - 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(step[piece] > 0, (s - cum[piece]) / step[piece], 0.0)
    lat = pts[piece, 0] + f * (pts[piece + 1, 0] - pts[piece, 0])
    lon = pts[piece, 1] + f * (pts[piece + 1, 1] - pts[piece, 1])
    seg_at = [owner[i + 1] for i in piece.tolist()]
    return lat, lon, seg_at


def write_truth(truths, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track_id", "segments"])
        for t in truths:
            w.writerow([t.track_id, ";".join(t.segments)])


def write_point_truth(truths, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track_id", "point_index", "segment_id"])
        for t in truths:
            for i, s in enumerate(t.point_segments):
                w.writerow([t.track_id, i, s])


def read_truth(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["track_id"]: r["segments"].split(";") if r["segments"] else []
                for r in csv.DictReader(fh)}
