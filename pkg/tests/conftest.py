import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from roadpop.geo import offset  # noqa: E402
from roadpop.road_network import RoadNetwork, Vertex, make_segment  # noqa: E402
from roadpop.tracks import Track  # noqa: E402

ORIGIN = (30.5, 114.3)


def build_network(vertices, segments, cell_m=100.0):
    """vertices: {id: (lat, lon)}; segments: {id: (a, b)} or {id: (a, b, [mid points])}."""
    vs = [Vertex(k, lat, lon) for k, (lat, lon) in vertices.items()]
    segs = []
    for sid, ends in segments.items():
        a, b = ends[0], ends[1]
        mids = list(ends[2]) if len(ends) > 2 else []
        segs.append(make_segment(sid, a, b, [vertices[a], *mids, vertices[b]]))
    return RoadNetwork(vs, segs, cell_m=cell_m)


def local(north_m, east_m, origin=ORIGIN):
    lat, lon = offset(origin[0], origin[1], north_m, east_m)
    return (float(lat), float(lon))


def make_track(points, start="2017-07-01T07:00:00+08:00", step_s=10.0, kind="walk_run",
               user="u1", track_id="t1"):
    """Track from (lat, lon) points at fixed time steps."""
    t0 = datetime.fromisoformat(start)
    off = t0.utcoffset().total_seconds()
    e0 = (t0 - datetime(1970, 1, 1, tzinfo=timezone.utc)).total_seconds()
    pts = np.asarray(points, dtype=float)
    epoch = e0 + np.arange(len(pts)) * step_s
    return Track(track_id, user, kind, pts[:, 0], pts[:, 1], epoch, np.full(len(pts), off))


def track_at_times(times, kind="walk_run", track_id="t1", user="u1"):
    """Track with stationary-ish points at the given ISO timestamps."""
    stamps = [datetime.fromisoformat(t) for t in times]
    epoch = [(s - datetime(1970, 1, 1, tzinfo=timezone.utc)).total_seconds() for s in stamps]
    off = [s.utcoffset().total_seconds() for s in stamps]
    lat = ORIGIN[0] + np.arange(len(times)) * 1e-5
    return Track(track_id, user, kind, lat, np.full(len(times), ORIGIN[1]), epoch, off)


@pytest.fixture
def chain_net():
    """Three collinear 200 m east-west segments s1-s2-s3 plus a far-away s4."""
    v = {
        "v1": local(0, 0), "v2": local(0, 200), "v3": local(0, 400), "v4": local(0, 600),
        "v5": local(5000, 0), "v6": local(5000, 200),
    }
    return build_network(v, {"s1": ("v1", "v2"), "s2": ("v2", "v3"), "s3": ("v3", "v4"),
                             "s4": ("v5", "v6")})


@pytest.fixture
def utc8():
    return timezone(timedelta(hours=8))


def random_small_network(rng, n_vertices=7, n_segments=9, extent_m=300.0):
    """Straight segments between random vertices in a small box."""
    verts = {f"v{i}": local(*rng.uniform(0, extent_m, 2)) for i in range(n_vertices)}
    names = list(verts)
    pairs = set()
    while len(pairs) < n_segments:
        a, b = sorted(rng.choice(n_vertices, 2, replace=False).tolist())
        pairs.add((a, b))
    segs = {f"s{k}": (names[a], names[b]) for k, (a, b) in enumerate(sorted(pairs))}
    return build_network(verts, segs)


def random_small_instance(rng, max_points=8, max_candidates=5, radius=60.0):
    """(network, track) where every point has at most `max_candidates` candidates."""
    while True:
        net = random_small_network(rng)
        n = int(rng.integers(2, max_points + 1))
        pts = [local(*rng.uniform(-20, 320, 2)) for _ in range(n)]
        counts = [len(net.candidates_near(la, lo, radius)) for la, lo in pts]
        if max(counts) <= max_candidates and sum(c > 0 for c in counts) >= 1:
            return net, make_track(pts)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
