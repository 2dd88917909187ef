"""Match 10,000 synthetic 100-point tracks on a 5,000-segment grid.

Run as a script; prints one JSON line with timings and peak memory so the
measurement is not polluted by the test process.
"""
import json
import os
import resource
import sys
import time

from roadpop.map_matching import MatcherConfig
from roadpop.pipeline import match_all
from roadpop.synth import SynthParams, grid_network, synth_tracks


def main(n_tracks=10_000, n_points=100, n_segments=5_000, workers=None):
    workers = workers or os.cpu_count() or 1
    t0 = time.perf_counter()
    net = grid_network(51, 51, 200.0, n_segments=n_segments, seed=0)
    tracks, _ = synth_tracks(net, SynthParams(users=n_tracks // 10, activities=10,
                                              n_points=n_points, seed=1))
    t1 = time.perf_counter()
    _, summary, _ = match_all(((t, None) for t in tracks), net, MatcherConfig(), workers)
    t2 = time.perf_counter()
    peak_kb = max(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
                  resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss)
    print(json.dumps({
        "segments": len(net), "tracks": len(tracks),
        "points": sum(len(t) for t in tracks),
        "assigned": sum(n for _, n, _ in summary),
        "workers": workers, "setup_s": round(t1 - t0, 2), "match_s": round(t2 - t1, 2),
        "peak_rss_mb": round(peak_kb / 1024, 1),
    }))


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:]))
