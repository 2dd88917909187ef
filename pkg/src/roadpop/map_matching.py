"""HMM map matching with discrete transition weights.

Emission weights are Gaussian in the point-to-segment distance. Transitions
between candidates of consecutive points take one of three values depending
on whether the segments are the same, share an endpoint, or neither. When no
transition out of the previous step has non-zero weight the chain is broken
and decoding restarts at the current point.
"""
import math
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .geo import aeqd_inverse
from .road_network import Relation, RoadNetwork

NEG_INF = float("-inf")
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

Assignment = namedtuple("Assignment", "point_index segment_id lat lon distance")


@dataclass(frozen=True)
class MatcherConfig:
    sigma: float = 15.0
    candidate_radius: float = 60.0
    transition_same: float = 1.0
    transition_adjacent: float = 0.2
    transition_other: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.candidate_radius > 0:
            raise ValueError("candidate_radius must be positive")
        for name in ("transition_same", "transition_adjacent", "transition_other"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be a probability, got {p}")

    def log_transitions(self):
        return tuple(_log(p) for p in
                     (self.transition_same, self.transition_adjacent, self.transition_other))


@dataclass
class MatchedTrack:
    track_id: str
    assignments: list = field(default_factory=list)
    traversed: list = field(default_factory=list)
    break_count: int = 0


def _log(p):
    return math.log(p) if p > 0 else NEG_INF


def emission_logweight(distance, sigma):
    """Log of the zero-mean Gaussian density at `distance`."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if distance < 0:
        raise ValueError("distance must be non-negative")
    z = distance / sigma
    return -math.log(sigma) - LOG_SQRT_2PI - 0.5 * z * z


def transition_weight(prev, nxt, net, cfg=None):
    cfg = cfg or MatcherConfig()
    rel = net.adjacency(prev, nxt)
    if rel is Relation.SAME:
        return cfg.transition_same
    if rel is Relation.ADJACENT:
        return cfg.transition_adjacent
    return cfg.transition_other


def viterbi(emissions, labels, log_trans):
    """Decode the best state per step, splitting into independent chains
    wherever every transition into a step is impossible.

    ``emissions[t][j]`` is the log emission of state j at step t,
    ``labels[t][j]`` an orderable tie-break key (lower wins), and
    ``log_trans[t][i][j]`` the log transition from state i at step t-1 to
    state j at step t (``log_trans[0]`` is ignored).

    Returns (state index per step, list of chain start steps).
    """
    n = len(emissions)
    path = [0] * n
    if n == 0:
        return path, []
    starts = [0]
    back = [None] * n
    score = list(emissions[0])
    start = 0
    for t in range(1, n):
        trans = log_trans[t]
        prev_lab = labels[t - 1]
        new = []
        ptr = []
        alive = False
        for j, e in enumerate(emissions[t]):
            best = NEG_INF
            arg = -1
            for i, s in enumerate(score):
                v = s + trans[i][j]
                if v > best or (v == best and arg >= 0 and prev_lab[i] < prev_lab[arg]):
                    best = v
                    arg = i
            if arg >= 0:
                alive = True
                new.append(best + e)
            else:
                new.append(NEG_INF)
            ptr.append(arg)
        if alive:
            score = new
            back[t] = ptr
        else:
            _backtrack(score, labels[t - 1], back, start, t - 1, path)
            start = t
            starts.append(t)
            score = list(emissions[t])
    _backtrack(score, labels[n - 1], back, start, n - 1, path)
    return path, starts


def _backtrack(score, labels, back, start, end, path):
    best = 0
    for j in range(1, len(score)):
        if score[j] > score[best] or (score[j] == score[best] and labels[j] < labels[best]):
            best = j
    path[end] = best
    for t in range(end, start, -1):
        best = back[t][best]
        path[t - 1] = best


def match_track(t, net, cfg=None):
    """Match one track; points without candidates are skipped."""
    if not isinstance(net, RoadNetwork):
        raise TypeError("a loaded RoadNetwork is required")
    cfg = cfg or MatcherConfig()
    pidx, seg, dist, fx, fy = net.candidate_arrays(t.lat, t.lon, cfg.candidate_radius)
    if len(pidx) == 0:
        return MatchedTrack(t.track_id)

    z = dist / cfg.sigma
    em = (-math.log(cfg.sigma) - LOG_SQRT_2PI - 0.5 * z * z).tolist()
    cuts = (np.flatnonzero(np.diff(pidx)) + 1).tolist()
    bounds = list(zip([0] + cuts, cuts + [len(pidx)]))
    seg_l = seg.tolist()
    ea = net.seg_a.tolist()
    eb = net.seg_b.tolist()
    l_same, l_adj, l_other = cfg.log_transitions()

    emissions, labels, log_trans = [], [], []
    prev = None
    for lo, hi in bounds:
        cur = seg_l[lo:hi]
        emissions.append(em[lo:hi])
        labels.append(cur)
        if prev is None:
            log_trans.append(None)
        else:
            rows = []
            for si in prev:
                ai, bi = ea[si], eb[si]
                row = []
                for sj in cur:
                    if si == sj:
                        row.append(l_same)
                    elif ai == ea[sj] or ai == eb[sj] or bi == ea[sj] or bi == eb[sj]:
                        row.append(l_adj)
                    else:
                        row.append(l_other)
                rows.append(row)
            log_trans.append(rows)
        prev = cur

    path, starts = viterbi(emissions, labels, log_trans)
    sel = np.array([lo + k for (lo, _), k in zip(bounds, path)], dtype=np.int64)
    pts = pidx[sel]
    plat, plon = aeqd_inverse(t.lat[pts], t.lon[pts], fx[sel], fy[sel])
    ids = net.segment_ids
    assignments = [Assignment(p, ids[s], la, lo, d) for p, s, la, lo, d in
                   zip(pts.tolist(), seg[sel].tolist(), plat.tolist(), plon.tolist(),
                       dist[sel].tolist())]
    m = MatchedTrack(t.track_id, assignments, [], len(starts) - 1)
    m.traversed = traversed_segments(m)
    return m


def traversed_segments(m):
    """Assigned segment ids with consecutive repeats collapsed."""
    out = []
    for a in m.assignments:
        if not out or out[-1] != a.segment_id:
            out.append(a.segment_id)
    return out
