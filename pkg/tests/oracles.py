"""Brute-force reference computations used only by the tests.

Each oracle is written independently of the package code it checks.
"""
import itertools
import math
from fractions import Fraction

import numpy as np

R = 6_371_000.0


def unit_vector(lat, lon):
    p, l = math.radians(lat), math.radians(lon)
    return np.array([math.cos(p) * math.cos(l), math.cos(p) * math.sin(l), math.sin(p)])


def geodesic(lat1, lon1, lat2, lon2):
    """Great-circle distance via the chord between unit vectors."""
    chord = np.linalg.norm(unit_vector(lat1, lon1) - unit_vector(lat2, lon2))
    return 2.0 * R * math.asin(min(1.0, chord / 2.0))


def dense_polyline_min(lat, lon, polyline, samples=2000):
    """Minimum geodesic distance to points sampled densely along a polyline."""
    best = math.inf
    for (a_lat, a_lon), (b_lat, b_lon) in zip(polyline[:-1], polyline[1:]):
        for f in np.linspace(0.0, 1.0, samples):
            q_lat = a_lat + f * (b_lat - a_lat)
            q_lon = a_lon + f * (b_lon - a_lon)
            best = min(best, geodesic(lat, lon, q_lat, q_lon))
    return best


def h_index_brute(counts):
    """max{h : #{i : N_i >= h} >= h}, by trying every h."""
    best = 0
    for h in range(0, len(counts) + 1):
        if sum(1 for n in counts if n >= h) >= h:
            best = h
    return best


def exact_cost(groups):
    total = Fraction(0)
    for g in groups:
        fs = [Fraction(v) for v in g]
        mean = sum(fs) / len(fs)
        total += sum((v - mean) ** 2 for v in fs)
    return total


def contiguous_partitions(values, k):
    """All splits of sorted `values` into k non-empty contiguous groups."""
    v = sorted(values)
    for cuts in itertools.combinations(range(1, len(v)), k - 1):
        bounds = (0, *cuts, len(v))
        yield [v[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def jenks_optimum(values, k):
    return min(exact_cost(p) for p in contiguous_partitions(values, k))


def gaussian_logpdf(d, sigma):
    return math.log(math.exp(-(d * d) / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi)))


def _tensor_best(emissions, log_trans, lo, hi):
    """Max total log weight over every state sequence on steps lo..hi,
    built as a full broadcast tensor (no dynamic programming)."""
    total = np.asarray(emissions[lo], dtype=float)
    for t in range(lo + 1, hi + 1):
        trans = np.asarray(log_trans[t], dtype=float)
        shape_prev = total.shape
        total = total.reshape(shape_prev + (1,)) + \
            trans.reshape((1,) * (len(shape_prev) - 1) + trans.shape) + \
            np.asarray(emissions[t], dtype=float).reshape((1,) * len(shape_prev) + (-1,))
    return float(total.max())


def hmm_chains_and_optimum(emissions, log_trans):
    """Chain boundaries and per-chain optimum by exhaustive enumeration.

    A chain ends just before the first step that no sequence starting at the
    chain head can reach with finite weight.
    """
    n = len(emissions)
    if n == 0:
        return [], []
    starts = [0]
    t = 1
    while t < n:
        if _tensor_best(emissions, log_trans, starts[-1], t) == -math.inf:
            starts.append(t)
        t += 1
    bounds = list(zip(starts, starts[1:] + [n]))
    return starts, [_tensor_best(emissions, log_trans, a, b - 1) for a, b in bounds]


def path_weight(emissions, log_trans, path, lo, hi):
    w = emissions[lo][path[lo]]
    for t in range(lo + 1, hi):
        w += log_trans[t][path[t - 1]][path[t]] + emissions[t][path[t]]
    return w
