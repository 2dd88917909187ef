"""Natural-breaks classification, GeoJSON export and summary statistics."""
import bisect
import csv
import json
from dataclasses import dataclass

import numpy as np

from .popularity import GLOBAL
from .tracks import CROSSING, DEFAULT_PERIODS, KINDS, start_hour


@dataclass(frozen=True)
class ClassBreaks:
    """``breaks`` are the lower bounds of classes 1..k-1."""

    k: int
    breaks: tuple

    def classify(self, value):
        return bisect.bisect_right(self.breaks, value)


def jenks_breaks(values, k):
    """Optimal 1-D partition into `k` contiguous classes (Fisher-Jenks).

    Minimises the total within-class sum of squared deviations. Equal values
    always land in the same class, so the search runs over distinct values
    weighted by multiplicity. Among equally good partitions the one with the
    smaller break values wins.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    u, w = np.unique(np.asarray(values, dtype=float), return_counts=True)
    m = len(u)
    if k > m:
        raise ValueError(f"{k} classes requested but only {m} distinct values")
    if k == 1:
        return ClassBreaks(1, ())
    x = u - u.mean()
    w = w.astype(float)
    cw = np.concatenate([[0.0], np.cumsum(w)])
    c1 = np.concatenate([[0.0], np.cumsum(w * x)])
    c2 = np.concatenate([[0.0], np.cumsum(w * x * x)])

    # best[c][j]: min cost of the first j distinct values in c+1 classes
    best = np.full((k, m + 1), np.inf)
    arg = np.zeros((k, m + 1), dtype=np.int64)
    j = np.arange(1, m + 1)
    best[0, 1:] = c2[j] - c1[j] ** 2 / cw[j]
    for c in range(1, k):
        for jj in range(c + 1, m + 1):
            i = np.arange(c, jj)
            sw = cw[jj] - cw[i]
            s1 = c1[jj] - c1[i]
            cost = best[c - 1, i] + (c2[jj] - c2[i]) - s1 * s1 / sw
            t = int(np.argmin(cost))
            best[c, jj] = cost[t]
            arg[c, jj] = i[t]
    cuts = []
    jj = m
    for c in range(k - 1, 0, -1):
        jj = int(arg[c, jj])
        cuts.append(jj)
    return ClassBreaks(k, tuple(float(u[i]) for i in reversed(cuts)))


def partition_cost(groups):
    """Within-class sum of squared deviations for a list of value groups."""
    total = 0.0
    for g in groups:
        g = np.asarray(g, dtype=float)
        total += float(np.sum((g - g.mean()) ** 2))
    return total


def _check_scope_kind(scope, kind, scheme):
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if scope != GLOBAL and scope not in scheme.names:
        raise ValueError(f"unknown scope {scope!r}")


def geojson_document(net, scores, scope, kind, k=5, scheme=DEFAULT_PERIODS):
    """Dense feature collection for one (scope, kind) with class labels."""
    _check_scope_kind(scope, kind, scheme)
    by_seg = {s.segment_id: s for s in scores if s.scope == scope and s.kind == kind}
    values = [by_seg[sid].p_index if sid in by_seg else 0 for sid in net.segment_ids]
    distinct = len(set(values))
    k_eff = max(1, min(k, distinct))
    cb = jenks_breaks(values, k_eff) if values else ClassBreaks(1, ())
    features = []
    for sid, v in zip(net.segment_ids, values):
        s = by_seg.get(sid)
        seg = net.segments[sid]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString",
                         "coordinates": [[lon, lat] for lat, lon in seg.polyline]},
            "properties": {
                "segment_id": sid,
                "p_index": v,
                "class": cb.classify(v),
                "user_count": s.user_count if s else 0,
                "activity_count": s.activity_count if s else 0,
            },
        })
    return {
        "type": "FeatureCollection",
        "metadata": {"scope": scope, "kind": kind, "classes": cb.k,
                     "breaks": [int(b) if float(b).is_integer() else b for b in cb.breaks]},
        "features": features,
    }


def export_geojson(net, scores, scope, kind, k, path, scheme=DEFAULT_PERIODS):
    doc = geojson_document(net, scores, scope, kind, k, scheme)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")
    return ClassBreaks(doc["metadata"]["classes"], tuple(doc["metadata"]["breaks"]))


def export_filename(kind, scope):
    return f"popularity_{kind}_{scope}.geojson"


@dataclass(frozen=True)
class HourHistogram:
    kind: str
    counts: tuple


def hourly_histogram(tracks, kind):
    """Activities of `kind` binned by local hour of their first point."""
    counts = [0] * 24
    for t in tracks:
        if t.kind == kind:
            counts[start_hour(t)] += 1
    return HourHistogram(kind, tuple(counts))


def write_histogram(hist, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "count"])
        for h, c in enumerate(hist.counts):
            w.writerow([h, c])


def period_summary(assigned, scheme=DEFAULT_PERIODS):
    """Counts of non-crossing activities per period and kind.

    `assigned` yields (track or kind, period). Returns
    ``{period: {kind: count}}`` with an extra ``"total"`` row summing the
    periods; crossing activities are left out entirely.
    """
    table = {p: dict.fromkeys(KINDS, 0) for p in scheme.names}
    for item, period in assigned:
        kind = item if isinstance(item, str) else item.kind
        if period == CROSSING:
            continue
        table[period][kind] += 1
    table["total"] = {kd: sum(table[p][kd] for p in scheme.names) for kd in KINDS}
    return table


def write_period_summary(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period", *KINDS])
        for period, row in table.items():
            w.writerow([period, *(row[kd] for kd in KINDS)])
