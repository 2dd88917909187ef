"""Per-segment usage tables and the popularity index.

The popularity index of a segment is the largest h such that h distinct
users each used the segment in at least h activities; the same rule as a
scholar's h-index with users as papers and activity counts as citations.
"""
import csv
from collections import Counter
from dataclasses import dataclass

from .tracks import CROSSING

GLOBAL = "global"


class UsageTable:
    """Counts of activities per (segment, user) for one scope and kind."""

    __slots__ = ("scope", "kind", "counts")

    def __init__(self, scope, kind, counts=None):
        self.scope = scope
        self.kind = kind
        self.counts = counts if counts is not None else {}

    def __repr__(self):
        return f"UsageTable({self.scope!r}, {self.kind!r}, segments={len(self.counts)})"

    def __eq__(self, other):
        return (isinstance(other, UsageTable) and self.scope == other.scope
                and self.kind == other.kind and self.counts == other.counts)

    def add(self, segment_id, user_id, n=1):
        users = self.counts.get(segment_id)
        if users is None:
            users = self.counts[segment_id] = Counter()
        users[user_id] += n

    def merge(self, other):
        """Add another table's counts into this one (in place)."""
        if (self.scope, self.kind) != (other.scope, other.kind):
            raise ValueError("cannot merge tables of different scope/kind")
        for sid, users in other.counts.items():
            mine = self.counts.get(sid)
            if mine is None:
                self.counts[sid] = Counter(users)
            else:
                mine.update(users)
        return self


def accumulate(matched, tables=None):
    """Build usage tables from ``(MatchedTrack, user_id, kind, period)`` items.

    Each activity adds one to every (segment, user) pair it traversed, however
    many times it passed the segment. Period tables skip crossing activities;
    the global table of the kind takes every activity.

    Returns a dict keyed by (scope, kind).
    """
    tables = tables if tables is not None else {}
    for m, user_id, kind, period in matched:
        segs = set(m.traversed)
        if not segs:
            continue
        scopes = (GLOBAL,) if period == CROSSING or period is None else (GLOBAL, period)
        for scope in scopes:
            table = tables.get((scope, kind))
            if table is None:
                table = tables[(scope, kind)] = UsageTable(scope, kind)
            for sid in segs:
                table.add(sid, user_id)
    return tables


def merge_tables(parts):
    """Pointwise sum of several accumulate() results."""
    out = {}
    for part in parts:
        for key, table in part.items():
            if key in out:
                out[key].merge(table)
            else:
                out[key] = UsageTable(table.scope, table.kind).merge(table)
    return out


def p_index(counts):
    """Largest h with at least h users of count >= h."""
    ordered = sorted(counts, reverse=True)
    if ordered and ordered[-1] <= 0:
        raise ValueError("activity counts must be positive")
    h = 0
    for i, n in enumerate(ordered, start=1):
        if n >= i:
            h = i
        else:
            break
    return h


@dataclass(frozen=True)
class PopularityScore:
    segment_id: str
    scope: str
    kind: str
    p_index: int
    user_count: int
    activity_count: int


def evaluate(tables):
    """One score per (segment, scope, kind) with a non-empty count map."""
    if isinstance(tables, dict):
        tables = tables.values()
    scores = []
    for table in tables:
        for sid, users in table.counts.items():
            if not users:
                continue
            vals = list(users.values())
            scores.append(PopularityScore(sid, table.scope, table.kind, p_index(vals),
                                          len(vals), sum(vals)))
    return scores


SCORE_COLUMNS = ("segment_id", "kind", "scope", "p_index", "user_count", "activity_count")


def sort_scores(scores, seg_key=str):
    return sorted(scores, key=lambda s: (s.kind, s.scope, seg_key(s.segment_id)))


def write_scores(scores, path, seg_key=str):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for s in sort_scores(scores, seg_key):
            w.writerow([s.segment_id, s.kind, s.scope, s.p_index, s.user_count,
                        s.activity_count])


def read_scores(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [PopularityScore(r["segment_id"], r["scope"], r["kind"], int(r["p_index"]),
                                int(r["user_count"]), int(r["activity_count"]))
                for r in csv.DictReader(fh)]
