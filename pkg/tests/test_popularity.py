from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import h_index_brute
from roadpop.map_matching import MatchedTrack
from roadpop.popularity import (GLOBAL, PopularityScore, UsageTable, accumulate, evaluate,
                                merge_tables, p_index, read_scores, write_scores)
from roadpop.tracks import CROSSING

counts_st = st.lists(st.integers(1, 100), max_size=50)


def mt(*segs):
    return MatchedTrack("t", [], list(segs), 0)


class TestAccumulate:
    def test_once_per_activity(self):
        tables = accumulate([(mt("s1", "s2", "s1"), "u", "walk_run", "P2")])
        g = tables[(GLOBAL, "walk_run")]
        assert g.counts == {"s1": Counter(u=1), "s2": Counter(u=1)}
        assert tables[("P2", "walk_run")].counts == g.counts

    def test_additive(self):
        tables = accumulate([(mt("s1"), "u", "walk_run", "P2")] * 2)
        assert tables[("P2", "walk_run")].counts == {"s1": Counter(u=2)}
        assert tables[(GLOBAL, "walk_run")].counts == {"s1": Counter(u=2)}

    def test_crossing_global_only(self):
        tables = accumulate([(mt("s1"), "u", "cycle", CROSSING)])
        assert set(tables) == {(GLOBAL, "cycle")}

    def test_kinds_kept_apart(self):
        tables = accumulate([(mt("s1"), "u", "cycle", "P1"), (mt("s1"), "u", "walk_run", "P1")])
        assert tables[(GLOBAL, "cycle")].counts == tables[(GLOBAL, "walk_run")].counts
        assert len(tables) == 4

    def test_merge_equals_single_pass(self):
        rng = np.random.default_rng(0)
        items = [(mt(*[f"s{k}" for k in rng.integers(0, 8, 4)]), f"u{rng.integers(0, 5)}",
                  ["walk_run", "cycle"][rng.integers(0, 2)],
                  ["P1", "P2", "P3", "P4", "P5", CROSSING][rng.integers(0, 6)]) for _ in range(200)]
        whole = accumulate(items)
        parts = [accumulate(items[i::7]) for i in range(7)]
        assert merge_tables(parts) == whole
        assert merge_tables(parts[::-1]) == whole

    def test_merge_mismatch(self):
        with pytest.raises(ValueError):
            UsageTable("P1", "cycle").merge(UsageTable("P2", "cycle"))


class TestPIndex:
    @pytest.mark.parametrize("counts,expected", [
        ([], 0), ([1], 1), ([3, 3, 2, 1], 2), ([5, 4, 4, 2, 1], 3)])
    def test_examples(self, counts, expected):
        assert p_index(counts) == expected
        assert h_index_brute(counts) == expected

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            p_index([2, 0])

    @settings(max_examples=500, deadline=None)
    @given(counts_st)
    def test_oracle(self, counts):
        assert p_index(counts) == h_index_brute(counts)

    @settings(max_examples=200, deadline=None)
    @given(counts_st, st.randoms())
    def test_permutation(self, counts, rnd):
        shuffled = list(counts)
        rnd.shuffle(shuffled)
        assert p_index(shuffled) == p_index(counts)

    @settings(max_examples=200, deadline=None)
    @given(counts_st, st.integers(0, 49), st.integers(1, 100))
    def test_monotone(self, counts, i, extra):
        before = p_index(counts)
        assert p_index(counts + [extra]) >= before
        if counts:
            bumped = list(counts)
            bumped[i % len(counts)] += 1
            assert p_index(bumped) >= before

    @settings(max_examples=200, deadline=None)
    @given(counts_st)
    def test_bounds(self, counts):
        p = p_index(counts)
        assert 0 <= p <= len(counts)
        assert p <= max(counts, default=0)

    def test_event_burst(self):
        assert p_index([1000]) == 1
        assert p_index([10] * 10) == 10


class TestEvaluate:
    def test_singleton(self):
        t = UsageTable("P1", "walk_run", {"s1": Counter(u1=1)})
        assert evaluate([t]) == [PopularityScore("s1", "P1", "walk_run", 1, 1, 1)]

    def test_four_users(self):
        t = UsageTable(GLOBAL, "cycle", {"s1": Counter(u1=3, u2=3, u3=2, u4=1)})
        (s,) = evaluate({(GLOBAL, "cycle"): t})
        assert (s.p_index, s.user_count, s.activity_count) == (2, 4, 9)

    def test_empty(self):
        assert evaluate([UsageTable(GLOBAL, "cycle")]) == []

    def test_roundtrip(self, tmp_path):
        scores = [PopularityScore("s2", "P1", "cycle", 1, 1, 3),
                  PopularityScore("s1", GLOBAL, "walk_run", 2, 4, 9)]
        write_scores(scores, tmp_path / "s.csv")
        back = read_scores(tmp_path / "s.csv")
        assert sorted(back, key=str) == sorted(scores, key=str)
