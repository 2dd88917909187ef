import csv
import json
from pathlib import Path

import pytest

from conftest import build_network, local
from roadpop.cli import main
from roadpop.pipeline import ConfigError, load_config, run
from roadpop.popularity import read_scores
from roadpop.road_network import write_network
from roadpop.tracks import Track, parse_timestamp, write_tracks_csv

SCOPES = ("global", "P1", "P2", "P3", "P4", "P5")


def chain4():
    v = {f"v{i}": local(0, 200 * i) for i in range(5)}
    return build_network(v, {f"s{i + 1}": (f"v{i}", f"v{i + 1}") for i in range(4)})


def along(e_from, e_to, start, step_s, tid, user, kind="walk_run"):
    """Noiseless points every 20 m between two east offsets on the chain."""
    es = list(range(e_from, e_to + 1, 20))
    t0, off = parse_timestamp(start)
    lat, lon = zip(*(local(0, e) for e in es))
    return Track(tid, user, kind, lat, lon, [t0 + k * step_s for k in range(len(es))],
                 [off] * len(es))


def fixture_tracks():
    return [
        along(10, 390, "2017-07-01T07:00:00+08:00", 10, "A", "u1"),             # s1 s2, P2
        along(10, 190, "2017-07-02T07:00:00+08:00", 10, "B", "u1"),             # s1, P2
        along(10, 190, "2017-07-03T08:00:00+08:00", 10, "C", "u2"),             # s1, P2
        along(10, 590, "2017-07-03T17:00:00+08:00", 10, "D", "u2"),             # s1 s2 s3, P4
        along(610, 790, "2017-07-04T05:50:00+08:00", 120, "E", "u2"),           # s4, crossing
        along(210, 590, "2017-07-04T12:00:00+08:00", 5, "F", "u1", "cycle"),    # s2 s3, P3
    ]


# (segment, kind, scope) -> (p_index, users, activities), worked out by hand
EXPECTED = {
    ("s1", "walk_run", "global"): (2, 2, 4),
    ("s2", "walk_run", "global"): (1, 2, 2),
    ("s3", "walk_run", "global"): (1, 1, 1),
    ("s4", "walk_run", "global"): (1, 1, 1),
    ("s1", "walk_run", "P2"): (1, 2, 3),
    ("s2", "walk_run", "P2"): (1, 1, 1),
    ("s1", "walk_run", "P4"): (1, 1, 1),
    ("s2", "walk_run", "P4"): (1, 1, 1),
    ("s3", "walk_run", "P4"): (1, 1, 1),
    ("s2", "cycle", "global"): (1, 1, 1),
    ("s3", "cycle", "global"): (1, 1, 1),
    ("s2", "cycle", "P3"): (1, 1, 1),
    ("s3", "cycle", "P3"): (1, 1, 1),
}


@pytest.fixture
def workspace(tmp_path):
    write_network(chain4(), tmp_path / "network")
    write_tracks_csv(fixture_tracks(), tmp_path / "tracks.csv")
    (tmp_path / "run.ini").write_text(
        "[network]\npath = network\n\n[tracks]\npath = tracks.csv\n\n"
        "[output]\ndir = out\nclasses = 5\nworkers = 1\n")
    return tmp_path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRun:
    def test_fixture_end_to_end(self, workspace):
        report = run(load_config(workspace / "run.ini"))
        out = workspace / "out"
        got = {(s.segment_id, s.kind, s.scope): (s.p_index, s.user_count, s.activity_count)
               for s in read_scores(out / "scores.csv")}
        assert got == EXPECTED
        geo = sorted(p.name for p in out.glob("*.geojson"))
        assert len(geo) == 12
        assert geo == sorted(f"popularity_{k}_{s}.geojson" for k in ("walk_run", "cycle")
                             for s in SCOPES)
        doc = json.loads((out / "popularity_walk_run_global.geojson").read_text())
        assert [f["properties"]["p_index"] for f in doc["features"]] == [2, 1, 1, 1]
        doc = json.loads((out / "popularity_walk_run_P1.geojson").read_text())
        assert [f["properties"]["p_index"] for f in doc["features"]] == [0, 0, 0, 0]
        rows = {r["period"]: r for r in read_csv(out / "period_summary.csv")}
        assert (rows["P2"]["walk_run"], rows["P4"]["walk_run"], rows["P3"]["cycle"]) == \
            ("3", "1", "1")
        assert (rows["total"]["walk_run"], rows["total"]["cycle"]) == ("4", "1")
        assert (report.parsed, report.accepted, report.crossing, report.breaks_total) == \
            (6, 6, 1, 0)
        assert (out / "run_report.txt").exists() and (out / "run_report.json").exists()
        hist = read_csv(out / "histogram_walk_run.csv")
        assert [int(r["count"]) for r in hist][5:9] == [1, 0, 2, 1]

    def test_empty_sources(self, workspace, capsys):
        (workspace / "tracks.csv").write_text("track_id,user_id,kind,timestamp_iso8601,lat,lon\n")
        assert main(["run", "--config", str(workspace / "run.ini")]) == 0
        out = workspace / "out"
        assert read_csv(out / "scores.csv") == []
        for p in out.glob("*.geojson"):
            doc = json.loads(p.read_text())
            assert {f["properties"]["p_index"] for f in doc["features"]} == {0}

    def test_missing_network(self, workspace, capsys):
        import shutil
        shutil.rmtree(workspace / "network")
        assert main(["run", "--config", str(workspace / "run.ini")]) == 2
        assert not (workspace / "out").exists()
        assert "missing" in capsys.readouterr().err

    def test_cli_overrides_and_bad_config(self, workspace):
        cfg = load_config(workspace / "run.ini", {"sigma": 20.0, "workers": 2, "out": "x"})
        assert (cfg.matcher.sigma, cfg.workers, cfg.out_dir) == (20.0, 2, Path("x"))
        (workspace / "bad.ini").write_text("[tracks]\npath = tracks.csv\n")
        with pytest.raises(ConfigError):
            load_config(workspace / "bad.ini")
        assert main(["run", "--config", str(workspace / "bad.ini")]) == 2


class TestStages:
    def test_stages_match_full_run(self, workspace):
        w = workspace
        assert main(["run", "--config", str(w / "run.ini")]) == 0
        assert main(["clean", "--tracks", str(w / "tracks.csv"), "--out", str(w / "c")]) == 0
        assert main(["match", "--network", str(w / "network"),
                     "--tracks", str(w / "c" / "tracks_clean.csv"), "--out", str(w / "m")]) == 0
        assert main(["score", "--matched", str(w / "m"), "--out", str(w / "s")]) == 0
        assert main(["export", "--network", str(w / "network"),
                     "--scores", str(w / "s" / "scores.csv"), "--out", str(w / "e")]) == 0
        assert main(["stats", "--tracks", str(w / "c" / "tracks_clean.csv"),
                     "--out", str(w / "st")]) == 0
        assert (w / "s" / "scores.csv").read_bytes() == (w / "out" / "scores.csv").read_bytes()
        for p in (w / "out").glob("*.geojson"):
            assert (w / "e" / p.name).read_bytes() == p.read_bytes()
        for name in ("histogram_walk_run.csv", "histogram_cycle.csv", "period_summary.csv"):
            assert (w / "st" / name).read_bytes() == (w / "out" / name).read_bytes()
        matched = read_csv(w / "m" / "matched.csv")
        assert {r["segment_id"] for r in matched} == {"s1", "s2", "s3", "s4"}

    def test_synth_cli(self, tmp_path):
        assert main(["synth", "--grid", "4x4", "--users", "2", "--activities", "2",
                     "--out", str(tmp_path)]) == 0
        assert len(read_csv(tmp_path / "truth.csv")) == 4
        assert (tmp_path / "network" / "segments.csv").exists()
        assert main(["synth", "--out", str(tmp_path / "x")]) == 2
