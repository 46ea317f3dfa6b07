import json

import numpy as np
import pytest

from reachcore import io
from reachcore.exceptions import SchemaError
from reachcore.reach import Branch, EmbeddingState, ReachTube
from reachcore.safety import VERIFIED, Verdict


@pytest.fixture(scope="function")
def tube():
    branches = []
    for i in range(2):
        samples = [
            EmbeddingState(
                np.array([i + t, 0.0]), np.array([i + t + 1, 1.0 + t]), float(t)
            )
            for t in range(3)
        ]
        branches.append(Branch(i, samples))
    return ReachTube(branches, {"method": "con", "dt": 1.0}, {"runtime": 0.5})


def test_jsonl_round_trip(tube, tmp_path):
    path = tmp_path / "tube.jsonl"
    io.write_tube_jsonl(tube, path)
    with open(path, "r") as fl:
        lines = fl.readlines()
    assert len(lines) == 6
    assert json.loads(lines[0]) == {"branch": 0, "t": 0.0, "lo": [0, 0], "hi": [1, 1]}
    copy = io.read_tube_jsonl(path)
    assert [b.id for b in copy.branches] == [0, 1]
    assert np.allclose(copy.times, tube.times)
    for a, b in zip(copy.union_bounds, tube.union_bounds):
        assert np.array_equal(a, b)


def test_jsonl_is_deterministic(tube, tmp_path):
    first = io.write_tube_jsonl(tube, tmp_path / "a.jsonl")
    second = io.write_tube_jsonl(tube, tmp_path / "b.jsonl")
    with open(first) as a, open(second) as b:
        assert a.read() == b.read()


def test_no_clobber(tube, tmp_path):
    path = tmp_path / "tube.jsonl"
    io.write_tube_jsonl(tube, path)
    with pytest.raises(ValueError) as err:
        io.write_tube_jsonl(tube, path, clobber=False)
    assert "clobber" in str(err.value)
    with pytest.raises(ValueError):
        io.write_summary({}, path, clobber=False)


def test_runtime_stats():
    stats = io.runtime_stats([1.0, 3.0])
    assert stats["runs"] == 2
    assert np.isclose(stats["mean"], 2.0)
    assert np.isclose(stats["std"], 1.0)
    assert stats["text"] == "2±1 seconds"


def test_tube_summary(tube):
    summary = io.tube_summary(tube, Verdict(VERIFIED, []))
    assert summary["config"] == {"method": "con", "dt": 1.0}
    assert summary["branches"] == 2
    assert summary["times"] == [0.0, 1.0, 2.0]
    assert summary["final_box"] == [[2.0, 4.0], [0.0, 3.0]]
    assert summary["areas"] == {"0,1": 6.0}
    assert summary["runtime"]["runs"] == 1
    assert summary["verdict"] == {"status": VERIFIED, "report": []}


def test_tube_summary_runtimes(tube):
    summary = io.tube_summary(tube, runtimes=[1.0, 2.0, 3.0])
    assert summary["runtime"]["runs"] == 3
    assert "verdict" not in summary


def test_write_summary_handles_arrays(tmp_path):
    path = io.write_summary(
        {"lo": np.array([0.0, 1.0]), "n": np.int64(3)}, tmp_path / "s.json"
    )
    with open(path) as fl:
        assert json.load(fl) == {"lo": [0.0, 1.0], "n": 3}


def test_gnuplot_files(tube, tmp_path):
    trajectories = np.zeros((4, 3, 2))
    written = io.write_gnuplot(
        tube, tmp_path / "plots", prefix="di", trajectories=trajectories
    )
    names = [p.split("/")[-1] for p in written]
    assert names == ["di.0-1.dat", "di.traj.dat", "di.gp"]
    with open(written[0]) as fl:
        lines = fl.read().splitlines()
    assert lines[0].startswith("#")
    assert len(lines) == 7
    with open(written[1]) as fl:
        assert fl.read().count("\n\n") == 4
    with open(written[-1]) as fl:
        script = fl.read()
    assert "di.0-1.dat" in script and "di.traj.dat" in script


def test_gnuplot_without_trajectories(tube, tmp_path):
    written = io.write_gnuplot(tube, tmp_path)
    assert len(written) == 2
    assert written[-1].endswith("tube.gp")


def test_gnuplot_bad_pair(tube, tmp_path):
    with pytest.raises(ValueError):
        io.write_gnuplot(tube, tmp_path, pairs=[(0, 2)])


def test_error_record():
    err = SchemaError("Layer 0 has non-numeric weights.")
    assert io.error_record(err) == {
        "error": "SchemaError",
        "message": "Layer 0 has non-numeric weights.",
    }
