import hashlib
import json

import numpy as np
import pytest

from lockdown import io as lio
from lockdown.sde import Trajectory


def test_atomic_open_leaves_nothing_on_failure(tmp_path):
    target = tmp_path / "out.txt"
    with pytest.raises(RuntimeError):
        with lio.atomic_open(target) as fh:
            fh.write("partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


def test_trajectory_csv_layout(tmp_path):
    states = np.arange(2 * 2 * 8, dtype=float).reshape(2, 2, 8) / 3
    tr = Trajectory(np.array([0.0, 0.1]), states, np.full((2, 2), 0.5), path=4)
    rows = lio.write_trajectory_csv(tmp_path / "t.csv", [tr])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert rows == 4 and lines[0] == lio.TRAJECTORY_HEADER
    first = lines[1].split(",")
    assert first[:3] == ["4", "0.0", "0"]
    # z, beta, S, I, R, then D before omega and W
    x = states[0, 0]
    assert [float(v) for v in first[3:11]] == [x[0], x[1], x[2], x[3], x[4], x[7], x[5], x[6]]
    assert first[11] == "0.5"


def test_manifest_hashes_outputs(tmp_path):
    lio.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "y": np.arange(2)})
    path = lio.write_manifest(tmp_path, subcommand="demo", config_hash="abc", master_seed=1, duration=0.25,
                              outputs=["a.json"])
    manifest = json.loads(path.read_text())
    digest = hashlib.sha256((tmp_path / "a.json").read_bytes()).hexdigest()
    assert manifest["outputs"] == [{"file": "a.json", "sha256": digest}]
    assert manifest["tool_version"].startswith("lockdown ")
    assert json.loads((tmp_path / "a.json").read_text()) == {"x": 1.5, "y": [0, 1]}


def test_outputs_get_ordinary_permissions(tmp_path):
    lio.write_json(tmp_path / "p.json", {})
    assert (tmp_path / "p.json").stat().st_mode & 0o777 == lio._FILE_MODE
