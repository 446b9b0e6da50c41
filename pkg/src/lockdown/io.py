"""Output files: trajectory CSV, JSON documents and the run manifest."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable

import numpy as np

from lockdown import __version__
from lockdown.model import ID, IOMEGA, IW

TRAJECTORY_HEADER = "path,time,group,z,beta,S,I,R,D,omega,W,e"
# state columns in CSV order: z, beta, S, I, R, D, omega, W
_CSV_STATE_ORDER = [0, 1, 2, 3, 4, ID, IOMEGA, IW]


def _umask() -> int:
    current = os.umask(0)
    os.umask(current)
    return current


_FILE_MODE = 0o666 & ~_umask()


@contextmanager
def atomic_open(path: str | os.PathLike, mode: str = "w"):
    """Write to a temporary sibling file and move it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.chmod(tmp, _FILE_MODE)  # mkstemp creates 0600; give outputs ordinary permissions
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trajectory_lines(traj) -> Iterable[str]:
    """CSV rows of one trajectory; floats use the shortest round-trip repr."""
    n_t, k = traj.states.shape[:2]
    values = np.concatenate([traj.states[:, :, _CSV_STATE_ORDER], traj.e[:, :, None]], axis=2).tolist()
    times = traj.times.tolist()
    for i in range(n_t):
        head = f"{traj.path},{times[i]!r},"
        row = values[i]
        for g in range(k):
            yield head + str(g) + "," + ",".join(map(repr, row[g])) + "\n"


def write_trajectory_csv(path, trajectories: Iterable) -> int:
    """Stream trajectories to CSV; returns the number of data rows."""
    rows = 0
    with atomic_open(path) as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for traj in trajectories:
            lines = list(trajectory_lines(traj))
            fh.writelines(lines)
            rows += len(lines)
    return rows


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)


def write_json(path, obj) -> None:
    with atomic_open(path) as fh:
        fh.write(dumps(obj) + "\n")


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, *, subcommand: str, config_hash: str | None, master_seed: int | None,
                   duration: float, outputs: Iterable[str]) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "subcommand": subcommand,
        "config_hash": config_hash,
        "master_seed": master_seed,
        "tool_version": f"lockdown {__version__}",
        "wall_clock_seconds": round(duration, 6),
        "outputs": [{"file": name, "sha256": file_sha256(out_dir / name)} for name in outputs],
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path
