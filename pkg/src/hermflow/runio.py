"""On-disk layout of a flow run.

A run directory holds ``manifest.json`` (config, parameters, grid, seed,
RNG algorithm, terminal status), ``series.csv`` with one row per accepted
step, ``spectrum.json`` for the flat linearization, and ``snapshots/``
with one binary field file per stored time.  Nothing time- or host-dependent
is written, so equal inputs give equal bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .flow import SERIES_COLUMNS, FlowRun
from .torus import read_snapshot, write_snapshot

MANIFEST = "manifest.json"
SERIES = "series.csv"
SPECTRUM = "spectrum.json"
SNAPSHOT_DIR = "snapshots"


class RunDirError(OSError):
    pass


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def series_csv(rows, columns=SERIES_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_run(run: FlowRun, out_dir, config: dict | None = None, seed=None,
              spectrum: dict | None = None, extra: dict | None = None) -> Path:
    """Write manifest, series and snapshots.  Raises OSError if the directory
    is not writable."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / SNAPSHOT_DIR
    snap_dir.mkdir(exist_ok=True)
    for old in snap_dir.glob("u_*.bin"):
        old.unlink()
    snaps = []
    for i, (t, u) in enumerate(run.snapshots):
        name = f"u_{i:05d}.bin"
        write_snapshot(snap_dir / name, u, "u", t)
        snaps.append({"file": f"{SNAPSHOT_DIR}/{name}", "t": float(t)})
    (out / SERIES).write_text(series_csv(run.rows))
    if spectrum is not None:
        dump_json(spectrum, out / SPECTRUM)
    final = run.final
    manifest = {
        "hermflow_version": __version__,
        "config": config,
        "params": run.params.to_dict(),
        "grid": run.grid.to_dict(),
        "seed": seed,
        "rng": {"algorithm": "Philox", "library": "numpy.random.Philox"},
        "status": run.status.value,
        "message": run.message,
        "steps": final.step if final else 0,
        "rejected_steps": run.rejections,
        "t_final": float(final.t) if final else 0.0,
        "series": {"file": SERIES, "columns": list(SERIES_COLUMNS), "rows": len(run.rows)},
        "snapshots": snaps,
    }
    if extra:
        manifest.update(extra)
    dump_json(manifest, out / MANIFEST)
    return out


def read_series(run_dir) -> dict[str, np.ndarray]:
    path = Path(run_dir) / SERIES
    if not path.is_file():
        raise RunDirError(f"{path}: no time series")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RunDirError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in ("t", "norm_Q_L2") if c not in header]
    if missing:
        raise RunDirError(f"{path}: missing columns {missing}")
    if not body:
        raise RunDirError(f"{path}: empty series")
    data = np.array([[float(v) for v in r] for r in body], dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    if not path.is_file():
        raise RunDirError(f"{path}: no manifest")
    return json.loads(path.read_text())


def read_snapshots(run_dir) -> list:
    """[(t, ScalarField)] in manifest order."""
    run_dir = Path(run_dir)
    out = []
    for entry in read_manifest(run_dir).get("snapshots", []):
        header, f = read_snapshot(run_dir / entry["file"])
        out.append((float(header["time"]), f))
    return out
