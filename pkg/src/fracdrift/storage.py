"""Flat binary containers, CSV artifacts, and the run manifest.

All containers are little-endian.  Byte layouts (documented here and in the
README):

field container (.fdf):
    magic   4s      b"FDF1"
    d       uint32
    n       uint32
    L       float64
    dtype   uint32  0 = float64
    layout  uint32  0 = row-major
    payload n^d float64, row-major

trajectory container (.fdt):
    magic    4s      b"FDT1"
    d        uint32
    n        uint32
    L        float64
    n_frames uint32
    payload  n_frames float64 times, then n_frames * n^d float64 frames

path container (.fdp):
    magic   4s      b"FDP1"
    N       uint32
    n_times uint32
    d       uint32
    dtype   uint32  0 = float64
    payload n_times float64 times, then N * n_times * d float64,
            particle-major
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .fields import Field, GridSpec
from .mild import FieldTrajectory

SCHEMA_VERSION = 1

_FIELD_MAGIC = b"FDF1"
_TRAJ_MAGIC = b"FDT1"
_PATH_MAGIC = b"FDP1"


def save_field(path, f: Field) -> None:
    with open(path, "wb") as fh:
        fh.write(_FIELD_MAGIC)
        fh.write(struct.pack("<IIdII", f.grid.d, f.grid.n, f.grid.L, 0, 0))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _FIELD_MAGIC:
            raise ConfigurationError(f"{path}: not a field container (magic {magic!r})")
        d, n, L, dtype, layout = struct.unpack("<IIdII", fh.read(24))
        if dtype != 0 or layout != 0:
            raise ConfigurationError(f"{path}: unsupported dtype/layout codes {dtype}/{layout}")
        grid = GridSpec(d, n, L)
        values = np.frombuffer(fh.read(8 * grid.size), dtype="<f8").reshape(grid.shape)
    return Field(grid, values.copy())


def save_field_csv(path, f: Field) -> None:
    if f.grid.d != 1:
        raise ConfigurationError("CSV field format is d=1 only")
    write_csv(path, ["x", "value"], zip(f.grid.axis_coords(), f.values))


def save_trajectory(path, traj: FieldTrajectory) -> None:
    with open(path, "wb") as fh:
        fh.write(_TRAJ_MAGIC)
        fh.write(struct.pack("<IIdI", traj.grid.d, traj.grid.n, traj.grid.L, traj.t_grid.size))
        fh.write(np.ascontiguousarray(traj.t_grid, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(traj.frames, dtype="<f8").tobytes())


def load_trajectory(path) -> FieldTrajectory:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _TRAJ_MAGIC:
            raise ConfigurationError(f"{path}: not a trajectory container (magic {magic!r})")
        d, n, L, n_frames = struct.unpack("<IIdI", fh.read(20))
        grid = GridSpec(d, n, L)
        t_grid = np.frombuffer(fh.read(8 * n_frames), dtype="<f8")
        frames = np.frombuffer(fh.read(8 * n_frames * grid.size), dtype="<f8")
    return FieldTrajectory(grid, t_grid.copy(), frames.reshape(n_frames, *grid.shape).copy())


def save_paths(path, t_grid: np.ndarray, paths: np.ndarray) -> None:
    N, n_times, d = paths.shape
    with open(path, "wb") as fh:
        fh.write(_PATH_MAGIC)
        fh.write(struct.pack("<IIII", N, n_times, d, 0))
        fh.write(np.ascontiguousarray(t_grid, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(paths, dtype="<f8").tobytes())


def load_paths(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _PATH_MAGIC:
            raise ConfigurationError(f"{path}: not a path container (magic {magic!r})")
        N, n_times, d, dtype = struct.unpack("<IIII", fh.read(16))
        if dtype != 0:
            raise ConfigurationError(f"{path}: unsupported dtype code {dtype}")
        t_grid = np.frombuffer(fh.read(8 * n_times), dtype="<f8")
        paths = np.frombuffer(fh.read(8 * N * n_times * d), dtype="<f8")
    return t_grid.copy(), paths.reshape(N, n_times, d).copy()


def write_csv(path, header, rows) -> None:
    """CSV with a header row; floats rendered with repr-exact precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_render(v) for v in row])


def _render(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_csv(path):
    """Returns (header, list of row dicts with string values)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return reader.fieldnames, list(reader)


def sha256_of(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, experiment: str, seed: int, config: dict, extras: dict | None = None):
    """Manifest listing every artifact in out_dir with its content hash.

    The manifest names every emitted file (itself excluded, since a file
    cannot contain its own hash).
    """
    out_dir = Path(out_dir)
    artifacts = []
    for p in sorted(out_dir.iterdir()):
        if p.name == "manifest.json" or not p.is_file():
            continue
        artifacts.append({"name": p.name, "sha256": sha256_of(p), "bytes": p.stat().st_size})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "seed": seed,
        "config": config,
        "artifacts": artifacts,
    }
    if extras:
        manifest["extras"] = extras
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
