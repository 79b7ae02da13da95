"""Manifest and artifact loading with schema validation.

Every loader names the file and the missing column on failure; figures must
fail loudly rather than render from half-understood data.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class SchemaError(Exception):
    """An artifact does not match its documented schema."""


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot read manifest: {exc}") from exc
    for key in ("experiment", "config", "artifacts", "schema_version"):
        if key not in manifest:
            raise SchemaError(f"{path}: manifest missing key '{key}'")
    return manifest, path.parent


def artifact_path(manifest: dict, base: Path, name: str) -> Path:
    names = {a["name"] for a in manifest["artifacts"]}
    if name not in names:
        raise SchemaError(f"manifest does not list required artifact '{name}'")
    p = base / name
    if not p.exists():
        raise SchemaError(f"listed artifact '{name}' is missing on disk at {p}")
    return p


def load_columns(path: Path, required: list[str]) -> dict[str, np.ndarray]:
    """Read a CSV into float columns, checking the required names."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in required:
            if col not in fields:
                raise SchemaError(f"{path.name}: missing column '{col}'")
        rows = list(reader)
    out = {}
    for col in fields:
        vals = []
        for r in rows:
            try:
                vals.append(float(r[col]))
            except ValueError:
                vals.append(np.nan)
        out[col] = np.asarray(vals)
    return out


def load_json_artifact(path: Path, required: list[str]) -> dict:
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path.name}: cannot parse: {exc}") from exc
    for key in required:
        if key not in data:
            raise SchemaError(f"{path.name}: missing key '{key}'")
    return data
