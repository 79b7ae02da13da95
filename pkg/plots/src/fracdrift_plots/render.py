"""Manifest-driven rendering with deterministic output bytes."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib.pyplot as plt

from .artifacts import SchemaError, load_manifest
from .figures import FIGURES


@dataclass(frozen=True)
class PlotJob:
    """What to render: a run manifest, a figure subset, and the format."""

    manifest: str
    figures: tuple | None = None  # None = every documented figure for the suite
    fmt: str = "png"

    def __post_init__(self):
        if self.fmt not in ("png", "svg"):
            raise ValueError(f"output format must be png or svg, got {self.fmt!r}")


def _save(fig, path: Path, fmt: str) -> None:
    # strip writer metadata and salt the SVG ids so identical artifacts
    # render to identical bytes (the hash salt must be active at save time)
    metadata = {"Software": None} if fmt == "png" else {"Date": None}
    with plt.rc_context({"svg.hashsalt": "fracdrift-plots"}):
        fig.savefig(path, format=fmt, metadata=metadata)
    plt.close(fig)


def render(job: PlotJob, out_dir) -> list[Path]:
    """Render the job's figures; returns the written paths.

    An empty figure list is a no-op success.  Unknown figure names and
    schema mismatches raise SchemaError.
    """
    manifest, base = load_manifest(job.manifest)
    experiment = manifest["experiment"]
    available = FIGURES.get(experiment)
    if available is None:
        raise SchemaError(f"no figures documented for experiment {experiment!r}")
    if job.figures is None:
        selected = list(available)
    else:
        selected = list(job.figures)
        unknown = [f for f in selected if f not in available]
        if unknown:
            raise SchemaError(
                f"unknown figures {unknown} for experiment {experiment!r}; "
                f"documented: {sorted(available)}"
            )
    if not selected:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in selected:
        fig = available[name](manifest, base)
        path = out_dir / f"{name}.{job.fmt}"
        _save(fig, path, job.fmt)
        written.append(path)
    return written
