"""fracdrift-plots <manifest.json> --out figs/ [--format png|svg] [--figures a b]

Exit status: 0 on success (including an empty figure list), 2 on a schema
mismatch or unreadable manifest.
"""

from __future__ import annotations

import argparse
import sys

from .artifacts import SchemaError
from .render import PlotJob, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracdrift-plots", description=__doc__)
    parser.add_argument("manifest", help="manifest.json of a completed run")
    parser.add_argument("--out", required=True, help="directory for figure files")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    parser.add_argument(
        "--figures",
        nargs="*",
        default=None,
        help="subset of documented figures (default: all; empty list: no-op)",
    )
    args = parser.parse_args(argv)
    figures = None if args.figures is None else tuple(args.figures)
    try:
        written = render(PlotJob(args.manifest, figures, args.format), args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
