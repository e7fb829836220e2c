"""`plot`: render figures from run artifacts.

    plot render --job <spec>
    plot render-all --manifest <path> [--out <dir>]

Job specs use the same flat `key = value` grammar as run configs, with
keys kind, inputs (comma-separated paths), out, and optional labels.
"""

import argparse
import sys

from .jobs import PlotkitError, job_from_spec
from .render import render, render_all


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    one = sub.add_parser("render")
    one.add_argument("--job", required=True)
    many = sub.add_parser("render-all")
    many.add_argument("--manifest", required=True)
    many.add_argument("--out", default=None)
    args = parser.parse_args(argv)
    try:
        if args.command == "render":
            paths = [render(job_from_spec(args.job))]
        else:
            paths = render_all(args.manifest, args.out)
    except PlotkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
