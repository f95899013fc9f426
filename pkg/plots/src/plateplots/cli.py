"""Command line wrapper: plateplots KIND INPUT... -o OUTPUT."""

from __future__ import annotations

import argparse
import sys

from .figures import FIGURE_KINDS, EnvelopeViolation, FigureSpec, SchemaError, render


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="plateplots",
        description="Render figures from platelab CSV/JSON artifacts")
    parser.add_argument("kind", choices=FIGURE_KINDS)
    parser.add_argument("inputs", nargs="+")
    parser.add_argument("-o", "--output", required=True)
    parser.add_argument("--dpi", type=int, default=120)
    parser.add_argument("--linear", action="store_true",
                        help="force a linear value axis")
    args = parser.parse_args(argv)

    spec = FigureSpec(kind=args.kind, inputs=args.inputs, output=args.output,
                      dpi=args.dpi, logy=False if args.linear else None)
    try:
        path = render(spec)
    except (SchemaError, EnvelopeViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
