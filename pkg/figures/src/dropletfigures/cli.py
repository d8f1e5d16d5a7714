"""figures --a DIR [--b DIR] --time T --out FILE.png"""

from __future__ import annotations

import argparse
import sys

from .frames import FrameError
from .render import FigureSpec, render_figure


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render the 2x2 field panels from droplet1d frame CSVs")
    parser.add_argument("--a", required=True, help="frame directory of run A (lines)")
    parser.add_argument("--b", default=None, help="frame directory of run B (markers)")
    parser.add_argument("--time", type=float, required=True,
                        help="frame timestamp to plot [s]")
    parser.add_argument("--out", required=True, help="output image path (.png)")
    parser.add_argument("--title", default=None)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    spec = FigureSpec(dir_a=args.a, dir_b=args.b, time=args.time,
                      out_path=args.out, title=args.title)
    try:
        render_figure(spec)
    except (FrameError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
