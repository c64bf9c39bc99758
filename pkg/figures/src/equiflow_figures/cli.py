"""Command-line wrapper: equiflow-fig --kind K --in DIR [--in DIR ...] --out PATH."""

from __future__ import annotations

import argparse
import sys

from .render import FigureJob, RenderInputError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="equiflow-fig",
        description="Render travel-time histograms and insufficiency heatmaps "
        "from equiflow scenario directories.",
    )
    parser.add_argument(
        "--kind", required=True, choices=["histogram", "heatmap", "comparison"],
        help="figure type; comparison lays out one histogram and one heatmap panel per scenario",
    )
    parser.add_argument(
        "--in", dest="inputs", action="append", required=True, metavar="DIR",
        help="scenario output directory (repeat for comparison figures)",
    )
    parser.add_argument("--out", required=True, metavar="PATH",
                        help="output image path; the suffix picks the format (SVG/PDF/PNG)")
    parser.add_argument("--bin-width", type=float, default=None,
                        help="coarsen histogram bins to this width in minutes")
    parser.add_argument("--vmin", type=float, default=None, help="heatmap color scale lower bound")
    parser.add_argument("--vmax", type=float, default=None, help="heatmap color scale upper bound")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = FigureJob(
            input_dirs=list(args.inputs),
            kind=args.kind,
            out_path=args.out,
            bin_width=args.bin_width,
            vmin=args.vmin,
            vmax=args.vmax,
        )
        render(job)
    except RenderInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
