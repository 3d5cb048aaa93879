"""Command-line entry: bsde-plots {histogram,sweep,paths} flags mirroring PlotSpec."""

import argparse
import sys

from pandas.errors import EmptyDataError

from .figures import PlotSpec, plot_histogram, plot_paths, plot_sweep


def _build_parser():
    parser = argparse.ArgumentParser(prog="bsde-plots",
                                     description="render figures from solver result CSVs")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in ("histogram", "sweep", "paths"):
        p = sub.add_parser(kind)
        p.add_argument("inputs", nargs="+", help="result CSV file(s)")
        p.add_argument("--out", required=True, help="output image path (svg/pdf/png)")
        p.add_argument("--column", default="y0")
        p.add_argument("--baseline", type=float, default=None)
        p.add_argument("--title", default=None)
        if kind == "sweep":
            p.add_argument("--axis", default="m", choices=["m", "M", "P", "N"])
            p.add_argument("--log-x", action="store_true")
        if kind == "histogram":
            p.add_argument("--bins", type=int, default=30)
        if kind == "paths":
            p.add_argument("--columns", type=lambda s: s.split(","), default=["y"])
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    spec = PlotSpec(
        inputs=args.inputs,
        out=args.out,
        column=getattr(args, "column", "y0"),
        baseline=args.baseline,
        axis=getattr(args, "axis", "m"),
        log_x=getattr(args, "log_x", False),
        columns=getattr(args, "columns", []),
        bins=getattr(args, "bins", 30),
        title=args.title,
    )
    try:
        if args.kind == "histogram":
            plot_histogram(spec)
        elif args.kind == "sweep":
            plot_sweep(spec)
        else:
            plot_paths(spec)
    except (ValueError, FileNotFoundError, EmptyDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
