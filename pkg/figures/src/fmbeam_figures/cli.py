"""Script entry point: `render --kind K --in PATH [--in PATH2] --out PATH.png`.

Exit codes: 0 success, 2 invalid job or CSV input.
"""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .jobs import KINDS, FigureError, FigureJob
from .render import render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="render",
        description="Render an fmbeam CSV output as a PNG figure.",
    )
    p.add_argument("--kind", required=True, choices=KINDS,
                   help="figure kind")
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   metavar="PATH",
                   help="input CSV; give twice (before, after) for spectrum_pair")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--xlim", type=float, nargs=2, default=None)
    p.add_argument("--ylim", type=float, nargs=2, default=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = FigureJob(
            kind=args.kind,
            inputs=tuple(args.inputs),
            out=args.out,
            xlim=tuple(args.xlim) if args.xlim else None,
            ylim=tuple(args.ylim) if args.ylim else None,
        )
        path = render(job)
    except (FigureError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
