"""Command line front end: extract patch features from one category tree.

Exit codes: 0 all images processed, 1 some images skipped or bad arguments,
2 fatal (missing input, unavailable weights).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .extract import ExtractConfig, ExtractError, extract_features


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crdextract", description=__doc__.splitlines()[0])
    parser.add_argument("--input", type=Path, required=True,
                        help="category directory (train/good, test/*, ground_truth/*)")
    parser.add_argument("--output", type=Path, required=True)
    parser.add_argument("--backbone", default="wide_resnet50_2")
    parser.add_argument("--blocks", nargs="+", default=["layer2", "layer3"])
    parser.add_argument("--resize", type=int, default=256)
    parser.add_argument("--no-pretrained", action="store_true",
                        help="seeded random weights (shape/contract testing only)")
    parser.add_argument("--init-seed", type=int, default=0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractConfig(
        input_dir=args.input,
        output_dir=args.output,
        backbone=args.backbone,
        blocks=tuple(args.blocks),
        resize=args.resize,
        pretrained=not args.no_pretrained,
        init_seed=args.init_seed,
    )
    try:
        result = extract_features(config)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.images_written} images "
          f"(d={result.feature_dim}, grid={result.grid[0]}x{result.grid[1]}) "
          f"-> {config.output_dir}")
    if result.images_skipped:
        print(f"skipped {result.images_skipped} unreadable image(s)", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
