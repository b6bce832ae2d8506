"""Command-line interface for the feature/image exporter.

Exit codes: 0 success (per-file errors are recorded in the manifest and
reported on stderr), 1 runtime error, 2 usage/profile error.
"""

from __future__ import annotations

import argparse
import sys

from edgevad import DatasetLayoutError

from .backbone import MissingWeightsError
from .export import export, export_images
from .profiles import ProfileError, get_profile


def _cmd_export(args) -> int:
    profile = get_profile(args.profile)
    manifest = export(
        args.dataset,
        profile,
        args.out,
        weights=args.weights,
        seed=args.seed,
    )
    print(
        f"exported {len(manifest['files'])} feature files "
        f"({manifest['backbone']}, taps {', '.join(manifest['taps'])}) to {args.out}"
    )
    for item in manifest["errors"]:
        print(f"skipped {item['image_id']}: {item['error']}", file=sys.stderr)
    return 0


def _cmd_export_images(args) -> int:
    manifest = export_images(args.dataset, args.out, side=args.side)
    print(
        f"exported {len(manifest['files'])} raw images "
        f"({manifest['bytes_per_image']} bytes each) to {args.out}"
    )
    for item in manifest["errors"]:
        print(f"skipped {item['image_id']}: {item['error']}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgevad-export",
        description="Dump backbone features or resized images for edgevad.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="write feature files + manifest")
    p_export.add_argument("--dataset", required=True, help="image dataset root")
    p_export.add_argument("--profile", required=True, help="backbone profile name")
    p_export.add_argument("--out", required=True, help="output directory")
    p_export.add_argument(
        "--weights",
        default="pretrained",
        help="'pretrained', 'random', or a state-dict file path",
    )
    p_export.add_argument(
        "--seed", type=int, default=0, help="seed for --weights random"
    )
    p_export.set_defaults(func=_cmd_export)

    p_images = sub.add_parser("export-images", help="write raw resized RGB dumps")
    p_images.add_argument("--dataset", required=True, help="image dataset root")
    p_images.add_argument("--out", required=True, help="output directory")
    p_images.add_argument("--side", type=int, default=224, help="output side length")
    p_images.set_defaults(func=_cmd_export_images)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProfileError as exc:
        print(f"profile error: {exc}", file=sys.stderr)
        return 2
    except (MissingWeightsError, DatasetLayoutError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
