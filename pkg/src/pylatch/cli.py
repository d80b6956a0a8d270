"""``pylatch`` command line: detect, describe, match, train, eval.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import detect, latch, match, pattern
from .errors import DataError
from .evaluation import DEFAULT_RADIUS, evaluate
from .image import load_pgm

logger = logging.getLogger("pylatch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
# the shipped pattern's mask: 8x8 patches emulating 7x7
TRAIN_MASK_INNER = 7


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: error: {message}")


def _read(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    return Path(path).read_bytes()


def _write(path: str | None, payload: bytes) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()
    else:
        Path(path).write_bytes(payload)


def _load_pattern(spec: str) -> pattern.TripletPattern:
    return pattern.default_pattern() if spec == "default" else pattern.load_pattern(_read(spec))


def cmd_detect(args: argparse.Namespace) -> int:
    image = load_pgm(_read(args.image))
    keypoints = detect.detect_and_orient(image, args.threshold, not args.no_nms)
    logger.info("%d keypoints", len(keypoints))
    _write(args.out, detect.format_keypoints(keypoints))
    return EXIT_OK


def cmd_describe(args: argparse.Namespace) -> int:
    pat = _load_pattern(args.pattern)
    image = load_pgm(_read(args.image))
    keypoints = detect.parse_keypoints(_read(args.keypoints))
    kept, mat = latch.describe_matrix(image, keypoints, pat, args.workers)
    logger.info("%d of %d keypoints described", len(kept), len(keypoints))
    _write(args.out, latch.write_descriptors(kept, mat, pat.descriptor_bytes))
    return EXIT_OK


def cmd_match(args: argparse.Namespace) -> int:
    _, probes = latch.read_descriptors(_read(args.probe))
    _, gallery = latch.read_descriptors(_read(args.gallery))
    options = match.MatchOptions(args.ratio, args.cross_check, args.max_distance)
    pairs = match.match_brute_force(probes, gallery, options, args.workers)
    logger.info("%d matches", len(pairs))
    _write(args.out, match.format_matches(pairs))
    return EXIT_OK


def _dataset_files(directory: str) -> dict[str, bytes]:
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {directory!r} not found")
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


def cmd_train(args: argparse.Namespace) -> int:
    dataset = pattern.ingest_brown(_dataset_files(args.dataset))
    logger.info("training on %d patches", len(dataset))
    pat = pattern.train_pattern(
        dataset,
        candidates=args.candidates,
        bits=args.bits,
        corr_threshold=args.corr_threshold,
        seed=args.seed,
        mask=pattern.WeightMask.emulating(TRAIN_MASK_INNER),
        workers=args.workers,
    )
    _write(args.out, pattern.save_pattern(pat))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate(
        load_pgm(_read(args.image)),
        _load_pattern(args.pattern),
        rotate_deg=args.rotate,
        noise=args.noise,
        brightness=args.brightness,
        threshold=args.threshold,
        seed=args.seed,
        radius=args.radius,
        workers=args.workers,
    )
    _write(args.out, report.to_json().encode("ascii"))
    return EXIT_OK


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _ratio(text: str) -> float:
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"ratio must be in (0, 1], got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pylatch", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument("--workers", type=int, default=None, help="worker threads (default: all cores)")

    p = sub.add_parser("detect", help="FAST keypoints with orientation -> keypoint TSV")
    p.add_argument("--image", required=True)
    p.add_argument("--threshold", type=_positive_float, default=detect.DEFAULT_THRESHOLD)
    p.add_argument("--no-nms", action="store_true")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("describe", help="LATCH descriptors for a keypoint file")
    p.add_argument("--image", required=True)
    p.add_argument("--keypoints", required=True)
    p.add_argument("--pattern", default="default", help='pattern file, or "default"')
    common(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", help="brute-force Hamming matching of two descriptor files")
    p.add_argument("--probe", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--ratio", type=_ratio, default=None)
    p.add_argument("--cross-check", action="store_true")
    p.add_argument("--max-distance", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("train", help="learn a triplet pattern from a patch-grid dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--candidates", type=int, default=pattern.DEFAULT_CANDIDATES)
    p.add_argument("--bits", type=int, default=pattern.DEFAULT_T)
    p.add_argument("--corr-threshold", type=float, default=pattern.DEFAULT_CORR_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="match an image against a rotated/noisy copy of itself")
    p.add_argument("--image", required=True)
    p.add_argument("--rotate", type=float, default=0.0, help="degrees")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    p.add_argument("--brightness", type=float, default=0.0)
    p.add_argument("--threshold", type=_positive_float, default=detect.DEFAULT_THRESHOLD)
    p.add_argument("--pattern", default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=_positive_float, default=DEFAULT_RADIUS, help="correctness radius in px")
    common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers is not None and args.workers < 1:
        print(f"pylatch: error: --workers must be >= 1, got {args.workers}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, OSError, UnicodeDecodeError) as exc:
        print(f"pylatch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"pylatch {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"pylatch {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
