"""Regenerate src/pylatch/data/default_pattern.txt.

Renders a seeded synthetic same/not-same patch dataset in the 1024x1024
patch-grid layout, then runs ``pylatch train`` on it with default settings.

    python scripts/build_default_pattern.py [--keep DIR]
"""

from __future__ import annotations

import argparse
import tempfile
import time
from pathlib import Path

from pylatch import cli
from pylatch.synthetic import brown_files, view_patches

OUT = Path(__file__).resolve().parents[1] / "src" / "pylatch" / "data" / "default_pattern.txt"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--keep", help="write the dataset here instead of a temp dir")
    parser.add_argument("--scenes", type=int, default=16)
    parser.add_argument("--out", default=str(OUT))
    args = parser.parse_args()

    t0 = time.time()
    dataset = view_patches(n_scenes=args.scenes, views=3, points_per_scene=250, seed=0, size=512)
    print(f"{len(dataset)} patches, {len(set(dataset.labels.tolist()))} points ({time.time() - t0:.1f}s)")

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(args.keep or tmp)
        root.mkdir(parents=True, exist_ok=True)
        for name, payload in brown_files(dataset).items():
            (root / name).write_bytes(payload)
        t0 = time.time()
        code = cli.main(["-v", "train", "--dataset", str(root), "--seed", "0", "--out", args.out])
        print(f"train exit {code} ({time.time() - t0:.1f}s) -> {args.out}")


if __name__ == "__main__":
    main()
