"""Render contact sheets for every method over a small synthetic corpus.

Writes one PNG per method under --out (default ./preview_out) so the
placement/target behaviour can be eyeballed side by side.
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from keeporig.core import Image, PipelineConfig
from keeporig.dataset_io import write_image_file
from keeporig.pipeline import run_preview

METHODS = (
    "keep_original",
    "keep_original_cutout",
    "keep_augment",
    "salfmix",
    "cutout",
    "random_erasing",
    "gridmask",
    "hide_and_seek",
)


def make_corpus(root: Path, n: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        arr = rng.integers(20, 90, size=(64, 96, 3), dtype=np.uint8)
        y = int(rng.integers(10, 54))
        x = int(rng.integers(10, 86))
        arr[max(0, y - 9) : y + 9, max(0, x - 9) : x + 9] = rng.integers(
            200, 256, size=3, dtype=np.uint8
        )
        write_image_file(Image(arr), root / f"sample_{i}.png", "png")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="preview_out")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--grid", default="2x4")
    args = ap.parse_args()

    out = Path(args.out)
    corpus = out / "corpus"
    make_corpus(corpus, 4, args.seed)
    rows, cols = (int(v) for v in args.grid.lower().split("x"))

    for method in METHODS:
        cfg = PipelineConfig.from_dict({"method": method, "seed": args.seed, "keep_prob": 0.0})
        sheet = out / f"{method}.png"
        run_preview(corpus, sheet, cfg, grid=(rows, cols))
        print(f"wrote {sheet}")


if __name__ == "__main__":
    main()
