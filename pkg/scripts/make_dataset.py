#!/usr/bin/env python3
"""Build the benchmark corpus: ten photographs at 672x504 plus a manifest.

Sources are photographic images bundled with scikit-image and
scikit-learn, so the corpus is reproducible offline (gray sources are
replicated to RGB).  Each is resampled to 24x18 pieces of 28px and
written as PNG next to a ``manifest.json`` the bench command consumes.

The mix is deliberate: a few texture-rich photos the assembler solves on
its own, several with smooth or repetitive regions where unsupervised
merges go wrong, so the three supervision modes pull apart.
"""
import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

import skimage.data

SOURCES = (
    "astronaut",
    "brick",
    "chelsea",
    "china",
    "clock",
    "coffee",
    "coins",
    "flower",
    "retina",
    "text",
)

SKLEARN_SAMPLES = {"china", "flower"}

# Motion-blurred clock, cropped to the dial and its smeared surround.  The
# blur survives resampling, so this stays a genuinely smooth-textured photo
# (most sharp sources turn trivial once upsampled).
CLOCK_CROP = (slice(45, 285), slice(40, 360))


def fetch(name: str) -> np.ndarray:
    if name in SKLEARN_SAMPLES:
        from sklearn.datasets import load_sample_image
        return load_sample_image(f"{name}.jpg").astype(np.uint8)
    if name == "clock":
        # not exported by skimage.data's lazy API in some versions
        path = Path(skimage.data.__file__).parent / "clock_motion.png"
        return np.asarray(Image.open(path))[CLOCK_CROP]
    img = getattr(skimage.data, name)()
    if isinstance(img, tuple):  # stereo pairs: keep the left frame
        img = img[0]
    if img.ndim == 3 and img.shape[2] == 4:
        img = img[:, :, :3]
    return img


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/bench", metavar="DIR")
    parser.add_argument("--piece-px", type=int, default=28)
    parser.add_argument("--rows", type=int, default=18)
    parser.add_argument("--cols", type=int, default=24)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    size = (args.cols * args.piece_px, args.rows * args.piece_px)  # (w, h)
    files = []
    for name in SOURCES:
        img = Image.fromarray(fetch(name)).convert("RGB")
        img = img.resize(size, Image.LANCZOS)
        filename = f"{name}.png"
        img.save(out / filename)
        files.append(filename)
        print(f"{filename}: {size[0]}x{size[1]}")
    manifest = {"piece_px": args.piece_px, "images": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2),
                                       encoding="utf-8")
    print(f"manifest written to {out / 'manifest.json'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
