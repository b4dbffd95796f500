"""Regenerate the bundled clean images from scikit-image's sample data.

Run once; the PNGs are committed under src/derainnet/data/clean/. Each tile
is a 256x256 region downsampled 2x to 128x128. Held-out tiles come from
regions that do not overlap any training tile.
"""
from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

OUT = Path(__file__).resolve().parents[1] / "src" / "derainnet" / "data" / "clean"

# (source, top, left) of each 256x256 region
TRAIN = [
    ("astronaut", 0, 0), ("astronaut", 0, 256), ("astronaut", 256, 256),
    ("coffee", 0, 0), ("coffee", 144, 0), ("chelsea", 44, 0),
    ("rocket", 0, 0), ("rocket", 0, 128), ("rocket", 171, 0), ("rocket", 171, 128),
    ("chelsea", 0, 0), ("chelsea", 44, 195),
    ("camera", 0, 0), ("camera", 256, 256),
    ("grass", 0, 0), ("gravel", 0, 0), ("brick", 0, 0), ("moon", 0, 0),
    ("clock", 0, 144), ("coins", 47, 0),
]
HELDOUT = [
    ("astronaut", 256, 0), ("coffee", 144, 344), ("rocket", 0, 384),
    ("camera", 0, 256), ("grass", 256, 256),
]


def tile(name, top, left):
    img = getattr(data, name)()
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    region = img[top:top + 256, left:left + 256, :3]
    assert region.shape == (256, 256, 3), (name, region.shape)
    return Image.fromarray(region).resize((128, 128), Image.Resampling.LANCZOS)


def main():
    for split, specs in (("train", TRAIN), ("heldout", HELDOUT)):
        d = OUT / split
        d.mkdir(parents=True, exist_ok=True)
        for i, (name, top, left) in enumerate(specs):
            tile(name, top, left).save(d / f"{i:02d}_{name}.png")


if __name__ == "__main__":
    main()
