#!/usr/bin/env python3
"""Regenerates tests/data/photos from the public-domain sample photographs
bundled with scikit-image.

Each source photo yields one full centre crop plus four half-size crops at
fixed positions, all box-downsampled to 96x96 RGB PNGs.
"""
import argparse
import os

from PIL import Image
import skimage.data

SOURCES = ["astronaut.png", "coffee.png", "chelsea.png", "rocket.jpg",
           "hubble_deep_field.jpg", "ihc.png"]
# (left, top) of the half-size crop as fractions of the free space.
OFFSETS = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "tests", "data", "photos"))
    parser.add_argument("--size", type=int, default=96)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    data_dir = os.path.dirname(skimage.data.__file__)
    for name in SOURCES:
        img = Image.open(os.path.join(data_dir, name)).convert("RGB")
        w, h = img.size
        side = min(w, h)
        crops = [((w - side) // 2, (h - side) // 2, side)]
        half = side // 2
        for fx, fy in OFFSETS:
            left = int(round(fx * (w - half)))
            top = int(round(fy * (h - half)))
            crops.append((left, top, half))
        stem = os.path.splitext(name)[0]
        for i, (left, top, s) in enumerate(crops):
            crop = img.crop((left, top, left + s, top + s)).resize((args.size, args.size), Image.BOX)
            crop.save(os.path.join(args.out, f"{stem}_{i}.png"))


if __name__ == "__main__":
    main()
