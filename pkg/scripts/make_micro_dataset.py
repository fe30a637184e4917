#!/usr/bin/env python3
"""Generate a synthetic COCO-style micro-dataset for exercising the CLI.

Writes an annotation file, a detection-result file (jittered copies of
the ground truths plus random false positives), and optionally corrupts
a number of annotations so the validate/clean path has work to do.

Example:
    python scripts/make_micro_dataset.py --out-dir demo --corrupt 30
    detkit validate --ann demo/annotations.json
    detkit eval --gt demo/annotations.json --dets demo/detections.json \
        --out demo/metrics.json
"""

import argparse
import json
from pathlib import Path

import numpy as np


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="demo")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--images", type=int, default=40)
    ap.add_argument("--classes", type=int, default=3)
    ap.add_argument("--boxes-per-image", type=int, default=4)
    ap.add_argument("--corrupt", type=int, default=0,
                    help="make this many annotations out of bounds")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    images, annotations, detections = [], [], []
    ann_id = 1
    for img_id in range(1, args.images + 1):
        width, height = 640, 480
        images.append(
            {"id": img_id, "file_name": f"img_{img_id:04d}.jpg",
             "width": width, "height": height}
        )
        for _ in range(args.boxes_per_image):
            w, h = rng.uniform(8, 140, 2)
            x = rng.uniform(0, width - w)
            y = rng.uniform(0, height - h)
            cls = int(rng.integers(1, args.classes + 1))
            annotations.append({
                "id": ann_id, "image_id": img_id, "category_id": cls,
                "bbox": [round(v, 2) for v in (x, y, w, h)],
                "area": round(w * h, 2),
            })
            ann_id += 1
            if rng.random() < 0.8:  # jittered true positive
                jit = rng.uniform(-5, 5, 4)
                detections.append({
                    "image_id": img_id, "category_id": cls,
                    "bbox": [round(v, 2) for v in
                             (x + jit[0], y + jit[1], max(w + jit[2], 2), max(h + jit[3], 2))],
                    "score": round(float(rng.uniform(0.3, 0.99)), 4),
                })
        if rng.random() < 0.4:  # a false positive somewhere
            w, h = rng.uniform(8, 80, 2)
            detections.append({
                "image_id": img_id, "category_id": int(rng.integers(1, args.classes + 1)),
                "bbox": [round(v, 2) for v in (rng.uniform(0, 500), rng.uniform(0, 380), w, h)],
                "score": round(float(rng.uniform(0.01, 0.4)), 4),
            })

    for ann in annotations[: args.corrupt]:
        ann["bbox"][0] = 700.0  # pushes x + w past the image border

    (out / "annotations.json").write_text(json.dumps(
        {"images": images, "annotations": annotations,
         "categories": [{"id": c, "name": f"class_{c}"} for c in range(1, args.classes + 1)]},
        indent=2,
    ))
    (out / "detections.json").write_text(json.dumps(detections, indent=2))
    print(f"wrote {len(images)} images, {len(annotations)} annotations "
          f"({args.corrupt} corrupted), {len(detections)} detections to {out}/")


if __name__ == "__main__":
    main()
