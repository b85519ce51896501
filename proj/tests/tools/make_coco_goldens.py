#!/usr/bin/env python3
"""Reference detection metrics from pycocotools.

Writes
  tests/fixtures/coco_scenes.json        200 random small scenes with expected metrics
  tests/fixtures/bundle/annotations.jsonl  20-image fixture set
  tests/fixtures/bundle/manifest.jsonl     scoring manifest for that set
  tests/fixtures/bundle/golden.json        expected metrics of its final predictions

Every detection gets score 1.0 so pycocotools ranks by emission order (its sorts
are stable), and image ids increase in dataset order. Coordinates are integers
so xywh <-> xyxy conversion is exact.

    pip install pycocotools
    python3 tests/tools/make_coco_goldens.py
"""

import contextlib
import io
import json
import pathlib

import numpy as np
from pycocotools.coco import COCO
from pycocotools.cocoeval import COCOeval

ROOT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"
LABELS = ["cat", "dog", "person", "car", "bird"]


def coco_metrics(images, categories):
    """images: list of dict(width, height, gt=[(label, box)], preds=[(label, box)])."""
    cat_ids = {c: i + 1 for i, c in enumerate(categories)}
    gt = {"images": [], "annotations": [], "categories": [{"id": v, "name": k} for k, v in cat_ids.items()]}
    dets = []
    for idx, im in enumerate(images):
        image_id = idx + 1
        gt["images"].append({"id": image_id, "width": im["width"], "height": im["height"]})
        for label, (x1, y1, x2, y2) in im["gt"]:
            gt["annotations"].append({"id": len(gt["annotations"]) + 1, "image_id": image_id,
                                      "category_id": cat_ids[label], "bbox": [x1, y1, x2 - x1, y2 - y1],
                                      "area": (x2 - x1) * (y2 - y1), "iscrowd": 0})
        for label, (x1, y1, x2, y2) in im["preds"]:
            if label not in cat_ids:
                continue
            dets.append({"image_id": image_id, "category_id": cat_ids[label],
                         "bbox": [x1, y1, x2 - x1, y2 - y1], "score": 1.0})
    # The reference reports -1 when nothing is evaluable; keep only defined scenes.
    if not dets or not gt["annotations"]:
        return None
    with contextlib.redirect_stdout(io.StringIO()):
        coco_gt = COCO()
        coco_gt.dataset = gt
        coco_gt.createIndex()
        coco_dt = coco_gt.loadRes(dets)
        ev = COCOeval(coco_gt, coco_dt, "bbox")
        ev.evaluate()
        ev.accumulate()
        ev.summarize()
    prec = ev.eval["precision"][:, :, :, 0, 2]  # all areas, maxDets=100
    per_iou = []
    for t in range(prec.shape[0]):
        v = prec[t][prec[t] > -1]
        per_iou.append(float(np.mean(v)) if v.size else 0.0)
    return {"map": float(ev.stats[0]), "ap50": float(ev.stats[1]), "ap75": float(ev.stats[2]),
            "ar100": float(ev.stats[8]), "ap_per_iou": per_iou}


def random_box(rng, w, h):
    x1 = int(rng.integers(0, w - 8))
    y1 = int(rng.integers(0, h - 8))
    x2 = int(rng.integers(x1 + 4, min(w, x1 + w // 2) + 1))
    y2 = int(rng.integers(y1 + 4, min(h, y1 + h // 2) + 1))
    return [x1, y1, x2, y2]


def jitter(rng, box, w, h, amount):
    x1, y1, x2, y2 = box
    d = rng.integers(-amount, amount + 1, size=4)
    nx1 = int(np.clip(x1 + d[0], 0, w - 2))
    ny1 = int(np.clip(y1 + d[1], 0, h - 2))
    nx2 = int(np.clip(x2 + d[2], nx1 + 1, w))
    ny2 = int(np.clip(y2 + d[3], ny1 + 1, h))
    return [nx1, ny1, nx2, ny2]


def random_scene(rng):
    n_cats = int(rng.integers(1, 5))
    categories = list(rng.choice(LABELS, size=n_cats, replace=False))
    images = []
    for _ in range(int(rng.integers(1, 6))):
        w, h = int(rng.integers(40, 200)), int(rng.integers(40, 200))
        gt = [(str(rng.choice(categories)), random_box(rng, w, h)) for _ in range(int(rng.integers(0, 11)))]
        preds = []
        for label, box in gt:
            r = rng.random()
            if r < 0.15:
                continue
            plabel = label if rng.random() > 0.1 else str(rng.choice(categories))
            preds.append((plabel, jitter(rng, box, w, h, int(rng.integers(0, 12)))))
            if rng.random() < 0.15:
                preds.append((label, jitter(rng, box, w, h, 3)))
        for _ in range(int(rng.integers(0, 4))):
            preds.append((str(rng.choice(categories)), random_box(rng, w, h)))
        order = rng.permutation(len(preds))
        preds = [preds[i] for i in order][:10]
        images.append({"image_id": f"s{len(images)}", "width": w, "height": h, "gt": gt, "preds": preds})
    # Occasionally list a category that has no ground truth anywhere.
    if rng.random() < 0.2:
        extra = [c for c in LABELS if c not in categories]
        categories.append(extra[0])
    return images, [str(c) for c in categories]


def objects(pairs):
    return [{"label": l, "bbox": b} for l, b in pairs]


def make_scenes(rng, count):
    scenes = []
    while len(scenes) < count:
        images, categories = random_scene(rng)
        expected = coco_metrics(images, categories)
        if expected is None:
            continue
        scenes.append({
            "categories": categories,
            "images": [{"image_id": im["image_id"], "width": im["width"], "height": im["height"],
                        "gt": objects(im["gt"]), "preds": objects(im["preds"])} for im in images],
            "expected": expected,
        })
    return scenes


def structured(pairs):
    return json.dumps([{"bbox_2d": b, "label": l} for l, b in pairs])


def plain_thousandths(pairs, w, h):
    parts = []
    for l, (x1, y1, x2, y2) in pairs:
        q = [int(x1 * 1000 // w), int(y1 * 1000 // h), int(-(-x2 * 1000 // w)), int(-(-y2 * 1000 // h))]
        parts.append(f"{l}-[{q[0]},{q[1]},{q[2]},{q[3]}]")
    return ";".join(parts)


def make_bundle(rng):
    categories = ["cat", "dog", "person", "car"]
    annotations, images = [], []
    for i in range(20):
        w, h = int(rng.integers(320, 800)), int(rng.integers(240, 600))
        n = int(rng.integers(1, 14)) if i % 5 else 0
        gt = [(str(rng.choice(categories)), random_box(rng, w, h)) for _ in range(n)]
        preds = []
        for label, box in gt:
            if rng.random() < 0.1:
                continue
            preds.append((label, jitter(rng, box, w, h, int(rng.integers(0, 20)))))
        for _ in range(int(rng.integers(0, 3))):
            preds.append((str(rng.choice(categories)), random_box(rng, w, h)))
        image_id = f"img{i:03d}"
        refs = []
        if gt:
            refs.append({"expression": f"the {gt[0][0]} in the picture", "instances": [0]})
        annotations.append({"image_id": image_id, "width": w, "height": h, "instances": objects(gt), "refs": refs})
        images.append({"image_id": image_id, "width": w, "height": h, "gt": gt, "preds": preds})

    manifest = []
    for i, im in enumerate(images):
        w, h = im["width"], im["height"]
        sample = {"image_id": im["image_id"], "width": w, "height": h, "task": "object-detection",
                  "gt": objects(im["gt"])}
        completions = [structured(im["preds"]), structured(im["gt"]), "I see nothing.",
                       structured([(l, jitter(rng, b, w, h, 30)) for l, b in im["gt"]])]
        manifest.append({"v": 1, "request_id": f"final-{i}", "sample": sample, "completions": completions,
                         "progress": round(i / 20, 2), "final": True})
        plain = [plain_thousandths(im["gt"], w, h), plain_thousandths(im["preds"], w, h), "", "cat-[1,2,3"]
        manifest.append({"v": 1, "request_id": f"plain-{i}", "sample": sample, "completions": plain,
                         "progress": 0.75, "format": "plain"})
    golden = coco_metrics(images, sorted({l for im in images for l, _ in im["gt"]},
                                         key=[l for im in images for l, _ in im["gt"]].index))
    return annotations, manifest, golden


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    rng = np.random.default_rng(20250317)
    ROOT.mkdir(parents=True, exist_ok=True)
    scenes = make_scenes(rng, 200)
    with open(ROOT / "coco_scenes.json", "w", encoding="utf-8") as f:
        json.dump({"scenes": scenes}, f)
    annotations, manifest, golden = make_bundle(rng)
    bundle = ROOT / "bundle"
    bundle.mkdir(exist_ok=True)
    write_jsonl(bundle / "annotations.jsonl", annotations)
    write_jsonl(bundle / "manifest.jsonl", manifest)
    with open(bundle / "golden.json", "w", encoding="utf-8") as f:
        json.dump(golden, f, indent=2)
    print(f"{len(scenes)} scenes; bundle mAP {golden['map']:.6f}")
