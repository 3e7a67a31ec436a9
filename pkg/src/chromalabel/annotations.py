"""COCO-compatible annotation files with uncompressed RLE masks.

Document layout::

    {
      "images":      [{"id", "file_name", "width", "height"}, ...],
      "annotations": [{"id", "image_id", "category_id",
                       "segmentation": {"size": [h, w], "counts": [...]},
                       "area", "bbox": [x, y, w, h],
                       "centroid_3d": [X, Y, Z],   # camera frame, meters
                       "score": s?}, ...],
      "categories":  [{"id", "name"}, ...]          # the five object classes
    }

RLE counts are column-major and start with the run of zeros, so the
encoding is readable by standard COCO tooling; it is lossless, and
export -> import round-trips masks exactly. ``centroid_3d`` is an
extension that lets label propagation run from the file alone.

Predictions are accepted either as a full document like the above or as
a bare COCO-results array of ``{image_id, category_id, score,
segmentation}`` records.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .chromakey import FrameInstances, InstanceMask
from .errors import PipelineError
from .evaluation import GtInstance, PredInstance
from .geometry import Point3D, RoiBox
from .propagate import OBJECT_CLASS_NAMES, SequenceLabels


def categories_block() -> list[dict]:
    return [{"id": int(cid), "name": name} for cid, name in OBJECT_CLASS_NAMES.items()]


def encode_rle(pixels, height: int, width: int) -> dict:
    """Encode a pixel set as column-major uncompressed RLE."""
    pixels = np.asarray(pixels)
    mask = np.zeros((height, width), dtype=bool)
    if len(pixels):
        mask[pixels[:, 0], pixels[:, 1]] = True
    flat = mask.ravel(order="F").astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {"size": [height, width], "counts": [int(c) for c in counts]}


def decode_rle(rle: dict) -> np.ndarray:
    """Decode RLE back to a sorted (N, 2) pixel array."""
    try:
        height, width = rle["size"]
        counts = rle["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise PipelineError(f"malformed RLE: {exc}") from exc
    total = int(sum(counts))
    if total != height * width:
        raise PipelineError(f"RLE counts sum {total} != {height}x{width}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += int(c)
        value = not value
    mask = flat.reshape((height, width), order="F")
    return np.argwhere(mask)


def image_record(image_id: int, file_name: str, width: int, height: int) -> dict:
    return {"id": int(image_id), "file_name": file_name,
            "width": int(width), "height": int(height)}


def build_annotation_file(images: list[dict], per_frame: list[FrameInstances],
                          labels: SequenceLabels | None = None,
                          score: float | None = None) -> dict:
    """Assemble a document from per-frame instances.

    ``images`` and ``per_frame`` run in parallel; category ids come from
    ``labels`` (aligned vectors) or default to 0. A ``score`` turns the
    document into a predictions file.
    """
    if len(images) != len(per_frame):
        raise PipelineError(f"{len(images)} images but {len(per_frame)} frame instance sets")
    annotations = []
    next_id = 1
    for k, (image, frame) in enumerate(zip(images, per_frame)):
        if labels is not None and len(labels.frames[k]) != len(frame.instances):
            raise PipelineError(f"label vector length mismatch on image {image['id']}")
        for j, inst in enumerate(frame.instances):
            ann = {
                "id": next_id,
                "image_id": image["id"],
                "category_id": int(labels.frames[k][j]) if labels is not None else 0,
                "segmentation": encode_rle(inst.pixels, image["height"], image["width"]),
                "area": int(inst.area),
                "bbox": [int(inst.bbox.x), int(inst.bbox.y),
                         int(inst.bbox.w), int(inst.bbox.h)],
                "centroid_3d": [inst.centroid_3d.x, inst.centroid_3d.y, inst.centroid_3d.z],
            }
            if score is not None:
                ann["score"] = float(score)
            annotations.append(ann)
            next_id += 1
    return {"images": images, "annotations": annotations, "categories": categories_block()}


def validate_annotations(doc: dict) -> None:
    """Reject structurally broken documents with a specific message."""
    if not isinstance(doc, dict):
        raise PipelineError("annotation document must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if key not in doc or not isinstance(doc[key], list):
            raise PipelineError(f"annotation document missing list {key!r}")
    image_ids = set()
    for img in doc["images"]:
        for key in ("id", "file_name", "width", "height"):
            if key not in img:
                raise PipelineError(f"image record missing {key!r}")
        if img["id"] in image_ids:
            raise PipelineError(f"duplicate image id {img['id']}")
        image_ids.add(img["id"])
    valid_categories = set(OBJECT_CLASS_NAMES)
    ann_ids = set()
    for ann in doc["annotations"]:
        for key in ("id", "image_id", "category_id", "segmentation", "area", "bbox"):
            if key not in ann:
                raise PipelineError(f"annotation record missing {key!r}")
        if ann["id"] in ann_ids:
            raise PipelineError(f"duplicate annotation id {ann['id']}")
        ann_ids.add(ann["id"])
        if ann["image_id"] not in image_ids:
            raise PipelineError(f"annotation {ann['id']} references unknown image {ann['image_id']}")
        if ann["category_id"] not in valid_categories:
            raise PipelineError(
                f"annotation {ann['id']} has category {ann['category_id']}, "
                f"expected one of {sorted(valid_categories)}"
            )


def write_annotations(path, doc: dict) -> None:
    validate_annotations(doc)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_annotations(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"annotation file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise PipelineError(f"{path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict):
        validate_annotations(doc)
    return doc


def anns_by_image(doc: dict) -> dict[int, list[dict]]:
    grouped: dict[int, list[dict]] = {img["id"]: [] for img in doc["images"]}
    for ann in doc["annotations"]:
        grouped[ann["image_id"]].append(ann)
    for anns in grouped.values():
        anns.sort(key=lambda a: a["id"])
    return grouped


def frame_instances_from(doc: dict) -> list[FrameInstances]:
    """Rebuild per-frame instances (with 3D centroids) from a document.

    Requires the ``centroid_3d`` extension written by the labeling step;
    plain COCO files cannot drive propagation.
    """
    grouped = anns_by_image(doc)
    frames = []
    for img in sorted(doc["images"], key=lambda i: i["id"]):
        instances = []
        for ann in grouped[img["id"]]:
            if "centroid_3d" not in ann:
                raise PipelineError(
                    f"annotation {ann['id']} lacks centroid_3d; "
                    "re-export with the label command"
                )
            pixels = decode_rle(ann["segmentation"])
            if len(pixels) == 0:
                raise PipelineError(f"annotation {ann['id']} decodes to an empty mask")
            cx, cy, cz = ann["centroid_3d"]
            x, y, w, h = ann["bbox"]
            instances.append(InstanceMask(
                pixels=pixels,
                area=len(pixels),
                centroid_3d=Point3D(float(cx), float(cy), float(cz)),
                bbox=RoiBox(x, y, w, h),
            ))
        frames.append(FrameInstances(frame_index=img["id"], instances=instances))
    return frames


def gt_instances_from(doc: dict) -> list[GtInstance]:
    out = []
    for ann in doc["annotations"]:
        pixels = decode_rle(ann["segmentation"])
        if len(pixels) == 0:
            raise PipelineError(f"annotation {ann['id']} decodes to an empty mask")
        out.append(GtInstance(image_id=ann["image_id"], mask=pixels,
                              category=ann["category_id"], area=int(ann["area"])))
    return out


def pred_instances_from(source, default_score: float = 1.0) -> list[PredInstance]:
    """Predictions from a full document or a COCO-results array."""
    if isinstance(source, dict):
        records = source["annotations"]
    elif isinstance(source, list):
        records = source
    else:
        raise PipelineError("predictions must be an annotation document or a results array")
    out = []
    for rec in records:
        try:
            pixels = decode_rle(rec["segmentation"])
            if len(pixels) == 0:
                raise PipelineError("prediction decodes to an empty mask")
            out.append(PredInstance(
                image_id=rec["image_id"],
                mask=pixels,
                category=rec["category_id"],
                score=float(rec.get("score", default_score)),
            ))
        except KeyError as exc:
            raise PipelineError(f"prediction record missing key {exc}") from exc
    return out


def relabel_annotations(doc: dict, frames: list[FrameInstances],
                        labels: SequenceLabels) -> dict:
    """Return a copy of ``doc`` with category ids set from label vectors."""
    grouped = anns_by_image(doc)
    new_categories = {}
    for frame, vec in zip(frames, labels.frames):
        anns = grouped[frame.frame_index]
        for ann, cat in zip(anns, vec):
            new_categories[ann["id"]] = int(cat)
    out = json.loads(json.dumps(doc))
    for ann in out["annotations"]:
        ann["category_id"] = new_categories.get(ann["id"], ann["category_id"])
    return out
