"""COCO-style mask AP over pixel-set instances.

Conventions (fixed here and mirrored by the annotation format):

- AP averages over IoU thresholds 0.50:0.05:0.95 with 101-point
  interpolated precision-recall curves
- AP_S counts ground truths with area < 32^2 pixels, AP_M those in
  [32^2, 96^2); a scale AP is None when no ground truth falls in range
- matching is greedy in descending score, one-to-one, restricted to the
  prediction's category in class-sensitive mode
- ground truths outside the area range are ignored: predictions matching
  them, and unmatched predictions whose own area is out of range, count
  neither as hits nor as false positives
- at most ``max_detections`` predictions per image (and per category in
  class-sensitive mode) enter the evaluation, highest scores first
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PipelineError

IOU_THRESHOLDS = tuple(0.50 + 0.05 * i for i in range(10))
RECALL_POINTS = tuple(i / 100.0 for i in range(101))
AREA_RANGES = {
    "all": (0, float("inf")),
    "small": (0, 32 ** 2),
    "medium": (32 ** 2, 96 ** 2),
}
DEFAULT_MAX_DETECTIONS = 50
EVAL_MODES = ("agnostic", "sensitive")


def _pixel_keys(mask) -> np.ndarray:
    """Encode (row, col) pixels as sorted unique int64 keys."""
    pixels = np.asarray(mask)
    if pixels.ndim != 2 or pixels.shape[1] != 2 or len(pixels) == 0:
        raise ValueError("mask must be a nonempty (N, 2) pixel array")
    return np.unique(pixels[:, 0].astype(np.int64) << 32 | pixels[:, 1].astype(np.int64))


def mask_iou(a, b) -> float:
    """Intersection over union of two pixel sets."""
    ka = _pixel_keys(a)
    kb = _pixel_keys(b)
    inter = np.intersect1d(ka, kb, assume_unique=True).size
    return inter / (ka.size + kb.size - inter)


@dataclass(eq=False)
class GtInstance:
    image_id: int
    mask: np.ndarray  # (N, 2) pixels
    category: int
    area: int = 0

    def __post_init__(self):
        self._keys = _pixel_keys(self.mask)
        if self.area == 0:
            self.area = int(self._keys.size)
        elif self.area != self._keys.size:
            raise PipelineError(f"instance area {self.area} != mask size {self._keys.size}")


@dataclass(eq=False)
class PredInstance:
    image_id: int
    mask: np.ndarray
    category: int
    score: float

    def __post_init__(self):
        self._keys = _pixel_keys(self.mask)
        self.area = int(self._keys.size)
        if not 0.0 <= self.score <= 1.0:
            raise PipelineError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ApReport:
    """Mask AP summary, all values percentages in [0, 100].

    ``ap_s``/``ap_m`` are None when the ground truth has no instance in
    that area range.
    """

    ap: float
    ap50: float
    ap75: float
    ap_s: float | None
    ap_m: float | None

    def as_dict(self) -> dict:
        return {"AP": self.ap, "AP50": self.ap50, "AP75": self.ap75,
                "AP_S": self.ap_s, "AP_M": self.ap_m}


def _keys_iou(ka: np.ndarray, kb: np.ndarray) -> float:
    inter = np.intersect1d(ka, kb, assume_unique=True).size
    return inter / (ka.size + kb.size - inter)


def _match_pool(ious: np.ndarray, thresh: float, gt_ignore, pred_areas,
                lo: float, hi: float):
    """Greedy one-to-one matching for one image pool at one threshold.

    Returns per-prediction (tp, ignored) flags. Predictions prefer the
    highest-IoU unmatched non-ignored ground truth at IoU >= thresh (ties:
    lowest index); failing that they may consume an ignored ground truth
    and become ignored themselves; failing that they are false positives
    unless their own area is outside [lo, hi).
    """
    n_pred, n_gt = ious.shape
    gt_matched = [False] * n_gt
    tp = [False] * n_pred
    ignored = [False] * n_pred
    for p in range(n_pred):
        best = -1
        best_iou = 0.0
        for g in range(n_gt):
            if gt_matched[g] or gt_ignore[g]:
                continue
            if ious[p, g] >= thresh and (best < 0 or ious[p, g] > best_iou):
                best, best_iou = g, ious[p, g]
        if best >= 0:
            gt_matched[best] = True
            tp[p] = True
            continue
        for g in range(n_gt):
            if gt_matched[g] or not gt_ignore[g]:
                continue
            if ious[p, g] >= thresh and (best < 0 or ious[p, g] > best_iou):
                best, best_iou = g, ious[p, g]
        if best >= 0:
            gt_matched[best] = True
            ignored[p] = True
        elif not lo <= pred_areas[p] < hi:
            ignored[p] = True
    return tp, ignored


def _interpolated_ap(records, npig: int) -> float:
    """101-point interpolated AP (percent) from (sort key..., tp, ignored) records."""
    kept = [r for r in sorted(records, key=lambda r: (-r[0], r[1], r[2])) if not r[4]]
    if not kept:
        return 0.0
    tps = np.cumsum([r[3] for r in kept], dtype=np.float64)
    fps = np.cumsum([not r[3] for r in kept], dtype=np.float64)
    recall = tps / npig
    precision = tps / (tps + fps)
    # precision envelope: best achievable at or beyond each recall
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(q.mean() * 100.0)


def _build_pools(preds, gts, mode: str, max_detections: int):
    """Group instances per (category, image) and precompute IoU matrices."""
    image_ids = sorted({g.image_id for g in gts} | {p.image_id for p in preds})
    gts_by_img: dict[int, list[GtInstance]] = {i: [] for i in image_ids}
    preds_by_img: dict[int, list[PredInstance]] = {i: [] for i in image_ids}
    for g in gts:
        gts_by_img[g.image_id].append(g)
    for p in preds:
        preds_by_img[p.image_id].append(p)

    categories = sorted({g.category for g in gts}) if mode == "sensitive" else [None]
    pools = {}
    for cat in categories:
        images = []
        for img in image_ids:
            cgts = [g for g in gts_by_img[img] if cat is None or g.category == cat]
            cpreds = [p for p in preds_by_img[img] if cat is None or p.category == cat]
            order = sorted(range(len(cpreds)), key=lambda i: (-cpreds[i].score, i))
            kept = [cpreds[i] for i in order[:max_detections]]
            ious = np.array(
                [[_keys_iou(p._keys, g._keys) for g in cgts] for p in kept],
                dtype=np.float64,
            ).reshape(len(kept), len(cgts))
            images.append((img, kept, cgts, ious))
        pools[cat] = images
    return pools


def _ap_by_category(pools, thresholds, lo: float, hi: float) -> dict:
    """Per-category AP list over thresholds; None when no gt falls in range."""
    out = {}
    for cat, images in pools.items():
        npig = sum(sum(lo <= g.area < hi for g in cgts) for _, _, cgts, _ in images)
        if npig == 0:
            out[cat] = None
            continue
        records = [[] for _ in thresholds]
        for img, kept, cgts, ious in images:
            gt_ignore = [not lo <= g.area < hi for g in cgts]
            pred_areas = [p.area for p in kept]
            for ti, t in enumerate(thresholds):
                tp, ignored = _match_pool(ious, t, gt_ignore, pred_areas, lo, hi)
                for rank, p in enumerate(kept):
                    records[ti].append((p.score, img, rank, tp[rank], ignored[rank]))
        out[cat] = [_interpolated_ap(r, npig) for r in records]
    return out


def match_instances(preds: Sequence[PredInstance], gts: Sequence[GtInstance],
                    iou_thresh: float, class_sensitive: bool = False):
    """Greedy one-image matching; returns (pred_index, gt_index | None) pairs
    in descending-score order (ties by input index)."""
    image_ids = {p.image_id for p in preds} | {g.image_id for g in gts}
    if len(image_ids) > 1:
        raise PipelineError(f"match_instances expects one image, got ids {sorted(image_ids)}")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    matched = [False] * len(gts)
    result = []
    for i in order:
        p = preds[i]
        best = -1
        best_iou = 0.0
        for g, gt in enumerate(gts):
            if matched[g]:
                continue
            if class_sensitive and gt.category != p.category:
                continue
            iou = _keys_iou(p._keys, gt._keys)
            if iou >= iou_thresh and (best < 0 or iou > best_iou):
                best, best_iou = g, iou
        if best >= 0:
            matched[best] = True
        result.append((i, best if best >= 0 else None))
    return result


def average_precision(preds, gts, iou_thresh: float, class_sensitive: bool = False,
                      max_detections: int = DEFAULT_MAX_DETECTIONS) -> float:
    """Dataset AP (percent) at a single IoU threshold."""
    if not gts:
        raise PipelineError("cannot evaluate with zero ground-truth instances")
    mode = "sensitive" if class_sensitive else "agnostic"
    pools = _build_pools(preds, gts, mode, max_detections)
    lo, hi = AREA_RANGES["all"]
    per_cat = _ap_by_category(pools, [iou_thresh], lo, hi)
    values = [aps[0] for aps in per_cat.values() if aps is not None]
    return float(np.mean(values))


def coco_ap(preds, gts, mode: str = "agnostic",
            max_detections: int = DEFAULT_MAX_DETECTIONS) -> ApReport:
    """Full COCO-style report: AP, AP50, AP75 plus small/medium scale APs."""
    if mode not in EVAL_MODES:
        raise PipelineError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    if not gts:
        raise PipelineError("cannot evaluate with zero ground-truth instances")
    pools = _build_pools(preds, gts, mode, max_detections)
    by_range = {name: _ap_by_category(pools, IOU_THRESHOLDS, lo, hi)
                for name, (lo, hi) in AREA_RANGES.items()}

    def summarize(range_name, threshold_index=None):
        values = []
        for aps in by_range[range_name].values():
            if aps is None:
                continue
            values.append(aps[threshold_index] if threshold_index is not None
                          else float(np.mean(aps)))
        return float(np.mean(values)) if values else None

    return ApReport(
        ap=summarize("all"),
        ap50=summarize("all", threshold_index=0),
        ap75=summarize("all", threshold_index=5),
        ap_s=summarize("small"),
        ap_m=summarize("medium"),
    )
