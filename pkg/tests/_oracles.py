"""Independent reference implementations used only by tests.

Each oracle recomputes its answer from first principles with naive code
(direct partitioning, python sets, exhaustive scans) so it shares no path
with the package implementation it checks.
"""

from __future__ import annotations

import numpy as np

IOU_THRESHOLDS = [0.50 + 0.05 * i for i in range(10)]
RECALL_POINTS = [i / 100.0 for i in range(101)]
AREA_RANGES = {"all": (0, float("inf")), "small": (0, 1024), "medium": (1024, 9216)}


def otsu_scan(samples) -> float:
    """Exhaustive between-class-variance scan over the 255 uniform-bin
    boundaries, with class statistics taken directly from the samples."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    lo = float(s.min())
    hi = float(s.max())
    if lo == hi:
        return lo
    width = (hi - lo) / 256
    n = s.size
    best_t = None
    best_score = -1.0
    for k in range(1, 256):
        t = lo + k * width
        upper = s >= t
        c1 = int(upper.sum())
        c0 = n - c1
        if c0 == 0 or c1 == 0:
            continue
        mu0 = float(s[~upper].mean())
        mu1 = float(s[upper].mean())
        score = (c0 / n) * (c1 / n) * (mu0 - mu1) ** 2
        if score > best_score:
            best_score = score
            best_t = t
    return float(best_t)


def cross_bilateral_fill(depth, rgb, hole, spatial_sigma=3.0, range_sigma=20.0,
                         kernel_radius=5) -> float:
    """Direct single-pixel evaluation of the cross-bilateral average."""
    h, w = depth.shape
    r0, c0 = hole
    num = 0.0
    den = 0.0
    for r in range(max(0, r0 - kernel_radius), min(h, r0 + kernel_radius + 1)):
        for c in range(max(0, c0 - kernel_radius), min(w, c0 + kernel_radius + 1)):
            if (r, c) == (r0, c0) or depth[r, c] == 0:
                continue
            ws = np.exp(-((r - r0) ** 2 + (c - c0) ** 2) / (2 * spatial_sigma ** 2))
            d2 = float(((rgb[r, c].astype(int) - rgb[r0, c0].astype(int)) ** 2).sum())
            wr = np.exp(-d2 / (2 * range_sigma ** 2))
            num += ws * wr * float(depth[r, c])
            den += ws * wr
    return num / den


def _mask_set(mask) -> frozenset:
    return frozenset((int(r), int(c)) for r, c in np.asarray(mask))


def _set_iou(a: frozenset, b: frozenset) -> float:
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def _eval_range(preds, gts, cat, lo, hi, max_detections):
    """Per-threshold AP for one category pool and area range, or None."""
    image_ids = sorted({g["image_id"] for g in gts} | {p["image_id"] for p in preds})
    npig = 0
    per_threshold_records = {t: [] for t in IOU_THRESHOLDS}
    for img in image_ids:
        gsel = [g for g in gts
                if g["image_id"] == img and (cat is None or g["category"] == cat)]
        psel = [p for p in preds
                if p["image_id"] == img and (cat is None or p["category"] == cat)]
        order = sorted(range(len(psel)), key=lambda i: (-psel[i]["score"], i))
        order = order[:max_detections]
        gt_ignored = [not (lo <= len(g["mask"]) < hi) for g in gsel]
        npig += sum(1 for ig in gt_ignored if not ig)
        for t in IOU_THRESHOLDS:
            taken = [False] * len(gsel)
            for rank, pi in enumerate(order):
                p = psel[pi]
                best = None
                best_iou = -1.0
                for gi, g in enumerate(gsel):
                    if taken[gi] or gt_ignored[gi]:
                        continue
                    iou = _set_iou(p["mask"], g["mask"])
                    if iou >= t and iou > best_iou:
                        best, best_iou = gi, iou
                if best is not None:
                    taken[best] = True
                    per_threshold_records[t].append((p["score"], img, rank, True, False))
                    continue
                for gi, g in enumerate(gsel):
                    if taken[gi] or not gt_ignored[gi]:
                        continue
                    iou = _set_iou(p["mask"], g["mask"])
                    if iou >= t and iou > best_iou:
                        best, best_iou = gi, iou
                if best is not None:
                    taken[best] = True
                    per_threshold_records[t].append((p["score"], img, rank, False, True))
                else:
                    out_of_range = not (lo <= len(p["mask"]) < hi)
                    per_threshold_records[t].append(
                        (p["score"], img, rank, False, out_of_range))
    if npig == 0:
        return None

    aps = []
    for t in IOU_THRESHOLDS:
        kept = [r for r in sorted(per_threshold_records[t],
                                  key=lambda r: (-r[0], r[1], r[2]))
                if not r[4]]
        points = []
        tp = 0
        fp = 0
        for _, _, _, is_tp, _ in kept:
            tp += is_tp
            fp += not is_tp
            points.append((tp / npig, tp / (tp + fp)))
        total = 0.0
        for r_thr in RECALL_POINTS:
            best_p = 0.0
            for recall, precision in points:
                if recall >= r_thr and precision > best_p:
                    best_p = precision
            total += best_p
        aps.append(total / len(RECALL_POINTS) * 100.0)
    return aps


def reference_coco_ap(pred_instances, gt_instances, mode, max_detections=50) -> dict:
    """Naive mask-AP evaluator; same discrete definition, different code."""
    gts = [{"image_id": g.image_id, "mask": _mask_set(g.mask), "category": g.category}
           for g in gt_instances]
    preds = [{"image_id": p.image_id, "mask": _mask_set(p.mask),
              "category": p.category, "score": p.score}
             for p in pred_instances]
    cats = sorted({g["category"] for g in gts}) if mode == "sensitive" else [None]

    def summarize(lo, hi, index=None):
        values = []
        for cat in cats:
            aps = _eval_range(preds, gts, cat, lo, hi, max_detections)
            if aps is None:
                continue
            values.append(aps[index] if index is not None else sum(aps) / len(aps))
        if not values:
            return None
        return sum(values) / len(values)

    lo_all, hi_all = AREA_RANGES["all"]
    return {
        "AP": summarize(lo_all, hi_all),
        "AP50": summarize(lo_all, hi_all, index=0),
        "AP75": summarize(lo_all, hi_all, index=5),
        "AP_S": summarize(*AREA_RANGES["small"]),
        "AP_M": summarize(*AREA_RANGES["medium"]),
    }
