"""Rotated-box IoU and COCO-style mAP for oriented detections.

IoU uses exact convex polygon intersection (successive half-plane
clipping). AP uses greedy score-descending matching with 101-point
interpolated precision, averaged over IoU thresholds 0.50:0.05:0.95.
All functions are pure and safe to parallelize across images / classes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .boxes import OrientedBox

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
DEGENERATE_AREA = 1e-12


def _signed_area(pts) -> float:
    acc = 0.0
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return acc / 2.0


def _clip_halfplane(poly, a, b):
    """Keep the part of a convex polygon left of the directed edge a->b."""
    out = []
    n = len(poly)
    if n == 0:
        return out
    ex, ey = b[0] - a[0], b[1] - a[1]

    def side(p):
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        sp, sq = side(p), side(q)
        if sp >= 0:
            out.append(p)
            if sq < 0:
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
        elif sq >= 0:
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def convex_intersection_area(pa: np.ndarray, pb: np.ndarray) -> float:
    """Area of the intersection of two convex polygons (vertex arrays)."""
    poly = [tuple(p) for p in pa]
    clipper = [tuple(p) for p in pb]
    # The half-plane test needs a mathematically counter-clockwise clipper.
    if _signed_area(clipper) < 0:
        clipper = clipper[::-1]
    for i in range(len(clipper)):
        poly = _clip_halfplane(poly, clipper[i], clipper[(i + 1) % len(clipper)])
        if not poly:
            return 0.0
    return abs(_signed_area(poly))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    if a.area < DEGENERATE_AREA or b.area < DEGENERATE_AREA:
        warnings.warn("degenerate box in rotated_iou; returning 0", stacklevel=2)
        return 0.0
    inter = convex_intersection_area(a.corners(), b.corners())
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# Matching and AP
# ---------------------------------------------------------------------------


def _greedy_tp_flags(entries, iou_by_img, gt_sizes, thresh):
    """Greedy matcher shared by all thresholds.

    ``entries`` is score-descending (score, img, det index); each GT is used
    at most once; a detection matches the unused GT of its image with the
    highest IoU, provided that IoU >= thresh. Returns a 0/1 tp array in
    entry order.
    """
    used = {img: np.zeros(n, dtype=bool) for img, n in gt_sizes.items()}
    tp = np.zeros(len(entries))
    for rank, (_, img, di) in enumerate(entries):
        ious = iou_by_img[img]
        best_iou, best_j = -1.0, -1
        for j in range(ious.shape[1]):
            if used[img][j]:
                continue
            if ious[di, j] > best_iou:
                best_iou, best_j = ious[di, j], j
        if best_j >= 0 and best_iou >= thresh:
            used[img][best_j] = True
            tp[rank] = 1.0
    return tp


def interpolated_ap(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """101-point interpolated average precision."""
    if recalls.size == 0:
        return 0.0
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = recalls >= r - 1e-12
        ap += precisions[mask].max() if mask.any() else 0.0
    return float(ap / 101.0)


def match_and_ap(dets: list[OrientedBox], gts: list[OrientedBox],
                 iou_thresh: float, return_pr: bool = False):
    """AP for one image's detections against its ground truth.

    Detections must carry scores; equal scores are broken by list index for
    determinism.
    """
    for d in dets:
        if d.score is None:
            raise ValueError("match_and_ap needs scored detections")
    if not gts:
        return (0.0, []) if return_pr else 0.0
    entries = sorted(((d.score, "img", i) for i, d in enumerate(dets)),
                     key=lambda e: (-e[0], e[2]))
    iou = np.array([[rotated_iou(d, g) for g in gts] for d in dets]) if dets \
        else np.zeros((0, len(gts)))
    tp = _greedy_tp_flags(entries, {"img": iou}, {"img": len(gts)}, iou_thresh)
    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, tp.size + 1)
    recalls = cum_tp / len(gts)
    precisions = cum_tp / ranks if tp.size else np.zeros(0)
    ap = interpolated_ap(recalls, precisions)
    if return_pr:
        return ap, list(zip(recalls.tolist(), precisions.tolist()))
    return ap


@dataclass
class ClassEval:
    ap_by_threshold: dict[float, float]
    pr_curve_50: list[tuple[float, float]]  # (recall, precision) at IoU 0.5
    num_gt: int
    num_det: int

    @property
    def ap50(self) -> float:
        return self.ap_by_threshold[0.5]

    @property
    def ap75(self) -> float:
        return self.ap_by_threshold[0.75]

    @property
    def ap(self) -> float:
        return float(np.mean([self.ap_by_threshold[t] for t in IOU_THRESHOLDS]))


@dataclass
class EvalResult:
    per_class: dict[str, ClassEval]
    map50: float
    map75: float
    map: float

    def as_dict(self) -> dict:
        return {
            "mAP50": self.map50,
            "mAP75": self.map75,
            "mAP": self.map,
            "classes": {
                name: {
                    "AP50": ce.ap50,
                    "AP75": ce.ap75,
                    "AP": ce.ap,
                    "num_gt": ce.num_gt,
                    "num_det": ce.num_det,
                }
                for name, ce in sorted(self.per_class.items())
            },
        }


def evaluate(dets_by_image: dict[str, list[OrientedBox]],
             gts_by_image: dict[str, list[OrientedBox]],
             class_names: list[str]) -> EvalResult:
    """COCO-style evaluation over a whole dataset.

    Matching is per image and per class. Detections with classes outside
    the vocabulary are rejected. Classes with no ground-truth instances
    anywhere are excluded from the means; classes with ground truth but no
    detections score 0.
    """
    num_classes = len(class_names)
    for img, dets in dets_by_image.items():
        for d in dets:
            if d.class_id < 0 or d.class_id >= num_classes:
                raise ValueError(
                    f"detection class {d.class_id} in image {img!r} is outside the "
                    f"{num_classes}-class vocabulary"
                )
            if d.score is None:
                raise ValueError(f"detection without score in image {img!r}")

    images = sorted(set(gts_by_image) | set(dets_by_image))
    per_class: dict[str, ClassEval] = {}
    for cid, cname in enumerate(class_names):
        gt_lists = {img: [g for g in gts_by_image.get(img, []) if g.class_id == cid]
                    for img in images}
        det_lists = {img: [d for d in dets_by_image.get(img, []) if d.class_id == cid]
                     for img in images}
        gt_count = sum(len(v) for v in gt_lists.values())
        if gt_count == 0:
            continue  # class never annotated: excluded from the means
        num_det = sum(len(v) for v in det_lists.values())
        entries = sorted(
            ((d.score, img, di) for img in images for di, d in enumerate(det_lists[img])),
            key=lambda e: (-e[0], e[1], e[2]),
        )
        iou_by_img = {
            img: np.array([[rotated_iou(d, g) for g in gt_lists[img]]
                           for d in det_lists[img]])
            if det_lists[img] and gt_lists[img]
            else np.zeros((len(det_lists[img]), len(gt_lists[img])))
            for img in images
        }
        gt_sizes = {img: len(gt_lists[img]) for img in images}
        ap_by_t = {}
        pr50: list[tuple[float, float]] = []
        for t in IOU_THRESHOLDS:
            tp = _greedy_tp_flags(entries, iou_by_img, gt_sizes, t)
            cum_tp = np.cumsum(tp)
            ranks = np.arange(1, tp.size + 1)
            recalls = cum_tp / gt_count
            precisions = cum_tp / ranks if tp.size else np.zeros(0)
            ap_by_t[t] = interpolated_ap(recalls, precisions)
            if t == 0.5:
                pr50 = list(zip(recalls.tolist(), precisions.tolist()))
        per_class[cname] = ClassEval(ap_by_t, pr50, gt_count, num_det)

    if per_class:
        map50 = float(np.mean([c.ap50 for c in per_class.values()]))
        map75 = float(np.mean([c.ap75 for c in per_class.values()]))
        mean_ap = float(np.mean([c.ap for c in per_class.values()]))
    else:
        map50 = map75 = mean_ap = 0.0
    return EvalResult(per_class, map50, map75, mean_ap)
