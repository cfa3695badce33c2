"""Anchor-free oriented detection head and training objective.

Each pyramid cell predicts K class logits and a 6-channel box code
(dx, dy, log w, log h, sin 2theta, cos 2theta); the doubled angle respects
the rectangle's pi-periodicity so the regression target is continuous at
the angle boundary. A cell is positive when its center falls inside the
half-shrunk oriented box whose scale matches the cell's level; nested boxes
resolve to the smaller one, and a box that captures no cell falls back to
the cell under its center so every instance trains at least one location.

The classification term is a focal binary loss (gamma 2, balance 0.25)
summed over all locations and normalized by the positive count (floor 1);
regression is smooth-L1 over the 6 channels of positive cells with the
same normalization. The total objective is L_det + alpha * L_act.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .boxes import OrientedBox
from .evaluation import rotated_iou
from .layers import Conv

HEAD_STRIDES = (4, 8, 16, 32)
# sqrt(box area) ranges per level; level l takes [4*stride_l, 4*stride_{l+1}).
SCALE_RANGES = ((0.0, 16.0), (16.0, 32.0), (32.0, 64.0), (64.0, float("inf")))
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
REG_CHANNELS = 6
CENTER_SHRINK = 0.5
PRIOR_PROB = 0.01


@dataclass
class HeadConfig:
    num_classes: int
    channels: int = 32
    strides: tuple[int, ...] = HEAD_STRIDES
    score_thresh: float = 0.05
    nms_iou: float = 0.5
    max_dets: int = 300


def encode_box(box: OrientedBox, cell_cx: float, cell_cy: float, stride: float) -> np.ndarray:
    return np.array([
        (box.cx - cell_cx) / stride,
        (box.cy - cell_cy) / stride,
        math.log(box.w / stride),
        math.log(box.h / stride),
        math.sin(2.0 * box.theta),
        math.cos(2.0 * box.theta),
    ])


LOG_SIZE_CLAMP = 12.0  # guards exp() against untrained or diverged outputs


def decode_box(code: np.ndarray, cell_cx: float, cell_cy: float, stride: float,
               class_id: int = 0, score: float | None = None) -> OrientedBox:
    dx, dy, lw, lh, s2, c2 = (float(v) for v in code)
    lw = min(max(lw, -LOG_SIZE_CLAMP), LOG_SIZE_CLAMP)
    lh = min(max(lh, -LOG_SIZE_CLAMP), LOG_SIZE_CLAMP)
    theta = 0.5 * math.atan2(s2, c2)
    return OrientedBox(cell_cx + dx * stride, cell_cy + dy * stride,
                       math.exp(lw) * stride, math.exp(lh) * stride,
                       theta, class_id, score).canonical()


@dataclass
class LevelTargets:
    cls: np.ndarray  # (K, H, W) in {0, 1}
    reg: np.ndarray  # (6, H, W)
    pos: np.ndarray  # (1, H, W) in {0, 1}


def assign_targets(boxes: list[OrientedBox], image_size: int, num_classes: int,
                   strides=HEAD_STRIDES) -> list[LevelTargets]:
    """Per-level dense targets for one image."""
    levels = []
    grids = [(image_size // s, image_size // s) for s in strides]
    for (gh, gw), stride, (lo, hi) in zip(grids, strides, SCALE_RANGES):
        cls = np.zeros((num_classes, gh, gw))
        reg = np.zeros((REG_CHANNELS, gh, gw))
        pos = np.zeros((1, gh, gw))
        owner_area = np.full((gh, gw), np.inf)
        level_boxes = [b for b in boxes if lo <= math.sqrt(b.area) < hi]
        for box in level_boxes:
            cxs = (np.arange(gw) + 0.5) * stride
            cys = (np.arange(gh) + 0.5) * stride
            c, s = math.cos(box.theta), math.sin(box.theta)
            dx = cxs[None, :] - box.cx
            dy = cys[:, None] - box.cy
            u = c * dx + s * dy
            v = -s * dx + c * dy
            inside = ((np.abs(u) <= CENTER_SHRINK * box.w / 2.0)
                      & (np.abs(v) <= CENTER_SHRINK * box.h / 2.0))
            if not inside.any():
                # Fallback: the cell holding the box center, so no instance
                # is left without a training location.
                j = min(max(int(box.cx / stride), 0), gw - 1)
                i = min(max(int(box.cy / stride), 0), gh - 1)
                inside = np.zeros((gh, gw), dtype=bool)
                inside[i, j] = True
            claim = inside & (box.area < owner_area)
            if not claim.any():
                continue
            owner_area[claim] = box.area
            iy, ix = np.nonzero(claim)
            cls[:, iy, ix] = 0.0
            cls[box.class_id, iy, ix] = 1.0
            pos[0, iy, ix] = 1.0
            for i, j in zip(iy, ix):
                reg[:, i, j] = encode_box(box, (j + 0.5) * stride, (i + 0.5) * stride,
                                          stride)
        levels.append(LevelTargets(cls, reg, pos))
    return levels


class DetectionHead:
    """Shared tower (3x3 conv + relu) with 1x1 classification and
    regression branches applied to every pyramid level."""

    def __init__(self, store: ParamStore, config: HeadConfig, name: str = "head"):
        self.config = config
        self.tower = Conv(store, f"{name}/tower", config.channels, config.channels, 3)
        cls_bias = -math.log((1.0 - PRIOR_PROB) / PRIOR_PROB)
        self.cls = Conv(store, f"{name}/cls", config.channels, config.num_classes, 1,
                        gain=1.0, bias_init=cls_bias)
        self.reg = Conv(store, f"{name}/reg", config.channels, REG_CHANNELS, 1, gain=1.0)

    def __call__(self, levels: list[Tensor]) -> list[tuple[Tensor, Tensor]]:
        out = []
        for feat in levels:
            trunk = ad.relu(self.tower(feat))
            out.append((self.cls(trunk), self.reg(trunk)))
        return out


def detection_loss(head_out: list[tuple[Tensor, Tensor]],
                   targets_per_image: list[list[LevelTargets]]) -> dict[str, Tensor]:
    """Focal classification + smooth-L1 regression over all levels.

    ``targets_per_image`` is indexed [image][level]; the head output is
    batched per level.
    """
    num_levels = len(head_out)
    n = head_out[0][0].shape[0]
    num_pos = 0.0
    for img_targets in targets_per_image:
        for lt in img_targets:
            num_pos += float(lt.pos.sum())
    norm = max(1.0, num_pos)

    cls_terms = []
    reg_terms = []
    for lvl in range(num_levels):
        logits, reg_pred = head_out[lvl]
        t_cls = np.stack([targets_per_image[i][lvl].cls for i in range(n)])
        t_reg = np.stack([targets_per_image[i][lvl].reg for i in range(n)])
        t_pos = np.stack([targets_per_image[i][lvl].pos for i in range(n)])

        tt = Tensor(t_cls)
        tneg = Tensor(1.0 - t_cls)
        p = ad.sigmoid(logits)
        one_minus_p = ad.affine(p, -1.0, 1.0)
        pos_term = ad.mul(tt, ad.mul(ad.mul(one_minus_p, one_minus_p),
                                     ad.softplus(ad.affine(logits, -1.0, 0.0))))
        neg_term = ad.mul(tneg, ad.mul(ad.mul(p, p), ad.softplus(logits)))
        focal = ad.add(ad.affine(pos_term, FOCAL_ALPHA, 0.0),
                       ad.affine(neg_term, 1.0 - FOCAL_ALPHA, 0.0))
        cls_terms.append(ad.reduce_sum(focal))

        diff = ad.mul(ad.sub(reg_pred, Tensor(t_reg)), Tensor(t_pos))
        reg_terms.append(ad.reduce_sum(ad.smooth_l1(diff)))

    total_cls = cls_terms[0]
    for term in cls_terms[1:]:
        total_cls = ad.add(total_cls, term)
    total_reg = reg_terms[0]
    for term in reg_terms[1:]:
        total_reg = ad.add(total_reg, term)
    l_cls = ad.affine(total_cls, 1.0 / norm, 0.0)
    l_reg = ad.affine(total_reg, 1.0 / norm, 0.0)
    return {"cls": l_cls, "reg": l_reg, "det": ad.add(l_cls, l_reg),
            "num_pos": num_pos}


def total_loss(l_det: Tensor, l_act: Tensor, alpha: float) -> Tensor:
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return ad.add(l_det, ad.affine(l_act, alpha, 0.0))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def rotated_nms(boxes: list[OrientedBox], iou_thresh: float) -> list[OrientedBox]:
    """Greedy class-aware suppression, descending score (ties by index)."""
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    keep: list[OrientedBox] = []
    for i in order:
        cand = boxes[i]
        if all(k.class_id != cand.class_id or rotated_iou(cand, k) <= iou_thresh
               for k in keep):
            keep.append(cand)
    return keep


def decode_and_nms(head_out_arrays: list[tuple[np.ndarray, np.ndarray]],
                   config: HeadConfig, image_size: int) -> list[list[OrientedBox]]:
    """Decode per-image detections from raw head arrays (already sigmoided
    scores are computed here) and suppress duplicates."""
    if not (0.0 < config.score_thresh < 1.0) or not (0.0 < config.nms_iou < 1.0):
        raise ValueError("thresholds must lie in (0, 1)")
    n = head_out_arrays[0][0].shape[0]
    results = []
    for b in range(n):
        cands: list[OrientedBox] = []
        for (logits, reg), stride in zip(head_out_arrays, config.strides):
            probs = _stable_sigmoid(logits[b])
            best_cls = probs.argmax(axis=0)
            best_score = probs.max(axis=0)
            iy, ix = np.nonzero(best_score > config.score_thresh)
            for i, j in zip(iy, ix):
                code = reg[b, :, i, j]
                box = decode_box(code, (j + 0.5) * stride, (i + 0.5) * stride, stride,
                                 int(best_cls[i, j]), float(best_score[i, j]))
                if 0 <= box.cx <= image_size and 0 <= box.cy <= image_size:
                    cands.append(box)
        cands.sort(key=lambda bb: -bb.score)
        results.append(rotated_nms(cands[: config.max_dets], config.nms_iou))
    return results


def save_detections(path: str, dets: list[OrientedBox], class_names) -> None:
    """One detection per line: corner quad, class name, score."""
    lines = []
    for d in dets:
        coords = " ".join(f"{v:.2f}" for pt in d.corners() for v in pt)
        lines.append(f"{coords} {class_names[d.class_id]} {d.score:.6f}")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def load_detections(path: str, class_names) -> list[OrientedBox]:
    from .boxes import box_from_corners

    name_to_id = {n: i for i, n in enumerate(class_names)}
    dets = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            parts = raw.split()
            if not parts:
                continue
            quad = np.array([float(v) for v in parts[:8]]).reshape(4, 2)
            dets.append(box_from_corners(quad, name_to_id[parts[8]], float(parts[9])))
    return dets
