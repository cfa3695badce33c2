"""Full detector: backbone pyramid, top-level perception, top-down fusion,
object-aware masking, bottom-up refinement, and the detection head.

Data flow per forward pass (image size S, channels C):

    F1..F5          backbone, strides 2..32
    F5^             CSSP on F5
    F4^, F3^, F2^   SACF top-down: (F5^,F4) -> F4^, (F4^,F3) -> F3^, ...
    M_p             mask head on F2^;  F2- = F2^ * M_p
    F3-..F5-        CAFR bottom-up: (F3^,F2-) -> F3-, ...
    head            on [F2-, F3-, F4-, F5-] at strides 4..32
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .backbone import Backbone
from .boxes import OrientedBox
from .cafr import CAFR
from .cssp import CSSP
from .head import DetectionHead, HeadConfig, assign_targets, decode_and_nms, \
    detection_loss, total_loss
from .msi import rasterize_gt_mask
from .objmask import MaskHead, activation_loss, apply_mask
from .sacf import SACF

MASK_STRIDE = 4  # the mask branch lives on the stride-4 level


@dataclass(frozen=True)
class ModelConfig:
    bands: int = 8
    channels: int = 32
    num_classes: int = 6
    image_size: int = 256
    sacf_k: int = 3
    cssp_fusion: str = "conv"
    cafr_softmax: str = "row"
    gamma: float = 0.1
    alpha: float = 0.6
    score_thresh: float = 0.05
    nms_iou: float = 0.5
    init_seed: int = 0


class OSSDet:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.store = ParamStore(np.random.default_rng(config.init_seed))
        c = config.channels
        top = config.image_size // 32
        self.backbone = Backbone(self.store, config.bands, c)
        self.cssp = CSSP(self.store, c, top, top, fusion=config.cssp_fusion)
        self.sacf_units = [SACF(self.store, c, k=config.sacf_k, name=f"sacf{lvl}")
                           for lvl in (5, 4, 3)]
        self.mask_head = MaskHead(self.store, c)
        self.cafr_units = [CAFR(self.store, c, name=f"cafr{lvl}",
                                softmax_axis=config.cafr_softmax)
                           for lvl in (3, 4, 5)]
        self.head = DetectionHead(self.store, HeadConfig(
            num_classes=config.num_classes, channels=c,
            score_thresh=config.score_thresh, nms_iou=config.nms_iou))

    def forward(self, x: Tensor) -> dict:
        f1, f2, f3, f4, f5 = self.backbone(x)
        f5h = self.cssp(f5)
        f4h = self.sacf_units[0](f5h, f4)
        f3h = self.sacf_units[1](f4h, f3)
        f2h = self.sacf_units[2](f3h, f2)
        m_p = self.mask_head(f2h)
        f2b = apply_mask(f2h, m_p)
        f3b = self.cafr_units[0](f3h, f2b)
        f4b = self.cafr_units[1](f4h, f3b)
        f5b = self.cafr_units[2](f5h, f4b)
        refined = [f2b, f3b, f4b, f5b]
        return {"mask": m_p, "refined": refined, "head": self.head(refined)}

    def loss(self, x: Tensor, boxes_per_image: list[list[OrientedBox]]) -> dict:
        out = self.forward(x)
        cfg = self.config
        targets = [assign_targets(boxes, cfg.image_size, cfg.num_classes)
                   for boxes in boxes_per_image]
        det = detection_loss(out["head"], targets)

        grid = cfg.image_size // MASK_STRIDE
        m_g = np.stack([
            rasterize_gt_mask(boxes, grid, grid, MASK_STRIDE)[None]
            for boxes in boxes_per_image
        ])
        l_i, l_d, l_act = activation_loss(out["mask"], m_g, gamma=cfg.gamma)
        loss = total_loss(det["det"], l_act, cfg.alpha)
        return {
            "loss": loss, "det": det["det"], "cls": det["cls"], "reg": det["reg"],
            "act": l_act, "act_i": l_i, "act_d": l_d, "num_pos": det["num_pos"],
            "out": out,
        }

    def predict(self, x: Tensor) -> list[list[OrientedBox]]:
        out = self.forward(x)
        arrays = [(cls.data, reg.data) for cls, reg in out["head"]]
        return decode_and_nms(arrays, self.head.config, self.config.image_size)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.store.params())
