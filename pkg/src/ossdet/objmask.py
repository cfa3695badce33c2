"""Object-aware masking: predicted activation mask, activation loss, and
feature masking.

The loss has an intersection term (push activation up on ground-truth
support) and a difference term (push it down on strict background):

    L_I = 1 - sum(M_p * M_g) / max(sum(M_g), eps)
    L_D = sum(M_p * (1 - H(M_g))) / max(sum(M_p), eps)
    L_act = L_I + gamma * L_D

with H(x) = 1 for x > 0. Denominators are clamped (not shifted) by eps so
the exact fixtures hold: a perfect binary mask scores exactly zero. Items
with empty ground truth skip L_I entirely; there is nothing to activate.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, ShapeError, Tensor
from .layers import Conv


class MaskHead:
    """Two 3x3 convs (C -> C with relu, then C -> 1) under a sigmoid."""

    def __init__(self, store: ParamStore, channels: int, name: str = "objmask"):
        self.conv1 = Conv(store, f"{name}/conv1", channels, channels, 3)
        self.conv2 = Conv(store, f"{name}/conv2", channels, 1, 3, gain=1.0)

    def __call__(self, feat: Tensor) -> Tensor:
        return ad.sigmoid(self.conv2(ad.relu(self.conv1(feat))))


def apply_mask(feat: Tensor, mask: Tensor) -> Tensor:
    if mask.shape[1] != 1 or mask.shape[0] != feat.shape[0] \
            or mask.shape[2:] != feat.shape[2:]:
        raise ShapeError(f"mask {mask.shape} does not broadcast over {feat.shape}")
    return ad.mul(feat, mask)


def _clamped(x: Tensor, eps: float) -> Tensor:
    # max(x, eps) built from relu; differentiable away from the clamp point.
    return ad.affine(ad.relu(ad.affine(x, 1.0, -eps)), 1.0, eps)


def activation_loss(m_p: Tensor, m_g: np.ndarray, gamma: float = 0.1,
                    eps: float = 1e-8) -> tuple[Tensor, Tensor, Tensor]:
    """Per-item losses averaged over the batch; returns (L_I, L_D, L_act)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    m_g = np.asarray(m_g, dtype=np.float64)
    if m_g.shape != m_p.shape:
        raise ShapeError(f"mask shapes disagree: {m_p.shape} vs {m_g.shape}")
    n = m_p.shape[0]
    gt = Tensor(m_g)
    heav = (m_g > 0).astype(np.float64)
    bg = Tensor(1.0 - heav)

    gt_sums = m_g.sum(axis=(1, 2, 3))
    has_gt = (gt_sums > 0).astype(np.float64).reshape(n, 1, 1, 1)
    n_with_gt = max(1.0, float(has_gt.sum()))

    inter = ad.reduce_sum(ad.mul(m_p, gt), axes=(1, 2, 3))
    gt_denom = Tensor(np.maximum(gt_sums, eps).reshape(n, 1, 1, 1))
    l_i_items = ad.affine(ad.div(inter, gt_denom), -1.0, 1.0)
    l_i = ad.affine(ad.reduce_sum(ad.mul(l_i_items, Tensor(has_gt))),
                    1.0 / n_with_gt, 0.0)

    act_sum = ad.reduce_sum(m_p, axes=(1, 2, 3))
    bg_sum = ad.reduce_sum(ad.mul(m_p, bg), axes=(1, 2, 3))
    l_d_items = ad.div(bg_sum, _clamped(act_sum, eps))
    l_d = ad.affine(ad.reduce_sum(l_d_items), 1.0 / n, 0.0)

    l_act = ad.add(l_i, ad.affine(l_d, gamma, 0.0))
    return l_i, l_d, l_act


def save_mask_pgm(path: str, mask: np.ndarray) -> None:
    """Debug dump of a [0,1] mask as an 8-bit binary PGM (P5)."""
    arr = np.asarray(mask, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"PGM dump needs a 2-D mask, got {arr.shape}")
    quant = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    h, w = quant.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(quant.tobytes())
