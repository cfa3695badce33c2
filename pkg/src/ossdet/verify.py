"""Built-in invariant suite behind the `verify` CLI command.

Each check is small and self-contained: gradient checks per operator
family, the exact decomposition identity, aggregation weight normalization,
activation-loss fixtures, and rotated-IoU fixtures. Returns structured
results so the CLI can print one line per invariant and exit nonzero on
any failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor, grad_check
from .boxes import OrientedBox
from .cafr import CAFR
from .cssp import CSSP
from .evaluation import match_and_ap, rotated_iou
from .head import decode_box, encode_box, rotated_nms
from .msi import GenConfig, gaussian_at, generate_scene, rasterize_gt_mask
from .objmask import activation_loss
from .sacf import SACF, sde_decompose, sfa_aggregate


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str = ""


def _fd(module, name, closure, shapes, rng, tol=1e-4):
    inputs = [rng.normal(size=s) for s in shapes]
    report = grad_check(closure, inputs, tol=tol)
    return CheckResult(module, name, report.passed,
                       f"max_rel_err={report.max_rel_err:.3e}")


def _tensor_core_checks(rng) -> list[CheckResult]:
    out = []
    out.append(_fd("tensor-core", "conv2d gradient",
                   lambda x, k, b: ad.reduce_sum(ad.tanh(ad.conv2d(x, k, b, 1, 1))),
                   [(1, 2, 4, 4), (2, 2, 3, 3), (1, 2, 1, 1)], rng))
    out.append(_fd("tensor-core", "pool gradients",
                   lambda x: ad.reduce_sum(ad.mul(ad.pool(x, "gap"),
                                                  ad.pool(x, "gap"))),
                   [(1, 3, 4, 4)], rng))
    def softmax_matmul(a, b):
        s = ad.softmax(ad.matmul(a, b), 3)
        return ad.reduce_sum(ad.mul(s, s))

    out.append(_fd("tensor-core", "softmax/matmul gradient", softmax_matmul,
                   [(1, 1, 3, 4), (1, 1, 4, 3)], rng))
    x = Tensor(rng.normal(size=(1, 4, 3, 5)) * 5)
    sums = ad.softmax(x, 3).data.sum(axis=3)
    out.append(CheckResult("tensor-core", "softmax rows sum to 1",
                           bool(np.all(np.abs(sums - 1) <= 1e-12))))
    v = ad.sigmoid(Tensor(rng.uniform(-20, 20, (1, 2, 4, 4)))).data
    t = ad.tanh(Tensor(rng.uniform(-10, 10, (1, 2, 4, 4)))).data
    out.append(CheckResult("tensor-core", "sigmoid/tanh open ranges",
                           bool(np.all((v > 0) & (v < 1)) and np.all((t > -1) & (t < 1)))))
    data = rng.normal(size=(1, 2, 3, 3))
    k = rng.normal(size=(2, 2, 3, 3))
    r1 = ad.conv2d(ad.sigmoid(Tensor(data)), Tensor(k), None, 1, 1).data
    r2 = ad.conv2d(ad.sigmoid(Tensor(data)), Tensor(k), None, 1, 1).data
    out.append(CheckResult("tensor-core", "forward bit-reproducible",
                           bool(np.array_equal(r1, r2))))
    return out


def _cssp_checks(rng) -> list[CheckResult]:
    out = []
    store = ParamStore(np.random.default_rng(0))
    cssp = CSSP(store, 2, 2, 2)
    f5 = Tensor(rng.normal(size=(1, 2, 2, 2)))
    pre = ad.matmul(ad.transpose_hw(ad.reshape(f5, (1, 1, 2, 4))),
                    ad.reshape(f5, (1, 1, 2, 4)))
    m = cssp._normalized_tanh(pre)
    out.append(CheckResult("cssp", "correlation entries in (-1,1)",
                           bool(np.all(np.abs(m.data) < 1))))
    half = Tensor(np.full((1, 2, 2, 2), 0.0))
    gated = cssp.spectral_attention(Tensor(np.zeros((1, 2, 2, 2))))
    out.append(CheckResult("cssp", "zero input gives zero spectral gate output",
                           bool(np.all(gated.data == 0))))

    def closure(x):
        st = ParamStore(np.random.default_rng(1))
        block = CSSP(st, 2, 2, 2)
        return ad.reduce_sum(ad.tanh(block(x)))

    out.append(_fd("cssp", "full block gradient", closure, [(1, 2, 2, 2)], rng))
    return out


def _sacf_checks(rng) -> list[CheckResult]:
    out = []
    x = Tensor(rng.normal(size=(1, 3, 4, 4)))
    lf, hf = sde_decompose(x)
    recon = ad.add(ad.upsample2x(lf), hf)
    err = float(np.abs(recon.data - x.data).max())
    out.append(CheckResult("sacf", "frequency split reconstructs exactly",
                           err <= 1e-14, f"max_err={err:.2e}"))

    store = ParamStore(np.random.default_rng(0))
    sde_zero = SACF(store, 3, zero_init=True).sde
    y = sde_zero(x)
    out.append(CheckResult("sacf", "zero-init detail enhancer is identity",
                           bool(np.array_equal(y.data, x.data))))

    const = Tensor(np.full((1, 2, 4, 4), 1.7))
    agg = sfa_aggregate(const, 3)
    out.append(CheckResult("sacf", "aggregation doubles constant maps exactly",
                           bool(np.array_equal(agg.data, 2 * const.data))))

    xr = Tensor(rng.normal(size=(1, 2, 4, 4)))
    offsets = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
    dists = []
    for dy, dx in offsets:
        if (dy, dx) == (0, 0):
            dists.append(Tensor.zeros((1, 1, 4, 4)))
        else:
            dists.append(ad.l2_norm(ad.sub(xr, ad.shift2d(xr, dy, dx)), axes=(1,)))
    w = ad.softmax(ad.affine(ad.concat_channels(dists), -1.0, 0.0), axis=1)
    sums = w.data.sum(axis=1)
    out.append(CheckResult("sacf", "similarity weights sum to 1 per pixel",
                           bool(np.all(np.abs(sums - 1) <= 1e-12))))

    def closure(a, b):
        st = ParamStore(np.random.default_rng(2))
        unit = SACF(st, 2, k=3)
        return ad.reduce_sum(ad.tanh(unit(a, b)))

    out.append(_fd("sacf", "full unit gradient", closure,
                   [(1, 2, 2, 2), (1, 2, 4, 4)], rng))
    return out


def _objmask_checks(rng) -> list[CheckResult]:
    out = []
    gt = rasterize_gt_mask([OrientedBox(18.0, 18.0, 12.0, 6.0, 0.0)], 8, 8, 4)[None, None]
    perfect = (gt > 0).astype(float)
    l_i, l_d, l_act = activation_loss(Tensor(perfect), gt)
    out.append(CheckResult("object-mask", "perfect binary mask scores zero",
                           l_act.item() == 0.0, f"L_act={l_act.item()!r}"))
    ones = np.ones_like(gt)
    l_i, l_d, _ = activation_loss(Tensor(ones), gt)
    bg_frac = float((gt == 0).sum()) / gt.size
    out.append(CheckResult(
        "object-mask", "all-ones mask: exact background fraction",
        l_i.item() == 0.0 and l_d.item() == bg_frac,
        f"L_I={l_i.item()!r} L_D={l_d.item()!r}"))
    zeros = np.zeros_like(gt)
    l_i, l_d, l_act = activation_loss(Tensor(zeros), gt)
    out.append(CheckResult("object-mask", "all-zeros mask: L_I=1, L_D=0",
                           l_i.item() == 1.0 and l_d.item() == 0.0))

    mp = rng.uniform(0.01, 0.99, size=gt.shape)
    l_i, l_d, _ = activation_loss(Tensor(mp), gt)
    out.append(CheckResult("object-mask", "loss terms bounded in [0,1]",
                           0 <= l_i.item() <= 1 and 0 <= l_d.item() <= 1))

    def closure(m):
        _, _, la = activation_loss(ad.sigmoid(m), gt)
        return la

    out.append(_fd("object-mask", "activation loss gradient", closure,
                   [gt.shape], rng))
    return out


def _cafr_checks(rng) -> list[CheckResult]:
    out = []
    store = ParamStore(np.random.default_rng(0))
    unit = CAFR(store, 3)
    v_hi = Tensor(rng.normal(size=(1, 3, 1, 1)))
    v_lo = Tensor(rng.normal(size=(1, 3, 1, 1)))
    attn, w_hi, w_lo = unit.gates(v_hi, v_lo)
    rows = attn.data.sum(axis=3)
    out.append(CheckResult("cafr", "attention rows sum to 1",
                           bool(np.all(np.abs(rows - 1) <= 1e-12))))
    out.append(CheckResult("cafr", "attention entries in (0,1)",
                           bool(np.all((attn.data > 0) & (attn.data < 1)))))
    store1 = ParamStore(np.random.default_rng(1))
    unit1 = CAFR(store1, 1)
    s_hi = Tensor(np.full((1, 1, 1, 1), 0.7))
    s_lo = Tensor(np.full((1, 1, 1, 1), -0.3))
    _, g_hi, g_lo = unit1.gates(s_hi, s_lo)
    out.append(CheckResult("cafr", "C=1 reduces to plain products",
                           g_hi.item() == 0.7 and g_lo.item() == -0.3))

    def closure(a, b):
        st = ParamStore(np.random.default_rng(3))
        u = CAFR(st, 2)
        return ad.reduce_sum(ad.tanh(u(a, b)))

    out.append(_fd("cafr", "full block gradient", closure,
                   [(1, 2, 2, 2), (1, 2, 4, 4)], rng))
    return out


def _head_checks(rng) -> list[CheckResult]:
    out = []
    ok = True
    worst = 0.0
    for _ in range(50):
        box = OrientedBox(rng.uniform(20, 200), rng.uniform(20, 200),
                          rng.uniform(6, 40), rng.uniform(3, 20),
                          rng.uniform(-math.pi / 2, math.pi / 2)).canonical()
        code = encode_box(box, 100.0, 100.0, 8.0)
        dec = decode_box(code, 100.0, 100.0, 8.0)
        err = max(abs(dec.cx - box.cx), abs(dec.cy - box.cy), abs(dec.w - box.w),
                  abs(dec.h - box.h), abs(dec.theta - box.theta))
        worst = max(worst, err)
        ok = ok and err <= 1e-9
    out.append(CheckResult("detect-head", "decode(encode(box)) within 1e-9",
                           ok, f"max_err={worst:.2e}"))
    a = OrientedBox(10, 10, 8, 4, 0.2, 0, 0.9)
    b = OrientedBox(10, 10, 8, 4, 0.2, 0, 0.8)
    keep = rotated_nms([a, b], 0.5)
    out.append(CheckResult("detect-head", "duplicate suppression keeps one",
                           len(keep) == 1 and keep[0].score == 0.9))
    return out


def _eval_checks(rng) -> list[CheckResult]:
    out = []
    box = OrientedBox(10, 10, 8, 4, 0.3)
    out.append(CheckResult("eval-oriented", "identical boxes give IoU 1",
                           abs(rotated_iou(box, box) - 1.0) <= 1e-12))
    sq = OrientedBox(0, 0, 1, 1, 0.0)
    rot = OrientedBox(0, 0, 1, 1, math.pi / 4)
    expected = 2 * (math.sqrt(2) - 1) / (2 - 2 * (math.sqrt(2) - 1))
    got = rotated_iou(sq, rot)
    out.append(CheckResult("eval-oriented", "45-degree octagon fixture",
                           abs(got - expected) <= 1e-6, f"iou={got:.6f}"))
    vals = []
    for _ in range(50):
        a = OrientedBox(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(2, 20),
                        rng.uniform(1, 10), rng.uniform(-1.5, 1.5)).canonical()
        b = OrientedBox(rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(2, 20),
                        rng.uniform(1, 10), rng.uniform(-1.5, 1.5)).canonical()
        vals.append(abs(rotated_iou(a, b) - rotated_iou(b, a)))
    out.append(CheckResult("eval-oriented", "IoU symmetric within 1e-12",
                           max(vals) <= 1e-12))
    gts = [OrientedBox(10, 10, 8, 4, 0.0), OrientedBox(30, 30, 8, 4, 0.0)]
    dets = [OrientedBox(g.cx, g.cy, g.w, g.h, g.theta, 0, 0.9) for g in gts]
    out.append(CheckResult("eval-oriented", "perfect detections give AP 1",
                           match_and_ap(dets, gts, 0.5) == 1.0))
    return out


def _msi_checks(rng) -> list[CheckResult]:
    out = []
    cfg = GenConfig(instances_min=1, instances_max=4, image_size=64)
    a = generate_scene(cfg, 11)
    b = generate_scene(cfg, 11)
    out.append(CheckResult("msi-data", "generation deterministic",
                           a[0] == b[0] and a[1] == b[1]))
    box = OrientedBox(18.0, 18.0, 12.0, 6.0, 0.0)
    mask = rasterize_gt_mask([box], 16, 16, 4)
    out.append(CheckResult("msi-data", "mask peaks at 1 on the center cell",
                           mask[4, 4] == 1.0))
    sigma_val = float(gaussian_at(box, box.cx + box.w / 6, box.cy))
    out.append(CheckResult("msi-data", "one-sigma point is exp(-1/2)",
                           abs(sigma_val - math.exp(-0.5)) <= 1e-12))
    return out


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    results += _tensor_core_checks(rng)
    results += _cssp_checks(rng)
    results += _sacf_checks(rng)
    results += _objmask_checks(rng)
    results += _cafr_checks(rng)
    results += _head_checks(rng)
    results += _eval_checks(rng)
    results += _msi_checks(rng)
    return results
