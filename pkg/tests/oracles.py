"""Independent scalar-loop reference implementations used as test oracles.

Everything here is written with plain Python loops (or tiny dense numpy
fragments structured differently from the library code) so values can be
cross-checked against the vectorized implementations without sharing code
paths.
"""

import math

import numpy as np


def conv2d_loop(x, kernel, bias, stride, pad):
    n, cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, cout, oh, ow))
    for b in range(n):
        for o in range(cout):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for c in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                y = i * stride + u - pad
                                xx = j * stride + v - pad
                                if 0 <= y < h and 0 <= xx < w:
                                    acc += x[b, c, y, xx] * kernel[o, c, u, v]
                    out[b, o, i, j] = acc + (bias[o] if bias is not None else 0.0)
    return out


def avg3x3s2_loop(x):
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    out = np.zeros((n, c, oh, ow))
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    acc, cnt = 0.0, 0
                    for u in range(3):
                        for v in range(3):
                            y = 2 * i + u - 1
                            xx = 2 * j + v - 1
                            if 0 <= y < h and 0 <= xx < w:
                                acc += x[b, ch, y, xx]
                                cnt += 1
                    out[b, ch, i, j] = acc / cnt
    return out


def spectral_attention_loop(f5, w_e, b_e):
    n, c, h, w = f5.shape
    out = np.zeros_like(f5)
    for b in range(n):
        for ch in range(c):
            m = f5[b, ch].mean()
            gate = 1.0 / (1.0 + math.exp(-(w_e[ch] * m + b_e[ch])))
            out[b, ch] = gate * f5[b, ch]
    return out


def spatial_attention_loop(f5, w_a, b_a):
    n, c, h, w = f5.shape
    out = np.zeros_like(f5)
    for b in range(n):
        for i in range(h):
            for j in range(w):
                m = f5[b, :, i, j].mean()
                gate = 1.0 / (1.0 + math.exp(-(w_a[i, j] * m + b_a[i, j])))
                out[b, :, i, j] = gate * f5[b, :, i, j]
    return out


def cross_modulate_loop(fe, fa, fuse_w, fuse_b, eps=1e-8):
    """Cascaded cross-correlation modulation on one batch item."""
    c, h, w = fe.shape
    hw = h * w
    fe2 = fe.reshape(c, hw)
    fa2 = fa.reshape(c, hw)
    m1 = fe2.T @ fa2
    m1 = np.tanh(m1 / (np.sqrt((m1 * m1).sum()) + eps))
    a_hat = fe2 @ m1 + fa2
    m2 = a_hat.T @ fe2
    m2 = np.tanh(m2 / (np.sqrt((m2 * m2).sum()) + eps))
    e_hat = a_hat @ m2 + fe2
    cat = np.concatenate([a_hat.reshape(c, h, w), e_hat.reshape(c, h, w)], axis=0)
    out = np.zeros((fuse_w.shape[0], h, w))
    for o in range(fuse_w.shape[0]):
        for i in range(h):
            for j in range(w):
                out[o, i, j] = (fuse_w[o, :, 0, 0] * cat[:, i, j]).sum() + fuse_b[o]
    return out


def sfa_loop(x, k):
    """Per-pixel similarity-softmax aggregation with replicate-edge clamping."""
    n, c, h, w = x.shape
    r = k // 2
    out = np.zeros_like(x)
    for b in range(n):
        for i in range(h):
            for j in range(w):
                center = x[b, :, i, j]
                neigh, dists = [], []
                for dm in range(-r, r + 1):
                    for dn in range(-r, r + 1):
                        y = min(max(i + dm, 0), h - 1)
                        xx = min(max(j + dn, 0), w - 1)
                        p = x[b, :, y, xx]
                        neigh.append(p)
                        dists.append(math.sqrt(((center - p) ** 2).sum()))
                es = [math.exp(-d) for d in dists]
                z = sum(es)
                agg = sum((e / z) * p for e, p in zip(es, neigh))
                out[b, :, i, j] = agg + center
    return out


def sde_decompose_loop(x):
    lf = avg3x3s2_loop(x)
    us = np.repeat(np.repeat(lf, 2, axis=2), 2, axis=3)
    return lf, x - us


def adaptive_fuse_loop(up_hi, lo, gate_w, gate_b):
    """Gate maps from channel means, 1x1 conv to 2 channels, sigmoid."""
    n, c, h, w = lo.shape
    out = np.zeros_like(lo)
    for b in range(n):
        for i in range(h):
            for j in range(w):
                m_hi = up_hi[b, :, i, j].mean()
                m_lo = lo[b, :, i, j].mean()
                z0 = gate_w[0, 0, 0, 0] * m_hi + gate_w[0, 1, 0, 0] * m_lo + gate_b[0]
                z1 = gate_w[1, 0, 0, 0] * m_hi + gate_w[1, 1, 0, 0] * m_lo + gate_b[1]
                w_hi = 1.0 / (1.0 + math.exp(-z0))
                w_lo = 1.0 / (1.0 + math.exp(-z1))
                out[b, :, i, j] = up_hi[b, :, i, j] * w_hi + lo[b, :, i, j] * w_lo
    return out


def cafr_gates_loop(v_hi, v_lo, column_softmax=False):
    """Channel gate vectors from the cross-attention of two C-vectors."""
    c = v_hi.shape[0]
    s = np.outer(v_hi, v_lo)
    a = np.zeros((c, c))
    if column_softmax:
        for j in range(c):
            e = np.exp(s[:, j] - s[:, j].max())
            a[:, j] = e / e.sum()
    else:
        for i in range(c):
            e = np.exp(s[i] - s[i].max())
            a[i] = e / e.sum()
    w_hi = a.T @ v_hi
    w_lo = a @ v_lo
    return a, w_hi, w_lo


def focal_bce_loop(logit, target, alpha=0.25, gamma=2.0):
    p = 1.0 / (1.0 + math.exp(-logit))
    if target > 0.5:
        return -alpha * (1.0 - p) ** gamma * math.log(p)
    return -(1.0 - alpha) * p ** gamma * math.log(1.0 - p)


def smooth_l1_scalar(d):
    a = abs(d)
    return 0.5 * d * d if a < 1.0 else a - 0.5
