"""Momentum SGD and deterministic checkpoint serialization.

The checkpoint format is a custom little-endian binary (param names,
f8 payloads, optimizer moments, iteration counter, config text) written in
parameter order, so save -> load -> save reproduces identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Param, ParamStore

CKPT_MAGIC = b"OSCK"
CKPT_VERSION = 1


class SGD:
    """Momentum SGD with weight decay and global-norm gradient clipping.

    Clipping is required for stability here: the gate-product structure of
    the refinement modules produces occasional gradient spikes that bare
    momentum SGD turns into divergence within a few steps.
    """

    def __init__(self, params: list[Param], lr: float = 0.01, momentum: float = 0.9,
                 weight_decay: float = 1e-4, clip_norm: float = 5.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.moments = {p.name: np.zeros_like(p.data) for p in params}

    def _clip(self) -> float:
        total = 0.0
        for p in self.params:
            if p.grad is not None:
                total += float((p.grad * p.grad).sum())
        total = total ** 0.5
        if self.clip_norm > 0 and total > self.clip_norm:
            scale = self.clip_norm / total
            for p in self.params:
                if p.grad is not None:
                    p.tensor.grad = p.grad * scale
        return total

    def step(self) -> float:
        grad_norm = self._clip()
        for p in self.params:
            g = p.grad
            if g is None:
                continue
            g = g + self.weight_decay * p.data
            v = self.moments[p.name]
            v *= self.momentum
            v += g
            p.tensor.data = p.data - self.lr * v
        return grad_norm

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.zero_grad()


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    moments: dict[str, np.ndarray]
    iteration: int
    config_text: str

    def config_hash(self) -> str:
        import hashlib

        return hashlib.sha256(self.config_text.encode("utf-8")).hexdigest()


def _write_named_arrays(f, arrays: dict[str, np.ndarray]) -> None:
    f.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        blob = name.encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        shape = arr.shape
        f.write(struct.pack("<I", len(shape)))
        for d in shape:
            f.write(struct.pack("<Q", d))
        f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_named_arrays(f) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", f.read(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", f.read(4))
        name = f.read(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<I", f.read(4))
        shape = tuple(struct.unpack("<Q", f.read(8))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(f.read(8 * size), dtype="<f8").reshape(shape).copy()
        out[name] = data
    return out


def save_checkpoint(path: str, store: ParamStore, optimizer: SGD | None,
                    iteration: int, config_text: str) -> None:
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<H", CKPT_VERSION))
        f.write(struct.pack("<Q", iteration))
        blob = config_text.encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        _write_named_arrays(f, {p.name: p.data for p in store.params()})
        moments = optimizer.moments if optimizer is not None else {}
        _write_named_arrays(f, moments)


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (magic {magic!r})")
        (version,) = struct.unpack("<H", f.read(2))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (iteration,) = struct.unpack("<Q", f.read(8))
        (clen,) = struct.unpack("<I", f.read(4))
        config_text = f.read(clen).decode("utf-8")
        params = _read_named_arrays(f)
        moments = _read_named_arrays(f)
    return Checkpoint(params, moments, iteration, config_text)


def restore_into(store: ParamStore, optimizer: SGD | None, ckpt: Checkpoint) -> None:
    for p in store.params():
        if p.name not in ckpt.params:
            raise ValueError(f"checkpoint is missing parameter {p.name!r}")
        saved = ckpt.params[p.name]
        if saved.shape != p.data.shape:
            raise ValueError(
                f"checkpoint parameter {p.name!r} has shape {saved.shape}, "
                f"model expects {p.data.shape}"
            )
        p.tensor.data = saved.copy()
    if optimizer is not None:
        for name in optimizer.moments:
            if name in ckpt.moments:
                optimizer.moments[name] = ckpt.moments[name].copy()
