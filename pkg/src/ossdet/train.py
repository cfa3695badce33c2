"""Deterministic single-threaded training loop with checkpoints and a
per-iteration loss log.

The loop is reproducible to the bit for a fixed (config, dataset, seed):
batches come from a seeded permutation stream, logging uses repr floats,
and checkpoints serialize parameters in creation order.
"""

from __future__ import annotations

import os

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import RunConfig, to_kv_text
from .model import ModelConfig, OSSDet
from .msi import Dataset, DataError, rgb_band_indices, write_raster
from .optim import SGD, save_checkpoint


class TrainingAborted(RuntimeError):
    """Raised when the loss stops being finite; diagnostics are on disk."""


def band_selection(dataset: Dataset, bands_mode: str) -> list[int]:
    if bands_mode == "msi8":
        return list(range(dataset.bands))
    if bands_mode == "rgb3":
        return list(rgb_band_indices(dataset.band_centers))
    raise DataError(f"unknown bands mode {bands_mode!r}")


def build_model(cfg: RunConfig, dataset: Dataset) -> OSSDet:
    bands = len(band_selection(dataset, cfg.bands_mode))
    return OSSDet(ModelConfig(
        bands=bands,
        channels=cfg.channels,
        num_classes=len(dataset.class_names),
        image_size=dataset.image_size,
        sacf_k=cfg.sacf_k,
        cssp_fusion=cfg.cssp_fusion,
        cafr_softmax=cfg.cafr_softmax,
        gamma=cfg.gamma,
        alpha=cfg.alpha,
        score_thresh=cfg.score_thresh,
        nms_iou=cfg.nms_iou,
        init_seed=cfg.seed,
    ))


def make_batch(dataset: Dataset, scene_ids: list[str], band_idx: list[int]):
    cubes = np.stack([dataset.cubes[sid].bands[band_idx].astype(np.float64)
                      for sid in scene_ids])
    boxes = [dataset.annotations[sid].boxes for sid in scene_ids]
    return Tensor(cubes), boxes


class Trainer:
    def __init__(self, cfg: RunConfig, dataset: Dataset, train_ids: list[str]):
        if not train_ids:
            raise DataError("training split is empty")
        cfg.validate()
        self.cfg = cfg
        self.dataset = dataset
        self.train_ids = list(train_ids)
        self.band_idx = band_selection(dataset, cfg.bands_mode)
        self.model = build_model(cfg, dataset)
        self.optimizer = SGD(self.model.store.params(), lr=cfg.lr,
                             momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                             clip_norm=cfg.clip_norm)
        self._rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xBA7C)))
        self._order: list[str] = []

    def _next_batch_ids(self) -> list[str]:
        ids = []
        while len(ids) < self.cfg.batch_size:
            if not self._order:
                perm = self._rng.permutation(len(self.train_ids))
                self._order = [self.train_ids[i] for i in perm]
            ids.append(self._order.pop(0))
        return ids

    def run(self) -> str:
        cfg = self.cfg
        os.makedirs(cfg.out, exist_ok=True)
        ckpt_dir = os.path.join(cfg.out, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)
        config_text = to_kv_text(cfg)
        log_path = os.path.join(cfg.out, "train_log.txt")
        init_path = os.path.join(ckpt_dir, "ckpt_0000000.ossck")
        save_checkpoint(init_path, self.model.store, self.optimizer, 0, config_text)
        final_path = init_path
        with open(log_path, "w", encoding="utf-8", newline="\n") as log:
            for it in range(1, cfg.iterations + 1):
                batch_ids = self._next_batch_ids()
                x, boxes = make_batch(self.dataset, batch_ids, self.band_idx)
                self.optimizer.zero_grad()
                losses = self.model.loss(x, boxes)
                values = {k: losses[k].item() for k in
                          ("loss", "det", "cls", "reg", "act", "act_i", "act_d")}
                if not all(np.isfinite(v) for v in values.values()):
                    self._dump_nan_diagnostics(it, batch_ids, values)
                    raise TrainingAborted(
                        f"non-finite loss at iteration {it}; diagnostics in {cfg.out}"
                    )
                ad.backward(losses["loss"])
                self.optimizer.step()
                log.write(
                    f"iter={it} L_det={values['det']!r} L_I={values['act_i']!r} "
                    f"L_D={values['act_d']!r} L_act={values['act']!r} "
                    f"L={values['loss']!r} num_pos={int(losses['num_pos'])}\n"
                )
                if cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
                    final_path = os.path.join(ckpt_dir, f"ckpt_{it:07d}.ossck")
                    save_checkpoint(final_path, self.model.store, self.optimizer,
                                    it, config_text)
            if cfg.iterations > 0 and (cfg.checkpoint_every <= 0
                                       or cfg.iterations % cfg.checkpoint_every):
                final_path = os.path.join(ckpt_dir, f"ckpt_{cfg.iterations:07d}.ossck")
                save_checkpoint(final_path, self.model.store, self.optimizer,
                                cfg.iterations, config_text)
        return final_path

    def _dump_nan_diagnostics(self, iteration: int, batch_ids: list[str],
                              values: dict[str, float]) -> None:
        dump_dir = os.path.join(self.cfg.out, "nan_dump")
        os.makedirs(dump_dir, exist_ok=True)
        with open(os.path.join(dump_dir, "report.txt"), "w", encoding="utf-8") as f:
            f.write(f"iteration={iteration}\n")
            f.write(f"batch={','.join(batch_ids)}\n")
            for k, v in values.items():
                f.write(f"{k}={v!r}\n")
            for p in self.model.store.params():
                absmax = float(np.abs(p.data).max()) if p.data.size else 0.0
                f.write(f"param {p.name} absmax={absmax!r}\n")
        for sid in batch_ids:
            write_raster(os.path.join(dump_dir, sid + ".msic"),
                         self.dataset.cubes[sid].bands)
