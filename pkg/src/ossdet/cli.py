"""Command-line interface: gen, train, eval, stats, verify.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 verification failure.
OSSDET_THREADS caps worker threads for generation and evaluation; the
training loop itself is single-threaded for determinism.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


def _worker_threads() -> int:
    raw = os.environ.get("OSSDET_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_dataclass_flags(parser: argparse.ArgumentParser, cls) -> None:
    for f in dataclasses.fields(cls):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            parser.add_argument(flag, dest=f.name, action="store_true", default=None)
        else:
            target = {"int": int, "float": float, "str": str}.get(
                f.type if isinstance(f.type, str) else f.type.__name__, str)
            parser.add_argument(flag, dest=f.name, type=target, default=None)


def _config_from_args(args, cls):
    from .config import load_config

    cfg = load_config(args.config, cls) if args.config else cls()
    for f in dataclasses.fields(cls):
        value = getattr(args, f.name, None)
        if value is not None:
            cfg = dataclasses.replace(cfg, **{f.name: value})
    return cfg.validate()


def build_parser() -> _Parser:
    parser = _Parser(prog="ossdet",
                     description="Desk-scale multispectral oriented detection")
    sub = parser.add_subparsers(dest="command", required=True)

    from .config import GenCliConfig, RunConfig

    p_gen = sub.add_parser("gen", parents=[], help="generate a synthetic dataset")
    p_gen.add_argument("--config", default=None)
    _add_dataclass_flags(p_gen, GenCliConfig)

    p_train = sub.add_parser("train", help="train a detector")
    p_train.add_argument("--config", default=None)
    _add_dataclass_flags(p_train, RunConfig)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--split", default="test")
    p_eval.add_argument("--score-thresh", dest="score_thresh", type=float, default=None)

    p_stats = sub.add_parser("stats", help="dataset statistics report")
    p_stats.add_argument("--dataset", required=True)
    p_stats.add_argument("--out", required=True)

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    p_verify.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    from .config import ConfigError, GenCliConfig
    from .msi import DataError, GenConfig, GenerationError, generate_scene, write_dataset

    try:
        cfg = _config_from_args(args, GenCliConfig)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = cfg.out
    if not out:
        print("error: --out is required", file=sys.stderr)
        return EXIT_USAGE
    if os.path.isdir(out) and os.listdir(out) and not cfg.force:
        print(f"error: {out} is not empty (use --force to overwrite)", file=sys.stderr)
        return EXIT_USAGE

    gen_cfg = GenConfig(
        image_size=cfg.image_size, num_classes=cfg.num_classes,
        instances_min=cfg.instances_min, instances_max=cfg.instances_max,
        noise_sigma=cfg.noise_sigma, clutter_density=cfg.clutter_density,
        illumination=cfg.illumination, max_overlap_iou=cfg.max_overlap_iou,
        blur_sigma=cfg.blur_sigma,
    )
    import numpy as np

    seeds = [int(np.random.SeedSequence((cfg.seed, i)).generate_state(1)[0])
             for i in range(cfg.scenes)]
    try:
        with ThreadPoolExecutor(max_workers=_worker_threads()) as pool:
            scenes = list(pool.map(lambda s: generate_scene(gen_cfg, s), seeds))
    except (GenerationError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    ids = [cube.scene_id for cube, _ in scenes]
    n_train = int(round(cfg.scenes * cfg.split))
    splits = {"train": ids[:n_train], "test": ids[n_train:]}
    # Invocation-only fields stay out of the manifest so identical
    # (config, seed) pairs produce identical trees wherever they land.
    recorded = {k: v for k, v in dataclasses.asdict(cfg).items()
                if k not in ("out", "force")}
    write_dataset(out, scenes, class_names=gen_cfg.class_names, splits=splits,
                  image_size=cfg.image_size, extra={"gen_config": recorded})
    print(f"wrote {cfg.scenes} scenes to {out} "
          f"(train {len(splits['train'])} / test {len(splits['test'])})")
    return EXIT_OK


def cmd_train(args) -> int:
    from .config import ConfigError, RunConfig
    from .msi import DataError, read_dataset
    from .train import Trainer, TrainingAborted

    try:
        cfg = _config_from_args(args, RunConfig)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not cfg.dataset or not cfg.out:
        print("error: --dataset and --out are required", file=sys.stderr)
        return EXIT_USAGE
    try:
        dataset = read_dataset(cfg.dataset)
        train_ids = dataset.splits.get("train") or dataset.scene_ids()
        trainer = Trainer(cfg, dataset, train_ids)
        final = trainer.run()
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"trained {cfg.iterations} iterations; final checkpoint {final}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .config import RunConfig, from_kv_text
    from .evaluation import evaluate
    from .head import save_detections
    from .msi import DataError, read_dataset
    from .optim import load_checkpoint, restore_into
    from .train import band_selection, build_model, make_batch
    from . import svgplot

    try:
        ckpt = load_checkpoint(args.checkpoint)
        dataset = read_dataset(args.dataset)
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    cfg = from_kv_text(ckpt.config_text, RunConfig)
    if args.score_thresh is not None:
        cfg = dataclasses.replace(cfg, score_thresh=args.score_thresh)
    expected_bands = 8 if cfg.bands_mode == "msi8" else 3
    if cfg.bands_mode == "msi8" and dataset.bands != 8:
        print(f"error: checkpoint is {cfg.bands_mode} but dataset has "
              f"{dataset.bands} bands", file=sys.stderr)
        return EXIT_DATA
    try:
        ids = dataset.scene_ids(args.split)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not ids:
        print(f"error: split {args.split!r} is empty", file=sys.stderr)
        return EXIT_DATA

    model = build_model(cfg, dataset)
    try:
        restore_into(model.store, None, ckpt)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    band_idx = band_selection(dataset, cfg.bands_mode)
    if len(band_idx) != expected_bands:
        print(f"error: bands mode {cfg.bands_mode} needs {expected_bands} bands",
              file=sys.stderr)
        return EXIT_DATA

    def run_one(sid: str):
        x, _ = make_batch(dataset, [sid], band_idx)
        return model.predict(x)[0]

    with ThreadPoolExecutor(max_workers=_worker_threads()) as pool:
        all_dets = list(pool.map(run_one, ids))

    os.makedirs(args.out, exist_ok=True)
    det_dir = os.path.join(args.out, "detections")
    os.makedirs(det_dir, exist_ok=True)
    dets_by_image = {}
    gts_by_image = {}
    for sid, dets in zip(ids, all_dets):
        dets_by_image[sid] = dets
        gts_by_image[sid] = dataset.annotations[sid].boxes
        save_detections(os.path.join(det_dir, sid + ".txt"), dets,
                        dataset.class_names)
    result = evaluate(dets_by_image, gts_by_image, list(dataset.class_names))
    report = result.as_dict()
    report["split"] = args.split
    report["num_images"] = len(ids)
    report["checkpoint_iteration"] = ckpt.iteration
    report["config_hash"] = ckpt.config_hash()
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8",
              newline="\n") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(args.out, "metrics.txt"), "w", encoding="utf-8",
              newline="\n") as f:
        f.write(f"mAP50={result.map50!r}\nmAP75={result.map75!r}\nmAP={result.map!r}\n")
        for name, ce in sorted(result.per_class.items()):
            f.write(f"class={name} AP50={ce.ap50!r} AP75={ce.ap75!r} AP={ce.ap!r} "
                    f"gt={ce.num_gt} dets={ce.num_det}\n")
    pr_dir = os.path.join(args.out, "pr_curves")
    for name, ce in sorted(result.per_class.items()):
        svgplot.line_chart(os.path.join(pr_dir, f"{name}.svg"),
                           {name: ce.pr_curve_50 or [(0.0, 0.0)]},
                           f"PR curve (IoU 0.5): {name}",
                           "recall", "precision")
    print(f"mAP50={result.map50:.4f} mAP75={result.map75:.4f} mAP={result.map:.4f} "
          f"({len(ids)} images)")
    return EXIT_OK


def cmd_stats(args) -> int:
    from .msi import DataError, dataset_stats

    try:
        report = dataset_stats(args.dataset, plot_dir=os.path.join(args.out, "plots"))
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "stats.json"), "w", encoding="utf-8",
              newline="\n") as f:
        json.dump(report.as_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"{report.num_scenes} scenes, "
          f"{sum(report.per_class_counts.values())} instances, "
          f"{report.fraction_under_1pct:.1%} under 1% area")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(seed=args.seed)
    width = max(len(f"{r.module}: {r.name}") for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        if not r.passed:
            failures += 1
        label = f"{r.module}: {r.name}"
        detail = f"  ({r.detail})" if r.detail else ""
        print(f"{label:<{width}}  {status}{detail}")
    print(f"{len(results) - failures}/{len(results)} invariants hold")
    return EXIT_OK if failures == 0 else EXIT_VERIFY


def main(argv=None) -> int:
    # Keep BLAS pools single-threaded before numpy spins them up; worker
    # parallelism is handled explicitly via OSSDET_THREADS.
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    os.environ.setdefault("OMP_NUM_THREADS", "1")

    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
                "stats": cmd_stats, "verify": cmd_verify}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
