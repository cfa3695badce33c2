#!/usr/bin/env python3
"""Overfit experiment: generate a small set, train, evaluate on the train
split. Reproduces the end-to-end sanity loop from the acceptance suite.

Usage:
    python scripts/run_overfit.py --workdir /tmp/overfit --seed 42 \
        --scenes 8 --iterations 500
"""

import argparse
import json
import os
import subprocess
import sys

CLI = [sys.executable, "-m", "ossdet"]


def run(*args):
    print("+", " ".join(args))
    subprocess.run(CLI + list(args), check=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--scenes", type=int, default=8)
    ap.add_argument("--iterations", type=int, default=500)
    ap.add_argument("--batch-size", type=int, default=2)
    args = ap.parse_args()

    data = os.path.join(args.workdir, "data")
    train = os.path.join(args.workdir, "run")
    evald = os.path.join(args.workdir, "eval")
    run("gen", "--out", data, "--seed", str(args.seed), "--scenes",
        str(args.scenes), "--split", "1.0", "--force")
    run("train", "--dataset", data, "--out", train, "--seed", str(args.seed),
        "--iterations", str(args.iterations), "--batch-size", str(args.batch_size))
    ckpt = os.path.join(train, "checkpoints", f"ckpt_{args.iterations:07d}.ossck")
    run("eval", "--checkpoint", ckpt, "--dataset", data, "--out", evald,
        "--split", "train")
    with open(os.path.join(evald, "metrics.json")) as f:
        metrics = json.load(f)
    print(f"train-split mAP50={metrics['mAP50']:.4f} mAP={metrics['mAP']:.4f}")


if __name__ == "__main__":
    main()
