#!/usr/bin/env python3
"""Patch-size ablation for the spectral aggregator: train with several
neighborhood sizes k under heavy background clutter and compare test mAP50.
Oversized patches pull in unrelated spectra and should not beat small ones.
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
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--scenes", type=int, default=24)
    ap.add_argument("--iterations", type=int, default=300)
    ap.add_argument("--batch-size", type=int, default=2)
    ap.add_argument("--patch-sizes", type=int, nargs="+", default=[3, 9])
    args = ap.parse_args()

    data = os.path.join(args.workdir, "data")
    run("gen", "--out", data, "--seed", str(args.seed), "--scenes",
        str(args.scenes), "--clutter-density", "3.0", "--noise-sigma", "0.02",
        "--force")
    results = {}
    for k in args.patch_sizes:
        rundir = os.path.join(args.workdir, f"run_k{k}")
        evaldir = os.path.join(args.workdir, f"eval_k{k}")
        run("train", "--dataset", data, "--out", rundir, "--seed", str(args.seed),
            "--iterations", str(args.iterations),
            "--batch-size", str(args.batch_size), "--sacf-k", str(k))
        ckpt = os.path.join(rundir, "checkpoints",
                            f"ckpt_{args.iterations:07d}.ossck")
        run("eval", "--checkpoint", ckpt, "--dataset", data, "--out", evaldir,
            "--split", "test")
        with open(os.path.join(evaldir, "metrics.json")) as f:
            results[k] = json.load(f)["mAP50"]
    for k, v in sorted(results.items()):
        print(f"k={k}: test mAP50={v:.4f}")


if __name__ == "__main__":
    main()
