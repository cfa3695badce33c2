#!/usr/bin/env python3
"""Input-modality ablation: train the same architecture on full spectral
cubes (msi8) and on their RGB projection (rgb3), same data, same seed, same
budget, and compare test mAP50.

The built-in class table contains a metamer pair (identical in the RGB
projection bands, separated in the NIR), so the RGB run has a structural
handicap that full-spectrum input removes.
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


def train_and_eval(data, workdir, mode, seed, iterations, batch_size):
    rundir = os.path.join(workdir, f"run_{mode}")
    evaldir = os.path.join(workdir, f"eval_{mode}")
    run("train", "--dataset", data, "--out", rundir, "--seed", str(seed),
        "--iterations", str(iterations), "--batch-size", str(batch_size),
        "--bands-mode", mode)
    ckpt = os.path.join(rundir, "checkpoints", f"ckpt_{iterations:07d}.ossck")
    run("eval", "--checkpoint", ckpt, "--dataset", data, "--out", evaldir,
        "--split", "test")
    with open(os.path.join(evaldir, "metrics.json")) as f:
        return json.load(f)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--scenes", type=int, default=64)
    ap.add_argument("--iterations", type=int, default=400)
    ap.add_argument("--batch-size", type=int, default=2)
    args = ap.parse_args()

    data = os.path.join(args.workdir, "data")
    run("gen", "--out", data, "--seed", str(args.seed), "--scenes",
        str(args.scenes), "--force")
    msi = train_and_eval(data, args.workdir, "msi8", args.seed,
                         args.iterations, args.batch_size)
    rgb = train_and_eval(data, args.workdir, "rgb3", args.seed,
                         args.iterations, args.batch_size)
    gap = (msi["mAP50"] - rgb["mAP50"]) * 100
    print(f"msi8 mAP50={msi['mAP50']:.4f}  rgb3 mAP50={rgb['mAP50']:.4f}  "
          f"gap={gap:+.1f} points")
    for cls in sorted(msi["classes"]):
        print(f"  {cls:12s} msi8 AP50={msi['classes'][cls]['AP50']:.3f}  "
              f"rgb3 AP50={rgb['classes'][cls]['AP50']:.3f}")


if __name__ == "__main__":
    main()
